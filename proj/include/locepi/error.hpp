#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace locepi {

enum class ErrorCode {
  // input validation
  InvalidArgument,
  IoError,
  ParseError,
  DuplicateLineId,
  DuplicateMarkerId,
  DuplicateRecord,
  NonNumericGenotype,
  AllMissingMarker,
  NegativePosition,
  UnknownUnit,
  NoOverlap,
  EmptyChromosome,
  DepthTooLarge,
  ColumnMismatch,
  DimensionMismatch,
  DegenerateFolds,
  InfeasibleH2,
  TooFewTestLines,
  LengthMismatch,
  ManifestMismatch,
  UnknownConfigKey,
  // numerical failures
  ZeroVarianceInput,
  NonFiniteEntry,
  ZeroTrace,
  RankDeficient,
  SingularXstar,
  NonPsdK,
  SingularV,
  ConvergenceFailure,
  NonConvergence,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateLineId: return "DuplicateLineId";
    case ErrorCode::DuplicateMarkerId: return "DuplicateMarkerId";
    case ErrorCode::DuplicateRecord: return "DuplicateRecord";
    case ErrorCode::NonNumericGenotype: return "NonNumericGenotype";
    case ErrorCode::AllMissingMarker: return "AllMissingMarker";
    case ErrorCode::NegativePosition: return "NegativePosition";
    case ErrorCode::UnknownUnit: return "UnknownUnit";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::EmptyChromosome: return "EmptyChromosome";
    case ErrorCode::DepthTooLarge: return "DepthTooLarge";
    case ErrorCode::ColumnMismatch: return "ColumnMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateFolds: return "DegenerateFolds";
    case ErrorCode::InfeasibleH2: return "InfeasibleH2";
    case ErrorCode::TooFewTestLines: return "TooFewTestLines";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::UnknownConfigKey: return "UnknownConfigKey";
    case ErrorCode::ZeroVarianceInput: return "ZeroVarianceInput";
    case ErrorCode::NonFiniteEntry: return "NonFiniteEntry";
    case ErrorCode::ZeroTrace: return "ZeroTrace";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::SingularXstar: return "SingularXstar";
    case ErrorCode::NonPsdK: return "NonPsdK";
    case ErrorCode::SingularV: return "SingularV";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::NonConvergence: return "NonConvergence";
  }
  return "Unknown";
}

/// True for failures of the numerics rather than of the caller's input.
inline bool is_numerical(ErrorCode code) {
  return code >= ErrorCode::ZeroVarianceInput;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace locepi
