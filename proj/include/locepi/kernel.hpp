#pragma once

// Gram matrices from marker submatrices: linear, polynomial and Gaussian.

#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace locepi {

enum class KernelKind { Linear, Polynomial, Gaussian };

inline KernelKind parse_kernel_kind(std::string_view s) {
  if (s == "linear" || s == "lin") return KernelKind::Linear;
  if (s == "poly" || s == "polynomial") return KernelKind::Polynomial;
  if (s == "gaussian" || s == "gaus") return KernelKind::Gaussian;
  fail(ErrorCode::InvalidArgument, "unknown kernel '" + std::string(s) + "' (expected linear|poly|gaussian)");
}

inline std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::Linear: return "linear";
    case KernelKind::Polynomial: return "poly";
    case KernelKind::Gaussian: return "gaussian";
  }
  return "linear";
}

struct KernelSpec {
  KernelKind kind = KernelKind::Gaussian;
  double c = 1.0;  // polynomial offset
  int d = 2;       // polynomial degree
  std::optional<double> h;  // Gaussian bandwidth; nullopt means Auto
  bool include_gaussian_norm_constant = false;

  void validate() const {
    require(d >= 1, ErrorCode::InvalidArgument, "polynomial degree must be >= 1");
    require(!h || *h > 0.0, ErrorCode::InvalidArgument, "Gaussian bandwidth must be > 0");
  }

  static KernelSpec linear() { return {KernelKind::Linear, 1.0, 2, std::nullopt, false}; }
  static KernelSpec polynomial(double c, int d) { return {KernelKind::Polynomial, c, d, std::nullopt, false}; }
  static KernelSpec gaussian(std::optional<double> h = std::nullopt, bool norm_constant = false) {
    return {KernelKind::Gaussian, 1.0, 2, h, norm_constant};
  }
};

struct KernelMatrix {
  MatrixXd values;
  std::vector<std::string> subject_ids;
  KernelSpec spec;
  double bandwidth = std::numeric_limits<double>::quiet_NaN();  // Gaussian h actually used
  bool normalized = false;
  double scale = 1.0;  // factor applied by normalize()

  Index size() const { return values.rows(); }
};

/// Mean squared Euclidean distance over all unordered pairs of rows.
inline double mean_pairwise_sq_distance(const MatrixXd& rows) {
  const Index q = rows.rows();
  require(q >= 2, ErrorCode::InvalidArgument, "bandwidth needs at least two rows");
  // sum_{i<j} |x_i - x_j|^2 = q * sum_i |x_i|^2 - |sum_i x_i|^2
  const VectorXd colsum = rows.colwise().sum().transpose();
  const double total = static_cast<double>(q) * rows.squaredNorm() - colsum.squaredNorm();
  return std::max(0.0, total) / (0.5 * static_cast<double>(q) * static_cast<double>(q - 1));
}

namespace detail {

/// Squared distances between rows of a and rows of b (|a|^2 + |b|^2 - 2ab'),
/// clamped at zero.
inline MatrixXd sq_distances(const MatrixXd& a, const MatrixXd& b) {
  const VectorXd na = a.rowwise().squaredNorm();
  const VectorXd nb = b.rowwise().squaredNorm();
  MatrixXd d = -2.0 * (a * b.transpose());
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

inline void apply_gaussian(MatrixXd& sq, double h, bool norm_constant) {
  sq = (-sq.array() / (2.0 * h)).exp().matrix();
  if (norm_constant) sq *= 1.0 / std::sqrt(2.0 * std::numbers::pi * h);
}

inline void check_finite(const MatrixXd& m, const char* what) {
  require(m.allFinite(), ErrorCode::NonFiniteEntry, std::string(what) + " has non-finite entries");
}

}  // namespace detail

/// Gram matrix of the rows of `rows` (subjects x markers).
inline KernelMatrix gram(const MatrixXd& rows, const KernelSpec& spec) {
  spec.validate();
  require(rows.cols() >= 1, ErrorCode::InvalidArgument, "gram needs at least one marker");
  require(rows.rows() >= 2, ErrorCode::InvalidArgument, "gram needs at least two subjects");
  detail::check_finite(rows, "marker submatrix");
  KernelMatrix k;
  k.spec = spec;
  const Index q = rows.rows();
  switch (spec.kind) {
    case KernelKind::Linear:
      k.values = MatrixXd::Zero(q, q);
      k.values.selfadjointView<Eigen::Lower>().rankUpdate(rows);
      k.values.triangularView<Eigen::StrictlyUpper>() = k.values.transpose();
      break;
    case KernelKind::Polynomial:
      k.values = MatrixXd::Zero(q, q);
      k.values.selfadjointView<Eigen::Lower>().rankUpdate(rows);
      k.values.triangularView<Eigen::StrictlyUpper>() = k.values.transpose();
      k.values = (k.values.array() + spec.c).pow(static_cast<double>(spec.d)).matrix();
      break;
    case KernelKind::Gaussian: {
      double h;
      if (spec.h) {
        h = *spec.h;
      } else {
        h = mean_pairwise_sq_distance(rows);
        require(h > 0.0, ErrorCode::ZeroVarianceInput, "all rows identical; automatic bandwidth undefined");
      }
      k.bandwidth = h;
      k.values = detail::sq_distances(rows, rows);
      k.values.diagonal().setZero();
      k.values = 0.5 * (k.values + k.values.transpose());
      detail::apply_gaussian(k.values, h, spec.include_gaussian_norm_constant);
      break;
    }
  }
  detail::check_finite(k.values, "kernel matrix");
  return k;
}

/// Scales K by q / trace(K) so the mean diagonal is one.
inline KernelMatrix normalize(KernelMatrix k) {
  const double tr = k.values.trace();
  require(tr > 0.0 && std::isfinite(tr), ErrorCode::ZeroTrace, "kernel trace is not positive");
  const double s = static_cast<double>(k.size()) / tr;
  k.values *= s;
  k.scale *= s;
  k.normalized = true;
  return k;
}

/// Kernel between new rows and training rows (t x q). `bandwidth` is the
/// Gaussian h fixed at training time; `scale` the training normalization.
inline MatrixXd cross_gram(const MatrixXd& train_rows, const MatrixXd& new_rows, const KernelSpec& spec,
                           double bandwidth = std::numeric_limits<double>::quiet_NaN(), double scale = 1.0) {
  require(train_rows.cols() == new_rows.cols(), ErrorCode::ColumnMismatch,
          "cross_gram: " + std::to_string(new_rows.cols()) + " marker columns vs " + std::to_string(train_rows.cols()) +
              " in training");
  detail::check_finite(new_rows, "new marker rows");
  MatrixXd out;
  switch (spec.kind) {
    case KernelKind::Linear:
      out = new_rows * train_rows.transpose();
      break;
    case KernelKind::Polynomial:
      out = ((new_rows * train_rows.transpose()).array() + spec.c).pow(static_cast<double>(spec.d)).matrix();
      break;
    case KernelKind::Gaussian: {
      const double h = spec.h ? *spec.h : bandwidth;
      require(h > 0.0, ErrorCode::InvalidArgument, "cross_gram needs the training bandwidth");
      out = detail::sq_distances(new_rows, train_rows);
      detail::apply_gaussian(out, h, spec.include_gaussian_norm_constant);
      break;
    }
  }
  out *= scale;
  detail::check_finite(out, "cross kernel");
  return out;
}

/// Smallest eigenvalue is at least -tol * largest.
inline bool is_psd(const MatrixXd& k, double tol = 1e-8) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(k, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return ev.minCoeff() >= -tol * std::max(std::abs(ev.maxCoeff()), 1e-300);
}

}  // namespace locepi
