#pragma once

// Flat key = value run configuration with documented defaults.

#include <map>
#include <string>
#include <vector>

#include "common.hpp"

namespace locepi {

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"markers", "", "genotype table (csv/tsv; header of marker ids, first column line ids)"},
      {"map", "", "genetic map (marker, chromosome, position[, unit])"},
      {"pheno", "", "phenotype table (line_id, trait, value[, env])"},
      {"trait", "", "trait to analyse; empty selects the first trait (cv accepts a comma list)"},
      {"covariates", "", "line-level fixed-effect covariates (line_id, name1, ...)"},
      {"missing-code", "NA", "missing-value code in input tables"},
      {"coding", "01", "genotype coding recorded with the data: 01, 012 or -11"},
      {"regions", "", "explicit region file overriding the built hierarchy"},
      {"kernel", "gaussian", "region kernel: linear, poly or gaussian"},
      {"poly-c", "1", "polynomial kernel offset"},
      {"poly-d", "2", "polynomial kernel degree"},
      {"bandwidth", "auto", "Gaussian bandwidth h, or auto (mean squared pairwise distance)"},
      {"paper-gaussian-constant", "false", "multiply the Gaussian kernel by 1/sqrt(2 pi h)"},
      {"depth", "2", "hierarchy depth (1 = chromosomes are the leaves)"},
      {"splits", "2", "subregions per region at each level below the chromosomes"},
      {"rule", "equal-count", "split rule: equal-count or equal-length"},
      {"pcs", "5", "principal components of out-of-region markers used as fixed effects"},
      {"all-levels", "false", "use every hierarchy region as a column, not only the leaves"},
      {"lambda1", "auto", "l1 penalty on region weights, or auto (cross-validated)"},
      {"lambda2", "auto", "l2 penalty on region weights, or auto (0.1 * lambda1 when k > N, else 0)"},
      {"folds", "10", "cross-validation folds for lambda selection"},
      {"alpha", "0.05", "family-wise error level of the hierarchical tests"},
      {"null-sims", "10000", "parametric null simulations per test"},
      {"seed", "1", "master seed; every stage draws from a named sub-stream"},
      {"threads", "0", "worker threads (0 = all cores); never changes results"},
      {"out", "", "output path (directory for fit and simulate)"},
      {"model", "", "model bundle directory for predict"},
      {"models", "mk,lin,gaus", "models compared by cv"},
      {"train-frac", "0.9", "fraction of lines used for training in each cv replicate"},
      {"replicates", "30", "cv replicates"},
      {"preset", "local-epistasis", "simulation preset"},
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  static bool known(const std::string& key) {
    for (const auto& k : config_keys())
      if (key == k.name) return true;
    return false;
  }

  void set(const std::string& key, const std::string& value) {
    require(known(key), ErrorCode::UnknownConfigKey, "unknown configuration key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), ErrorCode::UnknownConfigKey, "unknown configuration key '" + key + "'");
    return it->second;
  }

  bool has(const std::string& key) const { return !get(key).empty(); }

  double get_double(const std::string& key) const {
    double v;
    require(parse_double(get(key), v), ErrorCode::InvalidArgument, key + " must be a number, got '" + get(key) + "'");
    return v;
  }

  long long get_int(const std::string& key) const {
    long long v;
    require(parse_int(get(key), v), ErrorCode::InvalidArgument, key + " must be an integer, got '" + get(key) + "'");
    return v;
  }

  bool get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off" || v.empty()) return false;
    fail(ErrorCode::InvalidArgument, key + " must be true or false, got '" + v + "'");
  }

  /// "auto" maps to nullopt.
  std::optional<double> get_auto(const std::string& key) const {
    if (get(key) == "auto") return std::nullopt;
    return get_double(key);
  }

  /// Reads `key = value` lines; `#` starts a comment.
  void load_text(std::string_view text) {
    std::size_t line_no = 0;
    for (auto raw : split(text, '\n')) {
      ++line_no;
      auto line = raw;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      require(eq != std::string_view::npos, ErrorCode::ParseError,
              "config line " + std::to_string(line_no) + " is not 'key = value'");
      set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
  }

  void load_file(const std::string& path) { load_text(read_file(path)); }

  /// Canonical text: every key in documented order.
  std::string dump(bool with_help = false) const {
    std::string out;
    for (const auto& k : config_keys()) {
      if (with_help) out += std::string("# ") + k.help + "\n";
      out += std::string(k.name) + " = " + get(k.name) + "\n";
    }
    return out;
  }

  std::string hash() const { return hex64(fnv1a(dump())); }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace locepi
