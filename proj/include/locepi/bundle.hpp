#pragma once

// Plain-text model bundle: a directory of versioned TSV files plus a manifest.
//
//   manifest.tsv          key/value: format version, command, config hash, seed, input checksums
//   config.txt            full run configuration
//   regions.tsv           region file (region_id, parent_id, marker_id)
//   training_markers.tsv  imputed genotypes of the training lines
//   region_models.tsv     per model region: variances, flags, kernel bandwidth/scale, column statistics
//   dual_weights.tsv      per training line and region: weights w with g_new = K(new, train) w
//   fixed_effects.tsv     per region fixed-effect coefficients (intercept, covariates, PCs)
//   pc_bases/<j>.tsv      out-of-region principal component loadings of model region j
//   combiner.tsv          intercept, penalties, region weights, covariate coefficients
//   importance.tsv        region_id, chromosome, start_pos, end_pos, importance (descending)
//   cv_path.tsv           lambda1, lambda2, cv_error

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "combiner.hpp"
#include "config.hpp"
#include "local_gebv.hpp"

namespace locepi {

inline constexpr const char* kBundleFormat = "locepi-bundle-1";
inline constexpr const char* kVersion = "1.0.0";

namespace fs = std::filesystem;

/// Writes a manifest: config hash, seed and checksums of every input file.
inline void write_manifest(const std::string& path, const std::string& command, const RunConfig& cfg,
                           const std::vector<std::string>& input_keys,
                           const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  out << "key\tvalue\n";
  out << "format\t" << kBundleFormat << '\n';
  out << "version\t" << kVersion << '\n';
  out << "command\t" << command << '\n';
  out << "config_hash\t" << cfg.hash() << '\n';
  out << "seed\t" << cfg.get("seed") << '\n';
  for (const auto& key : input_keys)
    if (cfg.has(key)) out << "input." << key << '\t' << cfg.get(key) << '\t' << file_checksum(cfg.get(key)) << '\n';
  for (const auto& [k, v] : extra) out << k << '\t' << v << '\n';
}

inline std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path);
  std::string line;
  while (detail::getline_trimmed(in, line)) {
    const auto f = split(line, '\t');
    if (f.size() >= 2) kv[std::string(f[0])] = std::string(f[1]);
  }
  return kv;
}

inline KernelSpec kernel_from_config(const RunConfig& cfg) {
  KernelSpec s;
  s.kind = parse_kernel_kind(cfg.get("kernel"));
  s.c = cfg.get_double("poly-c");
  s.d = static_cast<int>(cfg.get_int("poly-d"));
  s.h = cfg.get_auto("bandwidth");
  s.include_gaussian_norm_constant = cfg.get_bool("paper-gaussian-constant");
  s.validate();
  return s;
}

struct ImportanceEntry {
  std::string region_id;
  std::string chromosome;
  double start_pos;
  double end_pos;
  double importance;
};

inline std::vector<ImportanceEntry> importance_table(const CombinerModel& m, const RegionHierarchy& h,
                                                     const std::vector<std::string>& region_ids) {
  std::vector<ImportanceEntry> out;
  for (const auto& row : importance_scores(m, region_ids)) {
    const auto& r = h.at(row.region_id);
    out.push_back({row.region_id, r.chromosome.empty() ? "NA" : r.chromosome, r.start_pos, r.end_pos, row.importance});
  }
  return out;
}

inline void write_importance(const std::string& path, const std::vector<ImportanceEntry>& rows) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  out << "region_id\tchromosome\tstart_pos\tend_pos\timportance\n";
  for (const auto& r : rows)
    out << r.region_id << '\t' << r.chromosome << '\t' << format_double(r.start_pos) << '\t' << format_double(r.end_pos)
        << '\t' << format_double(r.importance) << '\n';
}

struct ModelBundle {
  RunConfig config;
  MarkerMatrix training_markers;
  RegionHierarchy hierarchy;
  LocalGebvModel local;
  CombinerModel combiner;
  std::vector<std::string> covariate_names;
};

namespace detail {

inline void write_matrix_tsv(const std::string& path, const std::vector<std::string>& header,
                             const std::vector<std::string>& row_ids, const MatrixXd& m) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "\t" : "") << header[j];
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    out << row_ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < m.cols(); ++j) out << '\t' << format_double(m(i, j));
    out << '\n';
  }
}

/// Reads a TSV with a header row and a leading id column into (ids, matrix).
inline std::pair<std::vector<std::string>, MatrixXd> read_matrix_tsv(const std::string& path,
                                                                     std::vector<std::string>* header = nullptr) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path);
  std::string line;
  require(getline_trimmed(in, line), ErrorCode::ParseError, path + " is empty");
  const auto h = split(line, '\t');
  if (header) {
    header->clear();
    for (const auto& f : h) header->emplace_back(f);
  }
  std::vector<std::string> ids;
  std::vector<double> vals;
  const std::size_t cols = h.size() - 1;
  while (getline_trimmed(in, line)) {
    if (blank(line)) continue;
    const auto f = split(line, '\t');
    require(f.size() == h.size(), ErrorCode::ParseError, "ragged row in " + path);
    ids.emplace_back(f[0]);
    for (std::size_t j = 1; j < f.size(); ++j) {
      double v;
      require(parse_double(f[j], v) || f[j] == "NA", ErrorCode::ParseError, "bad number in " + path);
      vals.push_back(f[j] == "NA" ? std::numeric_limits<double>::quiet_NaN() : v);
    }
  }
  MatrixXd m(static_cast<Index>(ids.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = vals[i * cols + j];
  return {ids, m};
}

inline double parse_number_or_nan(std::string_view s) {
  if (s == "NA" || s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v;
  require(parse_double(s, v), ErrorCode::ParseError, "bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

/// Writes the fitted pipeline. `markers` is the full matrix the model was
/// trained on; only the training lines are persisted.
inline void save_bundle(const std::string& dir, const RunConfig& cfg, const MarkerMatrix& markers,
                        const RegionHierarchy& h, const LocalGebvModel& local, const CombinerModel& comb,
                        const std::vector<std::string>& covariate_names) {
  fs::create_directories(fs::path(dir) / "pc_bases");
  {
    std::ofstream out(dir + "/config.txt");
    out << cfg.dump();
  }
  write_regions(dir + "/regions.tsv", h, markers);
  write_markers(dir + "/training_markers.tsv", markers.select_lines(local.train_rows), TableFormat::Tsv);

  const Index k = static_cast<Index>(local.regions.size());
  {
    std::ofstream out(dir + "/region_models.tsv");
    out << "index\tregion_id\tfailed\tflagged\tboundary\tsigma2_g\tsigma2_e\tdelta\treml_loglik\tnull_loglik\t"
           "bandwidth\tscale\tcol_mean\tcol_sd\tn_pcs\tn_markers\n";
    for (Index j = 0; j < k; ++j) {
      const auto& st = local.regions[static_cast<std::size_t>(j)];
      out << j << '\t' << st.region_id << '\t' << (st.failed ? 1 : 0) << '\t'
          << static_cast<int>(local.gebv.flagged[static_cast<std::size_t>(j)]) << '\t' << to_string(st.fit.boundary)
          << '\t' << format_double(st.fit.sigma2_g) << '\t' << format_double(st.fit.sigma2_e) << '\t'
          << format_double(st.fit.delta) << '\t' << format_double(st.fit.reml_loglik) << '\t'
          << format_double(st.fit.null_loglik) << '\t' << format_double(st.bandwidth) << '\t'
          << format_double(st.scale) << '\t' << format_double(local.gebv.col_means[j]) << '\t'
          << format_double(local.gebv.col_sds[j]) << '\t' << st.pcs.r() << '\t' << st.columns.size() << '\n';
    }
  }
  {
    MatrixXd dual(static_cast<Index>(local.train_rows.size()), k);
    std::vector<std::string> header{"line_id"};
    for (Index j = 0; j < k; ++j) {
      dual.col(j) = local.regions[static_cast<std::size_t>(j)].fit.dual;
      header.push_back(local.regions[static_cast<std::size_t>(j)].region_id);
    }
    detail::write_matrix_tsv(dir + "/dual_weights.tsv", header, local.gebv.line_ids, dual);
  }
  {
    std::ofstream out(dir + "/fixed_effects.tsv");
    out << "region_id\tterm\tvalue\n";
    for (const auto& st : local.regions)
      for (Index t = 0; t < st.fit.beta_star.size(); ++t)
        out << st.region_id << '\t' << t << '\t' << format_double(st.fit.beta_star[t]) << '\n';
  }
  for (Index j = 0; j < k; ++j) {
    const auto& pc = local.regions[static_cast<std::size_t>(j)].pcs;
    if (pc.r() == 0) continue;
    std::vector<std::string> header{"marker_id", "mean"}, ids;
    MatrixXd m(pc.loadings.rows(), 1 + pc.r());
    m.col(0) = pc.means;
    m.rightCols(pc.r()) = pc.loadings;
    for (Index c = 0; c < pc.r(); ++c) header.push_back("pc" + std::to_string(c + 1));
    for (Index c : pc.columns) ids.push_back(markers.marker_ids[static_cast<std::size_t>(c)]);
    detail::write_matrix_tsv(dir + "/pc_bases/" + std::to_string(j) + ".tsv", header, ids, m);
  }
  {
    std::ofstream out(dir + "/combiner.tsv");
    out << "kind\tname\tvalue\n";
    out << "intercept\tbeta0\t" << format_double(comb.beta0) << '\n';
    out << "penalty\tlambda1\t" << format_double(comb.lambda1) << '\n';
    out << "penalty\tlambda2\t" << format_double(comb.lambda2) << '\n';
    for (Index j = 0; j < comb.k(); ++j)
      out << "alpha\t" << local.regions[static_cast<std::size_t>(j)].region_id << '\t' << format_double(comb.alpha[j])
          << '\n';
    for (Index j = 0; j < comb.beta.size(); ++j)
      out << "beta\t" << covariate_names[static_cast<std::size_t>(j)] << '\t' << format_double(comb.beta[j]) << '\n';
  }
  {
    std::vector<std::string> ids;
    for (const auto& st : local.regions) ids.push_back(st.region_id);
    write_importance(dir + "/importance.tsv", importance_table(comb, h, ids));
  }
  {
    std::ofstream out(dir + "/cv_path.tsv");
    out << "lambda1\tlambda2\tcv_error\n";
    for (const auto& p : comb.cv_path)
      out << format_double(p.lambda1) << '\t' << format_double(p.lambda2) << '\t' << format_double(p.cv_error) << '\n';
  }
}

inline ModelBundle load_bundle(const std::string& dir) {
  const auto manifest = read_key_values(dir + "/manifest.tsv");
  require(manifest.count("format") && manifest.at("format") == kBundleFormat, ErrorCode::ManifestMismatch,
          dir + " is not a model bundle of format " + kBundleFormat);
  ModelBundle b;
  b.config.load_file(dir + "/config.txt");
  b.training_markers = parse_markers(dir + "/training_markers.tsv", TableFormat::Tsv, "NA");
  b.hierarchy = read_regions(dir + "/regions.tsv", b.training_markers);
  auto& local = b.local;
  local.kernel = kernel_from_config(b.config);
  for (Index i = 0; i < b.training_markers.n_lines(); ++i) local.train_rows.push_back(i);

  std::vector<std::string> header;
  auto [lines, dual] = detail::read_matrix_tsv(dir + "/dual_weights.tsv", &header);
  const Index k = dual.cols();
  local.regions.resize(static_cast<std::size_t>(k));
  auto& g = local.gebv;
  g.line_ids = lines;
  g.col_means = VectorXd::Zero(k);
  g.col_sds = VectorXd::Zero(k);
  g.flagged.assign(static_cast<std::size_t>(k), 0);
  {
    std::ifstream in(dir + "/region_models.tsv");
    require(static_cast<bool>(in), ErrorCode::IoError, "bundle lacks region_models.tsv");
    std::string line;
    detail::getline_trimmed(in, line);
    Index j = 0;
    while (detail::getline_trimmed(in, line)) {
      if (detail::blank(line)) continue;
      const auto f = split(line, '\t');
      require(f.size() == 16 && j < k, ErrorCode::ParseError, "malformed region_models.tsv");
      auto& st = local.regions[static_cast<std::size_t>(j)];
      st.region_id = std::string(f[1]);
      require(st.region_id == header[static_cast<std::size_t>(j) + 1], ErrorCode::ManifestMismatch,
              "region order differs between region_models.tsv and dual_weights.tsv");
      st.failed = f[2] == "1";
      g.flagged[static_cast<std::size_t>(j)] = f[3] == "1" ? 1 : 0;
      st.fit.region_id = st.region_id;
      st.fit.boundary = parse_boundary(f[4]);
      st.fit.sigma2_g = detail::parse_number_or_nan(f[5]);
      st.fit.sigma2_e = detail::parse_number_or_nan(f[6]);
      st.fit.delta = detail::parse_number_or_nan(f[7]);
      st.fit.reml_loglik = detail::parse_number_or_nan(f[8]);
      st.fit.null_loglik = detail::parse_number_or_nan(f[9]);
      st.bandwidth = detail::parse_number_or_nan(f[10]);
      st.scale = detail::parse_number_or_nan(f[11]);
      g.col_means[j] = detail::parse_number_or_nan(f[12]);
      g.col_sds[j] = detail::parse_number_or_nan(f[13]);
      st.fit.dual = dual.col(j);
      st.columns = b.hierarchy.at(st.region_id).marker_indices;
      g.region_ids.push_back(st.region_id);
      ++j;
    }
    require(j == k, ErrorCode::ManifestMismatch, "region_models.tsv lists fewer regions than dual_weights.tsv");
  }
  {
    std::ifstream in(dir + "/combiner.tsv");
    require(static_cast<bool>(in), ErrorCode::IoError, "bundle lacks combiner.tsv");
    std::string line;
    detail::getline_trimmed(in, line);
    std::vector<double> alpha, beta;
    while (detail::getline_trimmed(in, line)) {
      if (detail::blank(line)) continue;
      const auto f = split(line, '\t');
      require(f.size() == 3, ErrorCode::ParseError, "malformed combiner.tsv");
      const double v = detail::parse_number_or_nan(f[2]);
      if (f[0] == "intercept") b.combiner.beta0 = v;
      else if (f[1] == "lambda1") b.combiner.lambda1 = v;
      else if (f[1] == "lambda2") b.combiner.lambda2 = v;
      else if (f[0] == "alpha") alpha.push_back(v);
      else if (f[0] == "beta") {
        beta.push_back(v);
        b.covariate_names.emplace_back(f[1]);
      }
    }
    b.combiner.alpha = Eigen::Map<VectorXd>(alpha.data(), static_cast<Index>(alpha.size()));
    b.combiner.beta = Eigen::Map<VectorXd>(beta.data(), static_cast<Index>(beta.size()));
    b.combiner.importance = b.combiner.alpha.cwiseAbs();
    require(b.combiner.k() == k, ErrorCode::ManifestMismatch, "combiner and region models disagree on k");
  }
  return b;
}

/// Reorders the columns of `fresh` to the bundle's marker order. Any marker
/// missing from, or unknown to, the bundle is a ManifestMismatch.
inline MarkerMatrix conform_markers(const MarkerMatrix& fresh, const MarkerMatrix& reference) {
  const auto have = fresh.marker_lookup();
  const auto want = reference.marker_lookup();
  std::vector<std::string> extra, missing;
  for (const auto& id : fresh.marker_ids)
    if (!want.count(id)) extra.push_back(id);
  for (const auto& id : reference.marker_ids)
    if (!have.count(id)) missing.push_back(id);
  if (!extra.empty() || !missing.empty()) {
    auto list = [](const std::vector<std::string>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size() && i < 20; ++i) s += (i ? "," : "") + v[i];
      if (v.size() > 20) s += ",...";
      return s;
    };
    fail(ErrorCode::ManifestMismatch, "marker set differs from the model: unknown markers [" + list(extra) +
                                          "], missing markers [" + list(missing) + "]");
  }
  MarkerMatrix out;
  out.line_ids = fresh.line_ids;
  out.marker_ids = reference.marker_ids;
  out.coding = fresh.coding;
  out.values.resize(fresh.n_lines(), reference.n_markers());
  out.imputed_fraction.resize(reference.n_markers());
  for (Index j = 0; j < reference.n_markers(); ++j) {
    const Index src = have.at(reference.marker_ids[static_cast<std::size_t>(j)]);
    out.values.col(j) = fresh.values.col(src);
    out.imputed_fraction[j] = fresh.imputed_fraction.size() ? fresh.imputed_fraction[src] : 0.0;
  }
  return out;
}

struct Prediction {
  std::vector<std::string> line_ids;
  VectorXd genotypic;
  VectorXd full;  // NaN when the model has covariates the caller did not supply
};

inline Prediction predict_bundle(const ModelBundle& b, const MarkerMatrix& fresh_raw,
                                 const FixedEffectTable* covariates = nullptr, int threads = 1) {
  const MarkerMatrix fresh = conform_markers(fresh_raw, b.training_markers);
  std::vector<Index> rows(static_cast<std::size_t>(fresh.n_lines()));
  for (Index i = 0; i < fresh.n_lines(); ++i) rows[static_cast<std::size_t>(i)] = i;
  const MatrixXd g = local_gebv_for_new(b.local, b.training_markers, fresh, rows, threads);
  Prediction p;
  p.line_ids = fresh.line_ids;
  p.genotypic = predict_genotypic(b.combiner, g);
  p.full = p.genotypic.array() + b.combiner.beta0;
  if (b.combiner.beta.size() > 0) {
    if (!covariates) {
      p.full.setConstant(std::numeric_limits<double>::quiet_NaN());
    } else {
      std::unordered_map<std::string, Index> row_of;
      for (std::size_t i = 0; i < covariates->line_ids.size(); ++i) row_of.emplace(covariates->line_ids[i], static_cast<Index>(i));
      require(covariates->design.cols() == b.combiner.beta.size(), ErrorCode::DimensionMismatch,
              "covariate table has the wrong number of columns");
      for (Index i = 0; i < fresh.n_lines(); ++i) {
        const auto it = row_of.find(p.line_ids[static_cast<std::size_t>(i)]);
        p.full[i] = it == row_of.end() ? std::numeric_limits<double>::quiet_NaN()
                                       : p.full[i] + covariates->design.row(it->second).dot(b.combiner.beta);
      }
    }
  }
  return p;
}

inline void write_predictions(const std::string& path, const Prediction& p) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  out << "line_id\tgenotypic_value\tfull_prediction\n";
  for (std::size_t i = 0; i < p.line_ids.size(); ++i)
    out << p.line_ids[i] << '\t' << format_double(p.genotypic[static_cast<Index>(i)]) << '\t'
        << format_double(p.full[static_cast<Index>(i)]) << '\n';
}

}  // namespace locepi
