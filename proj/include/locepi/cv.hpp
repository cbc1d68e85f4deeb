#pragma once

// Repeated train/test evaluation of the multi-kernel pipeline against
// whole-genome single-kernel baselines, and clustering of traits by their
// region importance profiles.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "combiner.hpp"
#include "local_gebv.hpp"

namespace locepi {

enum class CvModel { MK, LinearSingle, GaussianSingle };

inline std::string_view to_string(CvModel m) {
  switch (m) {
    case CvModel::MK: return "mk";
    case CvModel::LinearSingle: return "lin";
    case CvModel::GaussianSingle: return "gaus";
  }
  return "mk";
}

inline CvModel parse_cv_model(std::string_view s) {
  if (s == "mk") return CvModel::MK;
  if (s == "lin" || s == "linear") return CvModel::LinearSingle;
  if (s == "gaus" || s == "gaussian") return CvModel::GaussianSingle;
  fail(ErrorCode::InvalidArgument, "unknown model '" + std::string(s) + "' (expected mk|lin|gaus)");
}

struct CvConfig {
  std::vector<CvModel> models{CvModel::MK, CvModel::LinearSingle, CvModel::GaussianSingle};
  double train_frac = 0.9;
  int replicates = 30;
  std::uint64_t seed = 0;
  RegionModelOptions region;  // multi-kernel region models
  CombinerOptions combiner;
  KernelSpec gaussian_baseline = KernelSpec::gaussian();
  int threads = 1;  // replicates run concurrently

  void validate() const {
    require(train_frac > 0.5 && train_frac < 0.95, ErrorCode::InvalidArgument, "train fraction must lie in (0.5, 0.95)");
    require(replicates >= 1, ErrorCode::InvalidArgument, "need at least one replicate");
    require(!models.empty(), ErrorCode::InvalidArgument, "no models selected");
  }
};

struct CvRecord {
  int replicate = 0;
  CvModel model = CvModel::MK;
  double accuracy = 0.0;  // Pearson(test phenotypes, estimated genotypic values)
  double rmse = 0.0;      // test phenotypes vs full predictions
  std::uint64_t seed = 0;
  Index n_train = 0;
  Index n_test = 0;
};

struct CvSummary {
  double mean = 0.0;
  double sd = 0.0;
  int n = 0;
};

struct CvReport {
  std::vector<CvRecord> records;  // replicate-major, models in configured order
  std::vector<std::string> region_ids;
  MatrixXd importance;  // replicates x k (multi-kernel model only)
  VectorXd mean_importance;
  double train_frac = 0.0;
  int replicates = 0;

  CvSummary summary(CvModel m) const {
    std::vector<double> acc;
    for (const auto& r : records)
      if (r.model == m) acc.push_back(r.accuracy);
    CvSummary s;
    s.n = static_cast<int>(acc.size());
    if (acc.empty()) return s;
    const VectorXd v = Eigen::Map<const VectorXd>(acc.data(), static_cast<Index>(acc.size()));
    s.mean = v.mean();
    s.sd = sample_sd(v);
    return s;
  }
};

/// Restricts an alignment to the given phenotyped-line positions (kept in
/// their original order); observations of other lines are dropped.
inline Alignment subset_alignment(const Alignment& a, std::vector<Index> positions) {
  std::sort(positions.begin(), positions.end());
  std::vector<Index> new_pos(a.lines.size(), -1);
  Alignment out;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    new_pos[static_cast<std::size_t>(positions[k])] = static_cast<Index>(k);
    out.lines.push_back(a.lines[static_cast<std::size_t>(positions[k])]);
  }
  std::vector<double> y;
  for (std::size_t o = 0; o < a.obs_line.size(); ++o) {
    const Index np = new_pos[static_cast<std::size_t>(a.obs_line[o])];
    if (np < 0) continue;
    out.obs_line.push_back(np);
    y.push_back(a.y[static_cast<Index>(o)]);
  }
  out.y = Eigen::Map<VectorXd>(y.data(), static_cast<Index>(y.size()));
  return out;
}

/// Whole-genome single-kernel fit: intercept and covariates as fixed effects.
struct SingleKernelModel {
  FittedRegionModel fit;
  KernelSpec spec;
  std::vector<Index> columns;
  std::vector<Index> train_rows;
  double bandwidth = std::numeric_limits<double>::quiet_NaN();
  double scale = 1.0;
};

inline SingleKernelModel fit_single_kernel(const TrainingData& data, const KernelSpec& spec,
                                           const std::vector<Index>& columns, const RemlSearch& search = {}) {
  SingleKernelModel m;
  m.spec = spec;
  m.columns = columns;
  m.train_rows = data.lines();
  KernelMatrix k = normalize(gram(data.markers->slice(m.train_rows, columns), spec));
  m.bandwidth = k.bandwidth;
  m.scale = k.scale;
  SpmmProblem p;
  p.y = data.alignment.y;
  p.xstar.resize(data.n_obs(), 1 + data.covariates.cols());
  p.xstar.col(0).setOnes();
  p.xstar.rightCols(data.covariates.cols()) = data.covariates;
  p.z = data.alignment.incidence();
  p.k = std::move(k.values);
  m.fit = fit_reml(p, search, "whole-genome");
  return m;
}

inline VectorXd predict_single_kernel(const SingleKernelModel& m, const MarkerMatrix& markers,
                                      const std::vector<Index>& rows) {
  const MatrixXd train = markers.slice(m.train_rows, m.columns);
  const MatrixXd fresh = markers.slice(rows, m.columns);
  return predict_local(m.fit, cross_gram(train, fresh, m.spec, m.bandwidth, m.scale));
}

inline std::vector<Index> all_columns(const MarkerMatrix& markers) {
  std::vector<Index> cols(static_cast<std::size_t>(markers.n_markers()));
  for (Index j = 0; j < markers.n_markers(); ++j) cols[static_cast<std::size_t>(j)] = j;
  return cols;
}

/// Trained multi-kernel pipeline: local-GEBV models plus the combiner.
struct MkModel {
  LocalGebvModel local;
  CombinerModel combiner;
};

inline MkModel fit_mk(const TrainingData& data, const RegionHierarchy& h, const RegionModelOptions& ropt,
                      CombinerOptions copt) {
  MkModel m;
  m.local = fit_all_regions(data, h, ropt);
  const MatrixXd g_obs = data.alignment.expand_rows(m.local.gebv.values);
  copt.groups = data.alignment.obs_line;
  m.combiner = fit_combiner(g_obs, data.covariates, data.alignment.y, copt);
  return m;
}

namespace detail {

inline double rmse(const VectorXd& a, const VectorXd& b) {
  return a.size() ? std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size())) : 0.0;
}

}  // namespace detail

/// Runs `replicates` random line splits. Each replicate draws its split from
/// its own derived seed, so results do not depend on scheduling.
inline CvReport run_cv(const MarkerMatrix& markers, const PhenotypeTable& phenos, const std::string& trait,
                       const RegionHierarchy& h, const CvConfig& cfg, const FixedEffectTable* fixed = nullptr) {
  cfg.validate();
  const Alignment full = align(markers, phenos, trait);
  const Index q = full.n_lines();
  const Index n_train = static_cast<Index>(std::llround(cfg.train_frac * static_cast<double>(q)));
  require(q - n_train >= 10, ErrorCode::TooFewTestLines,
          "only " + std::to_string(q - n_train) + " test lines per split (need >= 10)");
  const bool with_mk = std::find(cfg.models.begin(), cfg.models.end(), CvModel::MK) != cfg.models.end();
  const auto regions = model_regions(h, cfg.region.all_levels);

  CvReport report;
  report.train_frac = cfg.train_frac;
  report.replicates = cfg.replicates;
  for (const auto* r : regions) report.region_ids.push_back(r->id);
  report.importance = MatrixXd::Zero(cfg.replicates, static_cast<Index>(regions.size()));
  std::vector<std::vector<CvRecord>> per_rep(static_cast<std::size_t>(cfg.replicates));

  parallel_for(cfg.replicates, cfg.threads, [&](Index rep) {
    const std::uint64_t rseed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
    Rng rng(derive_seed(rseed, "split"));
    const auto perm = permutation(rng, q);
    std::vector<Index> train_pos(perm.begin(), perm.begin() + n_train);
    std::vector<Index> test_pos(perm.begin() + n_train, perm.end());
    const Alignment train_a = subset_alignment(full, train_pos);
    const Alignment test_a = subset_alignment(full, test_pos);
    MatrixXd train_x, test_x;
    if (fixed) {
      train_x = covariates_for(*fixed, markers, train_a);
      test_x = covariates_for(*fixed, markers, test_a);
    } else {
      train_x.resize(train_a.n_obs(), 0);
      test_x.resize(test_a.n_obs(), 0);
    }
    const TrainingData data = make_training_data(markers, train_a, train_x);
    auto& recs = per_rep[static_cast<std::size_t>(rep)];
    for (CvModel model : cfg.models) {
      VectorXd genotypic, full_pred;
      if (model == CvModel::MK) {
        CombinerOptions copt = cfg.combiner;
        copt.seed = derive_seed(rseed, "combiner");
        copt.threads = 1;
        RegionModelOptions ropt = cfg.region;
        ropt.threads = 1;
        const MkModel mk = fit_mk(data, h, ropt, copt);
        const MatrixXd g_test = local_gebv_for_new(mk.local, markers, markers, test_a.lines);
        genotypic = test_a.expand(predict_genotypic(mk.combiner, g_test));
        full_pred = predict_full(mk.combiner, test_a.expand_rows(g_test), test_x);
        report.importance.row(rep) = mk.combiner.importance.transpose();
      } else {
        const KernelSpec spec = model == CvModel::LinearSingle ? KernelSpec::linear() : cfg.gaussian_baseline;
        const auto sk = fit_single_kernel(data, spec, all_columns(markers), cfg.region.search);
        genotypic = test_a.expand(predict_single_kernel(sk, markers, test_a.lines));
        MatrixXd x(test_a.n_obs(), 1 + test_x.cols());
        x.col(0).setOnes();
        x.rightCols(test_x.cols()) = test_x;
        full_pred = genotypic + x * sk.fit.beta_star;
      }
      CvRecord r;
      r.replicate = static_cast<int>(rep);
      r.model = model;
      r.accuracy = pearson(test_a.y, genotypic);
      r.rmse = detail::rmse(test_a.y, full_pred);
      r.seed = rseed;
      r.n_train = train_a.n_lines();
      r.n_test = test_a.n_lines();
      recs.push_back(r);
    }
  });
  for (auto& recs : per_rep)
    for (auto& r : recs) report.records.push_back(r);
  report.mean_importance = with_mk ? VectorXd(report.importance.colwise().mean().transpose())
                                   : VectorXd::Zero(static_cast<Index>(regions.size()));
  return report;
}

// ---------------------------------------------------------------------------
// Trait clustering

struct TraitTree {
  std::vector<std::string> traits;
  MatrixXd distances;
  struct Merge {
    int left;  // cluster ids: 0..n-1 leaves, n.. merged clusters in order
    int right;
    double height;
    int size;
  };
  std::vector<Merge> merges;
  std::string newick;
};

/// Euclidean distances between importance vectors and an average-linkage
/// agglomerative tree (ties merge the lowest-numbered pair first).
inline TraitTree trait_similarity(const std::vector<std::string>& traits, const std::vector<VectorXd>& importance) {
  require(traits.size() == importance.size() && traits.size() >= 2, ErrorCode::InvalidArgument,
          "need at least two traits, one importance vector each");
  const Index len = importance.front().size();
  for (const auto& v : importance)
    require(v.size() == len, ErrorCode::LengthMismatch, "importance vectors differ in length");
  const int n = static_cast<int>(traits.size());
  TraitTree t;
  t.traits = traits;
  t.distances.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      t.distances(i, j) = (importance[static_cast<std::size_t>(i)] - importance[static_cast<std::size_t>(j)]).norm();

  std::vector<int> active(static_cast<std::size_t>(n)), size(static_cast<std::size_t>(n), 1);
  std::vector<double> height(static_cast<std::size_t>(n), 0.0);
  std::vector<std::string> text(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    active[static_cast<std::size_t>(i)] = i;
    text[static_cast<std::size_t>(i)] = traits[static_cast<std::size_t>(i)];
  }
  std::map<std::pair<int, int>, double> d;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) d[{i, j}] = t.distances(i, j);
  auto dist = [&](int a, int b) { return d.at({std::min(a, b), std::max(a, b)}); };

  int next_id = n;
  while (active.size() > 1) {
    std::size_t bi = 0, bj = 1;
    double best = dist(active[0], active[1]);
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        const double v = dist(active[i], active[j]);
        if (v < best) {
          best = v;
          bi = i;
          bj = j;
        }
      }
    const int a = active[bi], b = active[bj];
    const int sa = size[static_cast<std::size_t>(a)], sb = size[static_cast<std::size_t>(b)];
    const int id = next_id++;
    size.push_back(sa + sb);
    height.push_back(best);
    const double h = best / 2.0;
    auto branch = [&](int c) { return format_double(std::max(0.0, h - height[static_cast<std::size_t>(c)] / 2.0)); };
    text.push_back("(" + text[static_cast<std::size_t>(a)] + ":" + branch(a) + "," + text[static_cast<std::size_t>(b)] +
                   ":" + branch(b) + ")");
    t.merges.push_back({a, b, best, sa + sb});
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bi));
    for (int c : active) {
      const double v = (sa * dist(a, c) + sb * dist(b, c)) / (sa + sb);
      d[{std::min(id, c), std::max(id, c)}] = v;
    }
    active.push_back(id);
  }
  t.newick = text.back() + ";";
  return t;
}

}  // namespace locepi
