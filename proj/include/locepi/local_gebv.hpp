#pragma once

// Per-region model fits over the hierarchy and the standardized matrix of
// local genetic values they produce.

#include <string>
#include <vector>

#include "kernel.hpp"
#include "partition.hpp"
#include "reml.hpp"

namespace locepi {

/// Training observations aligned to genotyped lines, plus line-level
/// covariates expanded to observations (no intercept column).
struct TrainingData {
  const MarkerMatrix* markers = nullptr;
  Alignment alignment;
  MatrixXd covariates;  // n_obs x p

  Index n_obs() const { return alignment.n_obs(); }
  const std::vector<Index>& lines() const { return alignment.lines; }
};

inline TrainingData make_training_data(const MarkerMatrix& markers, Alignment a, MatrixXd covariates = {}) {
  TrainingData t;
  t.markers = &markers;
  if (covariates.size() == 0) covariates.resize(a.n_obs(), 0);
  require(covariates.rows() == a.n_obs(), ErrorCode::DimensionMismatch, "covariate rows do not match observations");
  t.alignment = std::move(a);
  t.covariates = std::move(covariates);
  return t;
}

struct RegionModelOptions {
  KernelSpec kernel = KernelSpec::gaussian();
  int n_pcs = 5;
  bool all_levels = false;
  int threads = 1;
  RemlSearch search;
};

/// Model inputs for one region: kernel on the region's markers, fixed effects
/// [1 | covariates | Z * PC scores of the markers outside the region].
struct RegionProblem {
  SpmmProblem problem;
  PcBasis pcs;
  double bandwidth = std::numeric_limits<double>::quiet_NaN();
  double scale = 1.0;
  std::vector<std::string> warnings;
};

class RegionProblemBuilder {
 public:
  RegionProblemBuilder(const TrainingData& data, const RegionModelOptions& opt) : data_(&data), opt_(opt) {
    require(data.markers != nullptr, ErrorCode::InvalidArgument, "training data has no marker matrix");
    z_ = data.alignment.incidence();
    if (opt.n_pcs > 0) pca_.emplace(*data.markers, data.lines());
  }

  RegionProblem build(const Region& region) const {
    RegionProblem rp;
    const auto& lines = data_->lines();
    const MatrixXd sub = data_->markers->slice(lines, region.marker_indices);
    KernelMatrix k = normalize(gram(sub, opt_.kernel));
    rp.bandwidth = k.bandwidth;
    rp.scale = k.scale;
    const Index n = data_->n_obs();
    const Index p = data_->covariates.cols();
    if (pca_) rp.pcs = pca_->out_of_region(region.marker_indices, opt_.n_pcs);
    for (const auto& w : rp.pcs.warnings) rp.warnings.push_back(region.id + ": " + w);
    const MatrixXd pc_obs = data_->alignment.expand_rows(rp.pcs.scores);
    Index r = pc_obs.cols();
    // Drop trailing components that would make X* rank deficient.
    for (;;) {
      MatrixXd x(n, 1 + p + r);
      x.col(0).setOnes();
      x.middleCols(1, p) = data_->covariates;
      x.rightCols(r) = pc_obs.leftCols(r);
      Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
      qr.setThreshold(1e-10);
      if (qr.rank() == x.cols() && n > x.cols()) {
        rp.problem.xstar = std::move(x);
        break;
      }
      if (r == 0) fail(ErrorCode::SingularXstar, region.id + ": intercept and covariates are rank deficient");
      --r;
      rp.warnings.push_back(region.id + ": dropped a principal component to keep X* full rank");
    }
    if (r < rp.pcs.r()) {
      rp.pcs.loadings.conservativeResize(Eigen::NoChange, r);
      rp.pcs.scores.conservativeResize(Eigen::NoChange, r);
      rp.pcs.singular_values.conservativeResize(r);
    }
    rp.problem.y = data_->alignment.y;
    rp.problem.z = z_;
    rp.problem.k = std::move(k.values);
    return rp;
  }

  const TrainingData& data() const { return *data_; }
  const RegionModelOptions& options() const { return opt_; }

 private:
  const TrainingData* data_;
  RegionModelOptions opt_;
  MatrixXd z_;
  std::optional<PcaContext> pca_;
};

struct LocalGebvMatrix {
  MatrixXd values;  // lines x k, standardized
  MatrixXd raw;     // lines x k, unstandardized EBLUPs
  std::vector<std::string> region_ids;
  VectorXd col_means;
  VectorXd col_sds;
  std::vector<char> flagged;  // column forced to zero
  std::vector<std::string> line_ids;

  Index k() const { return values.cols(); }
};

/// Everything needed to evaluate one region on new lines.
struct RegionState {
  std::string region_id;
  std::vector<Index> columns;  // marker columns
  FittedRegionModel fit;
  double bandwidth = std::numeric_limits<double>::quiet_NaN();
  double scale = 1.0;
  PcBasis pcs;
  bool failed = false;
  std::string failure;
};

struct LocalGebvModel {
  KernelSpec kernel;
  std::vector<Index> train_rows;  // marker-matrix rows of the training lines
  std::vector<RegionState> regions;
  LocalGebvMatrix gebv;
  std::vector<std::string> warnings;
};

namespace detail {

/// Standardizes column j in place; returns false when the column is constant.
inline bool standardize_column(MatrixXd& values, Index j, double& mean_out, double& sd_out) {
  const VectorXd col = values.col(j);
  mean_out = col.mean();
  sd_out = sample_sd(col);
  const double scale = std::max(col.cwiseAbs().maxCoeff(), 1e-300);
  if (!(sd_out > 1e-10 * scale) || !std::isfinite(sd_out)) {
    values.col(j).setZero();
    return false;
  }
  values.col(j) = (col.array() - mean_out) / sd_out;
  return true;
}

}  // namespace detail

/// Fits every model region (leaves, or all levels) and assembles the
/// standardized local-GEBV matrix over the training lines. Failed regions and
/// regions with no genetic variance become zero columns and are flagged.
inline LocalGebvModel fit_all_regions(const TrainingData& data, const RegionHierarchy& hierarchy,
                                      const RegionModelOptions& opt) {
  const auto regions = model_regions(hierarchy, opt.all_levels);
  require(!regions.empty(), ErrorCode::InvalidArgument, "hierarchy has no model regions");
  RegionProblemBuilder builder(data, opt);
  LocalGebvModel model;
  model.kernel = opt.kernel;
  model.train_rows = data.lines();
  model.regions.resize(regions.size());
  std::vector<std::vector<std::string>> warn(regions.size());

  parallel_for(static_cast<Index>(regions.size()), opt.threads, [&](Index j) {
    const Region& region = *regions[static_cast<std::size_t>(j)];
    auto& st = model.regions[static_cast<std::size_t>(j)];
    st.region_id = region.id;
    st.columns = region.marker_indices;
    try {
      auto rp = builder.build(region);
      warn[static_cast<std::size_t>(j)] = std::move(rp.warnings);
      st.fit = fit_reml(rp.problem, opt.search, region.id);
      st.bandwidth = rp.bandwidth;
      st.scale = rp.scale;
      st.pcs = std::move(rp.pcs);
    } catch (const Error& e) {
      st.failed = true;
      st.failure = e.what();
      st.fit = FittedRegionModel{};
      st.fit.region_id = region.id;
      st.fit.dual = VectorXd::Zero(data.alignment.n_lines());
      st.fit.ebluphat = VectorXd::Zero(data.alignment.n_lines());
    }
  });

  std::size_t failures = 0;
  for (std::size_t j = 0; j < regions.size(); ++j) {
    for (auto& w : warn[j]) model.warnings.push_back(std::move(w));
    if (model.regions[j].failed) {
      ++failures;
      model.warnings.push_back("region " + model.regions[j].region_id + " failed: " + model.regions[j].failure);
    }
  }
  require(2 * failures <= regions.size(), ErrorCode::ConvergenceFailure,
          std::to_string(failures) + " of " + std::to_string(regions.size()) + " region fits failed");

  auto& g = model.gebv;
  const Index q = data.alignment.n_lines();
  const Index k = static_cast<Index>(regions.size());
  g.raw.resize(q, k);
  for (Index j = 0; j < k; ++j) g.raw.col(j) = model.regions[static_cast<std::size_t>(j)].fit.ebluphat;
  g.values = g.raw;
  g.col_means = VectorXd::Zero(k);
  g.col_sds = VectorXd::Zero(k);
  g.flagged.assign(static_cast<std::size_t>(k), 0);
  for (Index j = 0; j < k; ++j) {
    const auto& st = model.regions[static_cast<std::size_t>(j)];
    g.region_ids.push_back(st.region_id);
    double mu = 0.0, sd = 0.0;
    const bool ok = !st.failed && !st.fit.at_null() && detail::standardize_column(g.values, j, mu, sd);
    if (!ok) {
      g.values.col(j).setZero();
      g.flagged[static_cast<std::size_t>(j)] = 1;
      g.col_means[j] = 0.0;
      g.col_sds[j] = 0.0;
    } else {
      g.col_means[j] = mu;
      g.col_sds[j] = sd;
    }
  }
  for (Index i : data.lines()) g.line_ids.push_back(data.markers->line_ids[static_cast<std::size_t>(i)]);
  return model;
}

/// Convenience overload: align one trait and fit.
inline LocalGebvModel fit_all_regions(const MarkerMatrix& markers, const PhenotypeTable& phenos, const std::string& trait,
                                      const RegionHierarchy& hierarchy, const RegionModelOptions& opt) {
  const auto data = make_training_data(markers, align(markers, phenos, trait));
  return fit_all_regions(data, hierarchy, opt);
}

/// Raw (unstandardized) local genetic value of one region for new lines.
inline VectorXd region_values_for_new(const RegionState& st, const KernelSpec& spec, const MarkerMatrix& train_markers,
                                      const std::vector<Index>& train_rows, const MarkerMatrix& new_markers,
                                      const std::vector<Index>& new_rows) {
  const MatrixXd train = train_markers.slice(train_rows, st.columns);
  const MatrixXd fresh = new_markers.slice(new_rows, st.columns);
  return predict_local(st.fit, cross_gram(train, fresh, spec, st.bandwidth, st.scale));
}

/// Standardized local genetic values (t x k) for new lines, using training
/// column statistics; flagged columns are zero.
inline MatrixXd local_gebv_for_new(const LocalGebvModel& model, const MarkerMatrix& train_markers,
                                   const MarkerMatrix& new_markers, const std::vector<Index>& new_rows, int threads = 1) {
  require(new_markers.n_markers() == train_markers.n_markers(), ErrorCode::ColumnMismatch,
          "new marker matrix has " + std::to_string(new_markers.n_markers()) + " columns, training has " +
              std::to_string(train_markers.n_markers()));
  const Index t = static_cast<Index>(new_rows.size());
  const Index k = static_cast<Index>(model.regions.size());
  MatrixXd out = MatrixXd::Zero(t, k);
  parallel_for(k, threads, [&](Index j) {
    if (model.gebv.flagged[static_cast<std::size_t>(j)]) return;
    const auto& st = model.regions[static_cast<std::size_t>(j)];
    const VectorXd raw = region_values_for_new(st, model.kernel, train_markers, model.train_rows, new_markers, new_rows);
    out.col(j) = (raw.array() - model.gebv.col_means[j]) / model.gebv.col_sds[j];
  });
  return out;
}

}  // namespace locepi
