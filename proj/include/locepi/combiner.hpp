#pragma once

// Sparse additive combination of local genetic values:
//   min  sum_i (y_i - b0 - sum_j a_j G_ij - sum_l b_l X_il)^2 + l1 sum|a_j| + l2 sum a_j^2
// with only the region weights a penalized.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace locepi {

struct CombinerOptions {
  std::optional<double> lambda1;  // nullopt: choose by cross-validation
  std::optional<double> lambda2;  // nullopt: 0.1 * lambda1 when k > N, else 0
  int folds = 10;
  int path_points = 100;
  double path_min_ratio = 1e-3;
  double tol = 1e-9;
  long max_sweeps = 100000;
  std::uint64_t seed = 0;
  std::vector<Index> groups;  // optional fold groups (e.g. line of each observation)
  int threads = 1;
};

struct CvPoint {
  double lambda1;
  double lambda2;
  double cv_error;
};

struct CombinerModel {
  double beta0 = 0.0;
  VectorXd alpha;  // region weights
  VectorXd beta;   // fixed-effect coefficients
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  VectorXd importance;  // |alpha|
  std::vector<CvPoint> cv_path;
  long sweeps = 0;

  Index k() const { return alpha.size(); }
  Index nonzero() const { return (alpha.array() != 0.0).count(); }
};

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// Residualizes columns against the unpenalized design [1 | X] by least squares.
class UnpenalizedProjection {
 public:
  explicit UnpenalizedProjection(const MatrixXd& x, Index n) {
    w_.resize(n, 1 + x.cols());
    w_.col(0).setOnes();
    if (x.cols() > 0) {
      require(x.rows() == n, ErrorCode::DimensionMismatch, "fixed effects and responses disagree on N");
      w_.rightCols(x.cols()) = x;
    }
    qr_.compute(w_);
    qr_.setThreshold(1e-12);
    require(qr_.rank() == w_.cols(), ErrorCode::SingularXstar, "fixed-effect design is rank deficient");
  }
  MatrixXd residualize(const MatrixXd& m) const { return m - w_ * qr_.solve(m); }
  VectorXd coefficients(const VectorXd& v) const { return qr_.solve(v); }
  const MatrixXd& design() const { return w_; }

 private:
  MatrixXd w_;
  Eigen::ColPivHouseholderQR<MatrixXd> qr_;
};

/// Cyclic coordinate descent on the residualized problem. `alpha` is the warm
/// start and receives the solution. Returns the sweep count.
inline long coordinate_descent(const MatrixXd& g, const VectorXd& y, double lambda1, double lambda2, VectorXd& alpha,
                               double tol = 1e-9, long max_sweeps = 100000) {
  const Index k = g.cols();
  if (alpha.size() != k) alpha = VectorXd::Zero(k);
  VectorXd c = g.colwise().squaredNorm().transpose();
  const double c_floor = 1e-20 * std::max(c.size() ? c.maxCoeff() : 0.0, 1e-300);
  for (Index j = 0; j < k; ++j)
    if (c[j] <= c_floor) {
      c[j] = 0.0;
      alpha[j] = 0.0;
    }
  VectorXd r = y - g * alpha;
  const double half_l1 = 0.5 * lambda1;
  for (long sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < k; ++j) {
      if (c[j] <= 0.0) {
        alpha[j] = 0.0;
        continue;
      }
      const double old = alpha[j];
      const double rho = g.col(j).dot(r) + c[j] * old;
      const double fresh = soft_threshold(rho, half_l1) / (c[j] + lambda2);
      if (fresh != old) {
        r.noalias() -= (fresh - old) * g.col(j);
        alpha[j] = fresh;
        max_change = std::max(max_change, std::abs(fresh - old));
      }
    }
    if (max_change < tol) return sweep;
  }
  fail(ErrorCode::NonConvergence, "coordinate descent did not converge in " + std::to_string(max_sweeps) + " sweeps");
}

/// Smallest lambda1 at which every region weight is zero.
inline double lambda_max(const MatrixXd& g, const MatrixXd& x, const VectorXd& y) {
  UnpenalizedProjection proj(x, y.size());
  const MatrixXd gt = proj.residualize(g);
  const VectorXd yt = proj.residualize(y);
  return gt.cols() ? 2.0 * (gt.transpose() * yt).cwiseAbs().maxCoeff() : 0.0;
}

/// Objective value (raw sums, no 1/N) of a full coefficient set.
inline double combiner_objective(const MatrixXd& g, const MatrixXd& x, const VectorXd& y, double beta0,
                                 const VectorXd& alpha, const VectorXd& beta, double lambda1, double lambda2) {
  VectorXd r = y.array() - beta0;
  r -= g * alpha;
  if (x.cols() > 0) r -= x * beta;
  return r.squaredNorm() + lambda1 * alpha.cwiseAbs().sum() + lambda2 * alpha.squaredNorm();
}

namespace detail {

inline double resolve_lambda2(const std::optional<double>& l2, double l1, Index k, Index n) {
  if (l2) return *l2;
  return k > n ? 0.1 * l1 : 0.0;
}

/// Fit at fixed penalties; fills beta0/beta from the unpenalized projection.
inline CombinerModel fit_fixed(const MatrixXd& g, const MatrixXd& x, const VectorXd& y, double l1, double l2,
                               const CombinerOptions& opt, const VectorXd* warm = nullptr) {
  UnpenalizedProjection proj(x, y.size());
  const MatrixXd gt = proj.residualize(g);
  const VectorXd yt = proj.residualize(y);
  CombinerModel m;
  m.lambda1 = l1;
  m.lambda2 = l2;
  m.alpha = warm ? *warm : VectorXd::Zero(g.cols());
  m.sweeps = coordinate_descent(gt, yt, l1, l2, m.alpha, opt.tol, opt.max_sweeps);
  const VectorXd coef = proj.coefficients(y - g * m.alpha);
  m.beta0 = coef[0];
  m.beta = coef.tail(coef.size() - 1);
  m.importance = m.alpha.cwiseAbs();
  return m;
}

inline MatrixXd take_rows(const MatrixXd& m, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

inline VectorXd take(const VectorXd& v, const std::vector<Index>& rows) {
  VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Index>(i)] = v[rows[i]];
  return out;
}

}  // namespace detail

/// Log-spaced lambda1 path from lambda_max down to ratio * lambda_max.
inline std::vector<double> lambda_path(double lmax, int points, double ratio) {
  std::vector<double> path;
  if (!(lmax > 0.0)) return {0.0};
  for (int i = 0; i < points; ++i) {
    const double t = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
    path.push_back(lmax * std::pow(ratio, t));
  }
  return path;
}

/// Fits the combiner. With lambda1 unset, picks lambda1 on the path by
/// K-fold cross-validated mean squared error and refits on all rows.
inline CombinerModel fit_combiner(const MatrixXd& g, const MatrixXd& x, const VectorXd& y, const CombinerOptions& opt) {
  const Index n = y.size(), k = g.cols();
  require(g.rows() == n, ErrorCode::DimensionMismatch, "G and y disagree on N");
  require(x.cols() == 0 || x.rows() == n, ErrorCode::DimensionMismatch, "X and y disagree on N");
  require(!opt.lambda1 || *opt.lambda1 >= 0.0, ErrorCode::InvalidArgument, "lambda1 must be >= 0");
  require(!opt.lambda2 || *opt.lambda2 >= 0.0, ErrorCode::InvalidArgument, "lambda2 must be >= 0");
  const MatrixXd xx = x.cols() ? x : MatrixXd(n, 0);

  if (opt.lambda1) {
    const double l1 = *opt.lambda1;
    return detail::fit_fixed(g, xx, y, l1, detail::resolve_lambda2(opt.lambda2, l1, k, n), opt);
  }

  require(n >= 20, ErrorCode::DegenerateFolds, "cross-validated lambda needs at least 20 observations");
  const auto path = lambda_path(lambda_max(g, xx, y), opt.path_points, opt.path_min_ratio);

  // Fold assignment: by group when given (all rows of a group share a fold).
  std::vector<Index> group = opt.groups;
  if (group.empty()) {
    group.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) group[static_cast<std::size_t>(i)] = i;
  }
  require(static_cast<Index>(group.size()) == n, ErrorCode::DimensionMismatch, "fold groups must have N entries");
  const Index n_groups = *std::max_element(group.begin(), group.end()) + 1;
  const int folds = static_cast<int>(std::min<Index>(opt.folds, n_groups));
  require(folds >= 2, ErrorCode::DegenerateFolds, "need at least two folds");
  Rng rng(derive_seed(opt.seed, "combiner-folds"));
  const auto perm = permutation(rng, n_groups);
  std::vector<int> fold_of_group(static_cast<std::size_t>(n_groups));
  for (Index i = 0; i < n_groups; ++i) fold_of_group[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = static_cast<int>(i % folds);

  std::vector<VectorXd> fold_sse(static_cast<std::size_t>(folds), VectorXd::Zero(static_cast<Index>(path.size())));
  parallel_for(folds, opt.threads, [&](Index f) {
    std::vector<Index> train, test;
    for (Index i = 0; i < n; ++i)
      (fold_of_group[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])] == f ? test : train).push_back(i);
    if (test.empty() || train.size() < 2) return;
    const MatrixXd gtr = detail::take_rows(g, train), gte = detail::take_rows(g, test);
    const MatrixXd xtr = detail::take_rows(xx, train), xte = detail::take_rows(xx, test);
    const VectorXd ytr = detail::take(y, train), yte = detail::take(y, test);
    UnpenalizedProjection proj(xtr, ytr.size());
    const MatrixXd gt = proj.residualize(gtr);
    const VectorXd yt = proj.residualize(ytr);
    VectorXd alpha = VectorXd::Zero(k);
    for (std::size_t s = 0; s < path.size(); ++s) {
      const double l2 = detail::resolve_lambda2(opt.lambda2, path[s], k, n);
      coordinate_descent(gt, yt, path[s], l2, alpha, opt.tol, opt.max_sweeps);
      const VectorXd coef = proj.coefficients(ytr - gtr * alpha);
      VectorXd pred = gte * alpha;
      pred.array() += coef[0];
      if (xte.cols() > 0) pred += xte * coef.tail(coef.size() - 1);
      fold_sse[static_cast<std::size_t>(f)][static_cast<Index>(s)] = (yte - pred).squaredNorm();
    }
  });

  VectorXd sse = VectorXd::Zero(static_cast<Index>(path.size()));
  for (const auto& f : fold_sse) sse += f;
  std::vector<CvPoint> cv;
  std::size_t best = 0;
  for (std::size_t s = 0; s < path.size(); ++s) {
    const double err = sse[static_cast<Index>(s)] / static_cast<double>(n);
    cv.push_back({path[s], detail::resolve_lambda2(opt.lambda2, path[s], k, n), err});
    if (err < cv[best].cv_error) best = s;
  }
  auto model = detail::fit_fixed(g, xx, y, path[best], cv[best].lambda2, opt);
  model.cv_path = std::move(cv);
  return model;
}

/// G_new * alpha: the estimated genotypic value.
inline VectorXd predict_genotypic(const CombinerModel& m, const MatrixXd& g_new) {
  require(g_new.cols() == m.k(), ErrorCode::DimensionMismatch,
          "G has " + std::to_string(g_new.cols()) + " columns, model has " + std::to_string(m.k()));
  return g_new * m.alpha;
}

/// b0 + G_new * alpha + X_new * beta.
inline VectorXd predict_full(const CombinerModel& m, const MatrixXd& g_new, const MatrixXd& x_new) {
  VectorXd out = predict_genotypic(m, g_new);
  out.array() += m.beta0;
  if (m.beta.size() > 0) {
    require(x_new.cols() == m.beta.size() && x_new.rows() == g_new.rows(), ErrorCode::DimensionMismatch,
            "fixed effects for prediction have the wrong shape");
    out += x_new * m.beta;
  }
  return out;
}

struct ImportanceRow {
  std::string region_id;
  double importance;
  Index column;  // genome-order position
};

/// Regions by descending |alpha|; ties keep genome order.
inline std::vector<ImportanceRow> importance_scores(const CombinerModel& m, const std::vector<std::string>& region_ids) {
  require(static_cast<Index>(region_ids.size()) == m.k(), ErrorCode::DimensionMismatch, "one region id per weight");
  std::vector<ImportanceRow> rows;
  for (Index j = 0; j < m.k(); ++j) rows.push_back({region_ids[static_cast<std::size_t>(j)], std::abs(m.alpha[j]), j});
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ImportanceRow& a, const ImportanceRow& b) { return a.importance > b.importance; });
  return rows;
}

}  // namespace locepi
