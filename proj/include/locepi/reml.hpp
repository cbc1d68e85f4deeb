#pragma once

// Single-kernel mixed model  y = X*b + Z g + e,  g ~ N(0, s2g K), e ~ N(0, s2e I),
// fitted by restricted maximum likelihood on the variance ratio
// delta = s2e / s2g after one eigendecomposition of the projected Z K Z'.

#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "common.hpp"
#include "ingest.hpp"

namespace locepi {

struct SpmmProblem {
  VectorXd y;      // n observations
  MatrixXd xstar;  // n x p*: intercept, covariates, principal components
  MatrixXd z;      // n x q incidence
  MatrixXd k;      // q x q kernel (normalized)

  Index n() const { return y.size(); }
  Index p() const { return xstar.cols(); }
  Index q() const { return k.rows(); }

  void validate() const {
    require(xstar.rows() == n() && z.rows() == n(), ErrorCode::DimensionMismatch, "X*, Z and y disagree on n");
    require(z.cols() == q() && k.cols() == q(), ErrorCode::DimensionMismatch, "Z and K disagree on q");
    require(n() > p(), ErrorCode::InvalidArgument, "need more observations than fixed effects");
    require(y.allFinite() && xstar.allFinite() && k.allFinite(), ErrorCode::NonFiniteEntry, "non-finite model input");
  }

  /// Z K Z'.
  MatrixXd zkz() const {
    if (z.rows() == z.cols() && z.isIdentity(0.0)) return k;
    const MatrixXd zk = z * k;
    return zk * z.transpose();
  }
};

enum class VcBoundary { Interior, LowerDelta, NullVariance, ZeroResidual, NonIdentifiable };

inline std::string_view to_string(VcBoundary b) {
  switch (b) {
    case VcBoundary::Interior: return "interior";
    case VcBoundary::LowerDelta: return "lower-delta";
    case VcBoundary::NullVariance: return "null-variance";
    case VcBoundary::ZeroResidual: return "zero-residual";
    case VcBoundary::NonIdentifiable: return "non-identifiable";
  }
  return "interior";
}

inline VcBoundary parse_boundary(std::string_view s) {
  for (auto b : {VcBoundary::Interior, VcBoundary::LowerDelta, VcBoundary::NullVariance, VcBoundary::ZeroResidual,
                 VcBoundary::NonIdentifiable})
    if (to_string(b) == s) return b;
  fail(ErrorCode::ParseError, "unknown boundary flag '" + std::string(s) + "'");
}

struct FittedRegionModel {
  std::string region_id;
  double sigma2_g = 0.0;
  double sigma2_e = 0.0;
  double delta = std::numeric_limits<double>::infinity();  // s2e / s2g
  VectorXd beta_star;
  double reml_loglik = 0.0;
  double null_loglik = 0.0;  // restricted loglik with s2g = 0
  VectorXd ebluphat;         // training lines
  VectorXd dual;             // K_new * dual gives local genetic values of new lines
  VcBoundary boundary = VcBoundary::Interior;

  bool at_null() const { return boundary == VcBoundary::NullVariance || boundary == VcBoundary::ZeroResidual; }
};

/// Search settings for the profiled likelihood in log(delta).
struct RemlSearch {
  double log_delta_min = std::log(1e-5);
  double log_delta_max = std::log(1e5);
  int grid_points = 101;
  double tol = 1e-8;
};

/// Spectral state of one model: orthonormal basis B of the residual space of
/// X* (B'X* = 0) diagonalising B' H B with eigenvalues lambda.
class RemlProfile {
 public:
  struct Optimum {
    double log_delta = 0.0;
    double loglik = 0.0;  // contrast likelihood, without the log|X'X| term
    VcBoundary boundary = VcBoundary::Interior;
    double sigma2_g = 0.0;
    double sigma2_e = 0.0;
  };

  RemlProfile(const MatrixXd& xstar, const MatrixXd& h) {
    const Index n = xstar.rows(), p = xstar.cols();
    require(h.rows() == n && h.cols() == n, ErrorCode::DimensionMismatch, "ZKZ' must be n x n");
    Eigen::ColPivHouseholderQR<MatrixXd> rank_qr(xstar);
    rank_qr.setThreshold(1e-10);
    require(rank_qr.rank() == p, ErrorCode::SingularXstar,
            "fixed-effect design has rank " + std::to_string(rank_qr.rank()) + " < " + std::to_string(p));
    Eigen::HouseholderQR<MatrixXd> qr(xstar);
    const MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    logdet_xtx_ = 0.0;
    for (Index i = 0; i < p; ++i) logdet_xtx_ += 2.0 * std::log(std::abs(r(i, i)));
    // Q' H Q by applying the Householder reflectors; the trailing block is B'HB
    // for B the last n - p columns of Q.
    MatrixXd qhq = h;
    qhq.applyOnTheLeft(qr.householderQ().adjoint());
    qhq.applyOnTheRight(qr.householderQ());
    MatrixXd m = qhq.bottomRightCorner(n - p, n - p);
    qhq.resize(0, 0);
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    require(es.info() == Eigen::Success, ErrorCode::ConvergenceFailure, "eigendecomposition failed");
    lambda_ = es.eigenvalues();
    const double top = std::max(lambda_.maxCoeff(), 0.0);
    require(lambda_.minCoeff() >= -1e-8 * std::max(top, 1e-300), ErrorCode::NonPsdK,
            "projected kernel has eigenvalue " + format_double(lambda_.minCoeff()));
    lambda_ = lambda_.cwiseMax(0.0);
    basis_ = MatrixXd::Zero(n, n - p);
    basis_.bottomRows(n - p) = es.eigenvectors();
    basis_.applyOnTheLeft(qr.householderQ());
    identifiable_ = (lambda_.maxCoeff() - lambda_.minCoeff()) > 1e-10 * std::max(1.0, top);
  }

  Index dof() const { return lambda_.size(); }
  const MatrixXd& basis() const { return basis_; }
  const VectorXd& eigenvalues() const { return lambda_; }
  double logdet_xtx() const { return logdet_xtx_; }
  bool identifiable() const { return identifiable_; }

  VectorXd project(const VectorXd& y) const { return basis_.transpose() * y; }

  /// Profiled restricted log-likelihood of the contrasts at log(delta).
  double loglik(double log_delta, const VectorXd& eta) const {
    const double delta = std::exp(log_delta);
    const double nd = static_cast<double>(dof());
    double quad = 0.0, logdet = 0.0;
    for (Index i = 0; i < lambda_.size(); ++i) {
      const double w = lambda_[i] + delta;
      quad += eta[i] * eta[i] / w;
      logdet += std::log(w);
    }
    const double s2g = quad / nd;
    return -0.5 * (nd * (std::log(2.0 * std::numbers::pi * s2g) + 1.0) + logdet);
  }

  /// Derivative of loglik with respect to log(delta).
  double dloglik(double log_delta, const VectorXd& eta) const {
    const double delta = std::exp(log_delta);
    const double nd = static_cast<double>(dof());
    double quad = 0.0, dquad = 0.0, dlogdet = 0.0;
    for (Index i = 0; i < lambda_.size(); ++i) {
      const double w = lambda_[i] + delta;
      const double e2 = eta[i] * eta[i] / w;
      quad += e2;
      dquad -= e2 / w;
      dlogdet += 1.0 / w;
    }
    return -0.5 * delta * (nd * dquad / quad + dlogdet);
  }

  /// Limit of the profile as delta -> infinity (s2g = 0).
  double null_loglik(const VectorXd& eta) const {
    const double nd = static_cast<double>(dof());
    const double s2e = eta.squaredNorm() / nd;
    return -0.5 * nd * (std::log(2.0 * std::numbers::pi * s2e) + 1.0);
  }

  /// Grid scan followed by golden-section refinement around the best grid
  /// point; the s2g = 0 limit competes as a boundary candidate.
  Optimum maximize(const VectorXd& eta, const RemlSearch& search = {}) const {
    Optimum opt;
    const double nd = static_cast<double>(dof());
    if (!identifiable_) {
      // Only s2g * lambda + s2e is identified; report the equal split.
      opt.boundary = VcBoundary::NonIdentifiable;
      opt.log_delta = 0.0;
      opt.loglik = loglik(0.0, eta);
      opt.sigma2_g = eta.squaredNorm() / (nd * (lambda_.mean() + 1.0));
      opt.sigma2_e = opt.sigma2_g;
      return opt;
    }
    const int g = std::max(3, search.grid_points);
    const double lo = search.log_delta_min, hi = search.log_delta_max;
    const double step = (hi - lo) / (g - 1);
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < g; ++i) {
      const double v = loglik(lo + step * i, eta);
      if (v > best_val) {
        best_val = v;
        best = i;
      }
    }
    double a = lo + step * std::max(0, best - 1);
    double b = lo + step * std::min(g - 1, best + 1);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = loglik(x1, eta), f2 = loglik(x2, eta);
    while (b - a > search.tol) {
      if (f1 < f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + inv_phi * (b - a);
        f2 = loglik(x2, eta);
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - inv_phi * (b - a);
        f1 = loglik(x1, eta);
      }
    }
    double xs = 0.5 * (a + b);
    // Polish on the sign change of the derivative: values alone cannot locate
    // a smooth maximum better than about sqrt(machine epsilon).
    double pa = std::max(lo, xs - 1e-6), pb = std::min(hi, xs + 1e-6);
    if (dloglik(pa, eta) > 0.0 && dloglik(pb, eta) < 0.0) {
      for (int it = 0; it < 100 && pb - pa > 1e-15 * std::max(1.0, std::abs(xs)); ++it) {
        const double mid = 0.5 * (pa + pb);
        (dloglik(mid, eta) > 0.0 ? pa : pb) = mid;
      }
      xs = 0.5 * (pa + pb);
    }
    double fs = loglik(xs, eta);
    if (best_val > fs) {  // grid point beats refinement (edge of a flat stretch)
      xs = lo + step * best;
      fs = best_val;
    }
    const double f_null = null_loglik(eta);
    if (!(f_null < fs)) {
      opt.boundary = VcBoundary::NullVariance;
      opt.log_delta = std::numeric_limits<double>::infinity();
      opt.loglik = f_null;
      opt.sigma2_g = 0.0;
      opt.sigma2_e = eta.squaredNorm() / nd;
      return opt;
    }
    opt.log_delta = xs;
    opt.loglik = fs;
    opt.boundary = (xs - lo <= search.tol) ? VcBoundary::LowerDelta : VcBoundary::Interior;
    const double delta = std::exp(xs);
    opt.sigma2_g = (eta.array().square() / (lambda_.array() + delta)).sum() / nd;
    opt.sigma2_e = delta * opt.sigma2_g;
    return opt;
  }

 private:
  MatrixXd basis_;
  VectorXd lambda_;
  double logdet_xtx_ = 0.0;
  bool identifiable_ = true;
};

namespace detail {

inline VectorXd least_squares(const MatrixXd& x, const VectorXd& y) { return x.colPivHouseholderQr().solve(y); }

}  // namespace detail

/// REML fit with generalized-least-squares fixed effects and training EBLUPs.
inline FittedRegionModel fit_reml(const SpmmProblem& p, const RemlSearch& search = {}, std::string region_id = {}) {
  p.validate();
  const MatrixXd h = p.zkz();
  RemlProfile profile(p.xstar, h);
  FittedRegionModel fit;
  fit.region_id = std::move(region_id);
  const VectorXd eta = profile.project(p.y);
  const double half_logdet = 0.5 * profile.logdet_xtx();
  const double yy = p.y.squaredNorm();

  if (eta.squaredNorm() <= 1e-24 * std::max(yy, 1e-300)) {
    fit.boundary = VcBoundary::ZeroResidual;
    fit.sigma2_g = fit.sigma2_e = 0.0;
    fit.reml_loglik = fit.null_loglik = std::numeric_limits<double>::infinity();
    fit.beta_star = detail::least_squares(p.xstar, p.y);
    fit.dual = VectorXd::Zero(p.q());
    fit.ebluphat = VectorXd::Zero(p.q());
    return fit;
  }

  const auto opt = profile.maximize(eta, search);
  fit.boundary = opt.boundary;
  fit.sigma2_g = opt.sigma2_g;
  fit.sigma2_e = opt.sigma2_e;
  fit.reml_loglik = opt.loglik - half_logdet;
  fit.null_loglik = profile.null_loglik(eta) - half_logdet;
  require(std::isfinite(fit.reml_loglik), ErrorCode::ConvergenceFailure, "restricted likelihood is not finite");

  if (opt.boundary == VcBoundary::NullVariance) {
    fit.delta = std::numeric_limits<double>::infinity();
    fit.beta_star = detail::least_squares(p.xstar, p.y);
    fit.dual = VectorXd::Zero(p.q());
    fit.ebluphat = VectorXd::Zero(p.q());
    return fit;
  }
  fit.delta = std::exp(opt.log_delta);
  // a = s2g V^{-1} (y - X b) = B diag(1 / (lambda + delta)) eta
  const VectorXd w = eta.array() / (profile.eigenvalues().array() + fit.delta);
  const VectorXd a = profile.basis() * w;
  const VectorXd resid = h * a + fit.delta * a;  // y - X b = (H + delta I) a
  fit.beta_star = detail::least_squares(p.xstar, p.y - resid);
  fit.dual = p.z.transpose() * a;
  fit.ebluphat = p.k * fit.dual;
  require(fit.ebluphat.allFinite(), ErrorCode::NonFiniteEntry, "EBLUPs are not finite");
  return fit;
}

/// Direct evaluation of s2g K Z' (s2g Z K Z' + s2e I)^{-1} (y - X* b) at the
/// fitted variances and fixed effects.
inline VectorXd eblup(const FittedRegionModel& fit, const SpmmProblem& p) {
  p.validate();
  require(fit.beta_star.size() == p.p(), ErrorCode::DimensionMismatch, "beta* length does not match X*");
  if (fit.sigma2_g == 0.0) return VectorXd::Zero(p.q());
  require(fit.sigma2_e > 0.0, ErrorCode::SingularV, "residual variance must be positive");
  const MatrixXd v = fit.sigma2_g * p.zkz() + fit.sigma2_e * MatrixXd::Identity(p.n(), p.n());
  Eigen::LLT<MatrixXd> llt(v);
  require(llt.info() == Eigen::Success, ErrorCode::SingularV, "V is not positive definite");
  const VectorXd vinv_r = llt.solve(p.y - p.xstar * fit.beta_star);
  return fit.sigma2_g * (p.k * (p.z.transpose() * vinv_r));
}

/// Local genetic values of new subjects from their cross kernel (t x q).
inline VectorXd predict_local(const FittedRegionModel& fit, const MatrixXd& cross) {
  require(cross.cols() == fit.dual.size(), ErrorCode::DimensionMismatch,
          "cross kernel has " + std::to_string(cross.cols()) + " columns, model has " + std::to_string(fit.dual.size()) +
              " training lines");
  return cross * fit.dual;
}

// ---------------------------------------------------------------------------
// Principal components of the markers outside a region

struct PcBasis {
  std::vector<Index> columns;  // marker columns outside the region
  VectorXd means;              // training column means of those markers
  MatrixXd loadings;           // columns.size() x r, orthonormal
  VectorXd singular_values;    // r
  MatrixXd scores;             // training lines x r
  std::vector<std::string> warnings;

  Index r() const { return loadings.cols(); }

  /// Scores for arbitrary lines of a matrix with the training column layout.
  MatrixXd scores_for(const MarkerMatrix& markers, const std::vector<Index>& rows) const {
    MatrixXd out = MatrixXd::Zero(static_cast<Index>(rows.size()), r());
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto col = markers.values.col(columns[c]);
      const auto load = loadings.row(static_cast<Index>(c));
      for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Index>(i)) += (col[rows[i]] - means[static_cast<Index>(c)]) * load;
    }
    return out;
  }
};

/// Centered Gram matrix of all markers over a set of training lines, computed
/// once in column blocks so out-of-region components follow by subtraction.
class PcaContext {
 public:
  PcaContext(const MarkerMatrix& markers, std::vector<Index> rows, Index block = 1024)
      : markers_(&markers), rows_(std::move(rows)) {
    const Index n = static_cast<Index>(rows_.size());
    const Index m = markers.n_markers();
    means_.resize(m);
    gram_ = MatrixXd::Zero(n, n);
    std::vector<Index> cols;
    for (Index start = 0; start < m; start += block) {
      cols.clear();
      for (Index j = start; j < std::min(m, start + block); ++j) cols.push_back(j);
      MatrixXd c = markers.slice(rows_, cols);
      const VectorXd mu = c.colwise().mean().transpose();
      means_.segment(start, static_cast<Index>(cols.size())) = mu;
      c.rowwise() -= mu.transpose();
      gram_.selfadjointView<Eigen::Lower>().rankUpdate(c);
    }
    gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
  }

  const std::vector<Index>& rows() const { return rows_; }
  const MatrixXd& gram() const { return gram_; }

  PcBasis out_of_region(const std::vector<Index>& region_cols, int r) const {
    require(r >= 0, ErrorCode::InvalidArgument, "number of principal components must be >= 0");
    const Index n = static_cast<Index>(rows_.size());
    const Index m = markers_->n_markers();
    std::vector<char> inside(static_cast<std::size_t>(m), 0);
    for (Index j : region_cols) inside[static_cast<std::size_t>(j)] = 1;
    PcBasis pc;
    for (Index j = 0; j < m; ++j)
      if (!inside[static_cast<std::size_t>(j)]) pc.columns.push_back(j);
    const Index m_out = static_cast<Index>(pc.columns.size());
    pc.means.resize(m_out);
    for (Index c = 0; c < m_out; ++c) pc.means[c] = means_[pc.columns[static_cast<std::size_t>(c)]];
    pc.loadings.resize(m_out, 0);
    pc.scores.resize(n, 0);
    if (r == 0 || m_out == 0) {
      if (r > 0) pc.warnings.push_back("no markers outside the region; no principal components");
      return pc;
    }
    MatrixXd g = gram_;
    if (!region_cols.empty()) {
      MatrixXd c = markers_->slice(rows_, region_cols);
      for (std::size_t k = 0; k < region_cols.size(); ++k) c.col(static_cast<Index>(k)).array() -= means_[region_cols[k]];
      g.selfadjointView<Eigen::Lower>().rankUpdate(c, -1.0);
      g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(g);
    require(es.info() == Eigen::Success, ErrorCode::ConvergenceFailure, "PCA eigendecomposition failed");
    const VectorXd& ev = es.eigenvalues();
    const double top = std::max(ev.maxCoeff(), 0.0);
    Index usable = 0;
    for (Index i = n - 1; i >= 0 && usable < r; --i, ++usable)
      if (!(ev[i] > 1e-10 * std::max(top, 1e-300) && ev[i] > 0.0)) break;
    if (usable < r)
      pc.warnings.push_back("RankDeficient: only " + std::to_string(usable) + " of " + std::to_string(r) +
                            " principal components have nonzero variance");
    pc.singular_values.resize(usable);
    MatrixXd u(n, usable);
    for (Index k = 0; k < usable; ++k) {
      pc.singular_values[k] = std::sqrt(ev[n - 1 - k]);
      u.col(k) = es.eigenvectors().col(n - 1 - k);
    }
    pc.scores = u * pc.singular_values.asDiagonal();
    // loadings v_k = C' u_k / s_k, streamed over the out-of-region columns
    pc.loadings.resize(m_out, usable);
    const VectorXd inv_s = pc.singular_values.cwiseInverse();
    for (Index c = 0; c < m_out; ++c) {
      const auto col = markers_->values.col(pc.columns[static_cast<std::size_t>(c)]);
      VectorXd centered(n);
      for (Index i = 0; i < n; ++i) centered[i] = col[rows_[static_cast<std::size_t>(i)]] - pc.means[c];
      pc.loadings.row(c) = (centered.transpose() * u).cwiseProduct(inv_s.transpose());
    }
    return pc;
  }

 private:
  const MarkerMatrix* markers_;
  std::vector<Index> rows_;
  VectorXd means_;
  MatrixXd gram_;
};

/// Top-r principal components of the column-centered markers outside `region_cols`.
inline PcBasis pca_out_of_region(const MarkerMatrix& markers, const std::vector<Index>& rows,
                                 const std::vector<Index>& region_cols, int r) {
  return PcaContext(markers, rows).out_of_region(region_cols, r);
}

}  // namespace locepi
