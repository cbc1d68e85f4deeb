#pragma once

// Random problem generators shared by the unit and acceptance tests.

#include <random>

#include "locepi/reml.hpp"

namespace instances {

using namespace locepi;

/// Random PSD kernel of rank <= q (A A', normalized to unit mean diagonal).
inline MatrixXd random_psd(std::mt19937_64& rng, Index q, Index rank) {
  std::normal_distribution<double> n;
  MatrixXd a(q, rank);
  for (Index i = 0; i < q; ++i)
    for (Index j = 0; j < rank; ++j) a(i, j) = n(rng);
  MatrixXd k = a * a.transpose();
  return k * (static_cast<double>(q) / k.trace());
}

/// SPMM instance with n >= q observations, every line observed at least once,
/// X* = [1 | one covariate] and y drawn from the model with random variances.
inline SpmmProblem random_spmm(std::mt19937_64& rng, Index max_n = 30, Index max_q = 30) {
  std::uniform_int_distribution<Index> qd(4, max_q);
  const Index q = qd(rng);
  std::uniform_int_distribution<Index> nd(std::max<Index>(q, 6), std::max(max_n, q));
  const Index n = nd(rng);
  std::uniform_int_distribution<Index> rd(1, q), line(0, q - 1);
  std::normal_distribution<double> norm;
  std::uniform_real_distribution<double> unif(0.05, 3.0);
  SpmmProblem p;
  p.k = random_psd(rng, q, rd(rng));
  p.z = MatrixXd::Zero(n, q);
  for (Index i = 0; i < n; ++i) p.z(i, i < q ? i : line(rng)) = 1.0;
  p.xstar.resize(n, 2);
  for (Index i = 0; i < n; ++i) {
    p.xstar(i, 0) = 1.0;
    p.xstar(i, 1) = norm(rng);
  }
  const double s2g = unif(rng), s2e = unif(rng);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(p.k);
  VectorXd u(q);
  for (Index i = 0; i < q; ++i) u[i] = norm(rng) * std::sqrt(std::max(0.0, es.eigenvalues()[i]) * s2g);
  const VectorXd g = es.eigenvectors() * u;
  p.y = p.xstar * VectorXd::Constant(2, 0.7) + p.z * g;
  for (Index i = 0; i < n; ++i) p.y[i] += norm(rng) * std::sqrt(s2e);
  return p;
}

}  // namespace instances
