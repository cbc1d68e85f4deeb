#include <gtest/gtest.h>

#include "instances.hpp"
#include "oracles.hpp"
#include "locepi/hierarchy_test.hpp"
#include "locepi/simulator.hpp"
#include "test_util.hpp"

using namespace locepi;

namespace {

SimResult genotypes(int n, int chroms, int per_chrom, std::uint64_t seed) {
  SimConfig c;
  c.n_lines = n;
  c.n_chrom = chroms;
  c.markers_per_chrom = per_chrom;
  c.n_additive_qtl = 1;
  c.seed = seed;
  return simulate(c);
}

PhenotypeTable table(const MarkerMatrix& mm, const VectorXd& y) {
  PhenotypeTable t;
  for (Index i = 0; i < y.size(); ++i) t.add({mm.line_ids[static_cast<std::size_t>(i)], "t", y[i], std::nullopt});
  return t;
}

/// One observation per line, intercept only, normalized linear kernel on `markers`.
SpmmProblem line_problem(const MatrixXd& markers, const VectorXd& y) {
  SpmmProblem p;
  const Index n = markers.rows();
  p.y = y;
  p.xstar = MatrixXd::Ones(n, 1);
  p.z = MatrixXd::Identity(n, n);
  p.k = normalize(gram(markers, KernelSpec::linear())).values;
  return p;
}

/// y = g + e with var(g) / var(e) = ratio, g ~ N(0, K).
VectorXd draw(const MatrixXd& k, double ratio, Rng& rng) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(k);
  const VectorXd z = standard_normal(rng, k.rows());
  const VectorXd g = es.eigenvectors() * (es.eigenvalues().cwiseMax(0.0).cwiseSqrt().cwiseProduct(z));
  return std::sqrt(ratio) * g + standard_normal(rng, k.rows());
}

}  // namespace

TEST(AlphaForNode, Formula) {
  EXPECT_DOUBLE_EQ(alpha_for_node(0.05, 100, 1000), 0.005);
  EXPECT_EQ(alpha_for_node(0.05, 1000, 1000), 0.05);
  EXPECT_EQ(alpha_for_node(0.05, 37, 300), 0.05 * 37.0 / 300.0);
}

TEST(TestPlan, Validation) {
  TestPlan p;
  p.alpha = 1.0;
  EXPECT_THROW(p.validate(), Error);
  p.alpha = 0.05;
  p.null_sims = 999;
  EXPECT_THROW(p.validate(), Error);
  p.null_sims = 1000;
  EXPECT_NO_THROW(p.validate());
}

TEST(RlrtRegion, BoundaryGivesZeroStatAndUnitP) {
  const auto sim = genotypes(60, 1, 40, 3);
  int seen = 0;
  for (std::uint64_t s = 0; s < 40 && seen < 3; ++s) {
    Rng rng(s);
    const auto p = line_problem(sim.markers.values, standard_normal(rng, 60));
    RemlProfile prof(p.xstar, p.zkz());
    if (prof.maximize(prof.project(p.y), {}).boundary != VcBoundary::NullVariance) continue;
    ++seen;
    const auto r = rlrt_region(p, 1000, s);
    EXPECT_EQ(r.stat, 0.0);
    EXPECT_EQ(r.p_value, 1.0);
  }
  EXPECT_EQ(seen, 3);
}

TEST(RlrtRegion, StatisticMatchesDenseOracle) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10; ++t) {
    const auto p = instances::random_spmm(rng);
    const auto r = rlrt_region(p, 1000, 5);
    const auto grid = oracle::reml_grid(p.y, p.xstar, p.zkz(), 2000);
    const double null_ll = oracle::reml_profile(p.y, p.xstar, p.zkz(), 1e12);
    const double expect = std::max(0.0, 2.0 * (grid.best_loglik - null_ll));
    EXPECT_GE(r.stat, expect - 1e-5) << t;
    EXPECT_GE(r.stat, 0.0);
    EXPECT_GE(r.p_value, 1.0 / 1001.0);
    EXPECT_LE(r.p_value, 1.0);
  }
}

TEST(RlrtRegion, StrongSignalIsSignificant) {
  const auto sim = genotypes(200, 1, 80, 21);
  const MatrixXd k = normalize(gram(sim.markers.values, KernelSpec::linear())).values;
  int hits = 0;
  for (int r = 0; r < 20; ++r) {
    Rng rng(derive_seed(77, static_cast<std::uint64_t>(r)));
    const auto p = line_problem(sim.markers.values, draw(k, 5.0, rng));
    hits += rlrt_region(p, 1000, static_cast<std::uint64_t>(r)).p_value < 0.001;
  }
  EXPECT_GE(hits, 19);
}

TEST(RlrtRegion, NullPValuesNotAntiConservative) {
  const auto sim = genotypes(60, 1, 40, 31);
  int small = 0;
  std::vector<double> ps;
  for (int r = 0; r < 200; ++r) {
    Rng rng(derive_seed(99, static_cast<std::uint64_t>(r)));
    const auto p = line_problem(sim.markers.values, standard_normal(rng, 60));
    const double pv = rlrt_region(p, 1000, static_cast<std::uint64_t>(r) + 1000).p_value;
    small += pv <= 0.05;
    ps.push_back(pv);
  }
  EXPECT_LE(small, static_cast<int>(200 * (0.05 + 1.96 * std::sqrt(0.05 * 0.95 / 200))));
  // Boundary mass sits at p = 1.
  EXPECT_GE(std::count(ps.begin(), ps.end(), 1.0), 40);
}

TEST(HierarchicalTest, TraversalSoundnessOnRandomTrees) {
  std::mt19937_64 rng(41);
  const auto sim = genotypes(40, 1, 30, 41);
  const MatrixXd k = normalize(gram(sim.markers.values, KernelSpec::linear())).values;
  Rng yr(5);
  const auto strong = line_problem(sim.markers.values, draw(k, 20.0, yr));
  SpmmProblem flat = strong;
  flat.y = VectorXd::LinSpaced(40, 0.0, 1.0).array().square();
  flat.k = MatrixXd::Identity(40, 40);  // exchangeable: REML sits at the null
  std::uniform_int_distribution<int> chroms(1, 3), depth(1, 3), splits(2, 3), coin(0, 2);
  for (int t = 0; t < 6; ++t) {
    const auto s = genotypes(20, chroms(rng), 12, 50 + t);
    const auto h = build_hierarchy(s.map, s.markers, depth(rng), splits(rng));
    std::map<std::string, bool> signal;
    for (const auto& r : h.regions) signal[r.id] = coin(rng) > 0;
    TestPlan plan;
    plan.alpha = 0.05;
    plan.null_sims = 1000;
    const auto res = hierarchical_test(plan, h, [&](const Region& r) { return signal.at(r.id) ? strong : flat; });
    ASSERT_EQ(res.size(), h.regions.size());
    std::map<std::string, const RegionTest*> by_id;
    for (const auto& r : res) by_id[r.region_id] = &r;
    const std::size_t root_size = h.root_region().size();
    for (const auto& region : h.regions) {
      const auto& r = *by_id.at(region.id);
      EXPECT_EQ(r.alpha_local, 0.05 * static_cast<double>(region.size()) / static_cast<double>(root_size));
      EXPECT_EQ(r.level, region.level);
      if (r.rejected) EXPECT_TRUE(r.tested);
      const bool parent_rejected = !region.parent || by_id.at(*region.parent)->rejected;
      EXPECT_EQ(r.tested, parent_rejected) << region.id;
      if (!r.tested) EXPECT_TRUE(std::isnan(r.p_value));
      if (region.parent) EXPECT_LE(r.alpha_local, by_id.at(*region.parent)->alpha_local);
      if (r.tested) EXPECT_EQ(r.rejected, signal.at(region.id)) << region.id;
    }
  }
}

TEST(HierarchicalTest, RootAcceptedLeavesEverythingUntested) {
  const auto sim = genotypes(30, 2, 10, 61);
  const auto h = build_hierarchy(sim.map, sim.markers, 2, 2);
  SpmmProblem flat;
  flat.y = VectorXd::LinSpaced(30, -1.0, 1.0);
  flat.xstar = MatrixXd::Ones(30, 1);
  flat.z = MatrixXd::Identity(30, 30);
  flat.k = MatrixXd::Identity(30, 30);
  TestPlan plan;
  plan.null_sims = 1000;
  const auto res = hierarchical_test(plan, h, [&](const Region&) { return flat; });
  EXPECT_TRUE(res.front().tested);
  EXPECT_FALSE(res.front().rejected);
  for (std::size_t i = 1; i < res.size(); ++i) {
    EXPECT_FALSE(res[i].tested);
    EXPECT_FALSE(res[i].rejected);
  }
}

TEST(HierarchicalTest, PlantedLeafPathRejected) {
  int hits = 0;
  for (int r = 0; r < 30; ++r) {
    const auto sim = genotypes(200, 3, 40, 700 + r);
    const auto h = build_hierarchy(sim.map, sim.markers, 2, 2);
    const auto& leaf = h.at(h.leaf_ids[2]);
    const Index qtl = leaf.marker_indices[leaf.size() / 2];
    const VectorXd g = sim.markers.values.col(qtl);
    Rng rng(derive_seed(13, static_cast<std::uint64_t>(r)));
    const VectorXd y = g + std::sqrt(sample_variance(g)) * standard_normal(rng, 200);
    const auto data = make_training_data(sim.markers, align(sim.markers, table(sim.markers, y), "t"));
    TestPlan plan;
    plan.null_sims = 1000;
    plan.seed = static_cast<std::uint64_t>(r);
    const auto res = hierarchical_test(plan, h, data, RegionModelOptions{});
    std::map<std::string, const RegionTest*> by_id;
    for (const auto& t : res) by_id[t.region_id] = &t;
    bool ok = by_id.at(h.root)->rejected && by_id.at(*leaf.parent)->rejected && by_id.at(leaf.id)->rejected;
    for (const auto& sib : h.at(*leaf.parent).children)
      if (sib != leaf.id) ok = ok && !by_id.at(sib)->rejected;
    hits += ok;
  }
  EXPECT_GE(hits, 24);
}
