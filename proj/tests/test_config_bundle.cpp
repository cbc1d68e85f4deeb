#include <gtest/gtest.h>

#include "locepi/bundle.hpp"
#include "locepi/cv.hpp"
#include "locepi/simulator.hpp"
#include "test_util.hpp"

using namespace locepi;

TEST(RunConfig, DefaultsAndOverrides) {
  RunConfig c;
  for (const auto& k : config_keys()) EXPECT_EQ(c.get(k.name), k.default_value);
  EXPECT_EQ(c.get_int("depth"), 2);
  EXPECT_FALSE(c.get_auto("lambda1").has_value());
  c.load_text("# comment\n depth = 3  # trailing\n\nlambda1 = 0.5\n");
  EXPECT_EQ(c.get_int("depth"), 3);
  EXPECT_EQ(*c.get_auto("lambda1"), 0.5);
  EXPECT_FALSE(c.get_bool("all-levels"));
  c.set("all-levels", "true");
  EXPECT_TRUE(c.get_bool("all-levels"));
}

TEST(RunConfig, UnknownKeysAndBadLines) {
  RunConfig c;
  try {
    c.load_text("deepth = 3\n");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownConfigKey);
    EXPECT_NE(std::string(e.what()).find("deepth"), std::string::npos);
  }
  EXPECT_THROW(c.load_text("depth 3\n"), Error);
  c.set("depth", "x");
  EXPECT_THROW(c.get_int("depth"), Error);
  c.set("all-levels", "maybe");
  EXPECT_THROW(c.get_bool("all-levels"), Error);
}

TEST(RunConfig, DumpRoundTripAndHash) {
  RunConfig a;
  a.set("seed", "42");
  a.set("kernel", "linear");
  RunConfig b;
  b.load_text(a.dump(true));
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a.hash(), b.hash());
  b.set("seed", "43");
  EXPECT_NE(a.hash(), b.hash());
  const std::string help = RunConfig{}.dump(true);
  for (const auto& k : config_keys()) EXPECT_NE(help.find(std::string("# ") + k.help), std::string::npos);
}

TEST(KernelFromConfig, Parses) {
  RunConfig c;
  auto s = kernel_from_config(c);
  EXPECT_EQ(s.kind, KernelKind::Gaussian);
  EXPECT_FALSE(s.h.has_value());
  c.set("kernel", "poly");
  c.set("poly-d", "3");
  s = kernel_from_config(c);
  EXPECT_EQ(s.kind, KernelKind::Polynomial);
  EXPECT_EQ(s.d, 3);
  c.set("kernel", "rbf");
  EXPECT_THROW(kernel_from_config(c), Error);
}

namespace {

struct Trained {
  SimResult sim;
  RegionHierarchy h;
  Alignment alignment;
  MkModel mk;
};

Trained train(std::uint64_t seed) {
  Trained t;
  auto cfg = preset("mixed");
  cfg.n_lines = 90;
  cfg.markers_per_chrom = 30;
  cfg.seed = seed;
  t.sim = simulate(cfg);
  t.h = build_hierarchy(t.sim.map, t.sim.markers, 2, 2);
  t.alignment = align(t.sim.markers, t.sim.phenos, "trait");
  CombinerOptions co;
  co.seed = 1;
  t.mk = fit_mk(make_training_data(t.sim.markers, t.alignment), t.h, RegionModelOptions{}, co);
  return t;
}

}  // namespace

TEST(Bundle, SaveLoadPredictConsistency) {
  const auto t = train(3);
  const auto dir = testutil::scratch("bundle_roundtrip");
  RunConfig cfg;
  save_bundle(dir.string(), cfg, t.sim.markers, t.h, t.mk.local, t.mk.combiner, {});
  write_manifest((dir / "manifest.tsv").string(), "fit", cfg, {"markers"});
  const auto b = load_bundle(dir.string());
  EXPECT_EQ(b.hierarchy.leaf_ids, t.h.leaf_ids);
  EXPECT_EQ(b.combiner.alpha.size(), 6);
  EXPECT_LE((b.combiner.alpha - t.mk.combiner.alpha).cwiseAbs().maxCoeff(), 1e-15);

  const auto p = predict_bundle(b, t.sim.markers);
  const VectorXd expect = t.mk.local.gebv.values * t.mk.combiner.alpha;
  ASSERT_EQ(p.genotypic.size(), expect.size());
  EXPECT_LE((p.genotypic - expect).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((p.full - (expect.array() + t.mk.combiner.beta0).matrix()).cwiseAbs().maxCoeff(), 1e-8);

  const auto imp = importance_table(b.combiner, b.hierarchy, b.local.gebv.region_ids);
  ASSERT_EQ(imp.size(), 6u);
  for (std::size_t i = 1; i < imp.size(); ++i) EXPECT_GE(imp[i - 1].importance, imp[i].importance);

  write_predictions((dir / "pred.tsv").string(), p);
  const auto text = read_file((dir / "pred.tsv").string());
  EXPECT_EQ(text.rfind("line_id\tgenotypic_value\tfull_prediction\n", 0), 0u);
}

TEST(Bundle, ShuffledColumnsAndUnknownMarkers) {
  const auto t = train(4);
  const auto dir = testutil::scratch("bundle_conform");
  RunConfig cfg;
  save_bundle(dir.string(), cfg, t.sim.markers, t.h, t.mk.local, t.mk.combiner, {});
  write_manifest((dir / "manifest.tsv").string(), "fit", cfg, {});
  const auto b = load_bundle(dir.string());
  const auto base = predict_bundle(b, t.sim.markers);

  MarkerMatrix shuffled = t.sim.markers;
  std::mt19937_64 rng(2);
  std::vector<Index> perm(static_cast<std::size_t>(shuffled.n_markers()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t j = 0; j < perm.size(); ++j) {
    shuffled.marker_ids[j] = t.sim.markers.marker_ids[static_cast<std::size_t>(perm[j])];
    shuffled.values.col(static_cast<Index>(j)) = t.sim.markers.values.col(perm[j]);
  }
  const auto p = predict_bundle(b, shuffled);
  EXPECT_EQ(p.genotypic, base.genotypic);

  MarkerMatrix extra = t.sim.markers;
  extra.marker_ids.push_back("mystery_marker");
  extra.values.conservativeResize(Eigen::NoChange, extra.values.cols() + 1);
  extra.values.rightCols(1).setZero();
  extra.imputed_fraction = VectorXd::Zero(extra.values.cols());
  try {
    predict_bundle(b, extra);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ManifestMismatch);
    EXPECT_NE(std::string(e.what()).find("mystery_marker"), std::string::npos);
  }
}

TEST(Bundle, RejectsForeignDirectory) {
  const auto dir = testutil::scratch("bundle_foreign");
  testutil::write_text(dir / "manifest.tsv", "key\tvalue\nformat\tsomething-else\n");
  try {
    load_bundle(dir.string());
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ManifestMismatch);
  }
}

TEST(Manifest, RecordsHashSeedAndChecksums) {
  const auto dir = testutil::scratch("manifest");
  const auto f = testutil::write_text(dir / "in.txt", "hello\n");
  RunConfig cfg;
  cfg.set("markers", f);
  cfg.set("seed", "7");
  write_manifest((dir / "m.tsv").string(), "fit", cfg, {"markers", "map"});
  const auto kv = read_key_values((dir / "m.tsv").string());
  EXPECT_EQ(kv.at("format"), kBundleFormat);
  EXPECT_EQ(kv.at("config_hash"), cfg.hash());
  EXPECT_EQ(kv.at("seed"), "7");
  EXPECT_EQ(kv.at("input.markers"), f);
  EXPECT_EQ(kv.count("input.map"), 0u);
  const auto text = read_file((dir / "m.tsv").string());
  EXPECT_NE(text.find(file_checksum(f)), std::string::npos);
}
