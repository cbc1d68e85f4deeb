#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <sys/wait.h>

#include "locepi/bundle.hpp"
#include "locepi/simulator.hpp"
#include "test_util.hpp"

using namespace locepi;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string output;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(LOCEPI_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  std::array<char, 4096> buf;
  while (std::size_t got = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), got);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

/// Small simulated data set written in the standard formats.
fs::path dataset(const std::string& name, std::uint64_t seed, bool noise = false) {
  auto cfg = preset("mixed");
  cfg.n_lines = 120;
  cfg.markers_per_chrom = 30;
  cfg.seed = seed;
  auto sim = simulate(cfg);
  if (noise) {
    Rng rng(seed);
    const VectorXd y = standard_normal(rng, cfg.n_lines);
    sim.phenos = PhenotypeTable{};
    for (Index i = 0; i < y.size(); ++i) sim.phenos.add({sim.markers.line_ids[static_cast<std::size_t>(i)], "trait", y[i], std::nullopt});
  }
  const auto dir = testutil::scratch(name);
  write_simulation(dir.string(), sim);
  return dir;
}

std::string inputs(const fs::path& d) {
  return "--markers " + (d / "markers.csv").string() + " --map " + (d / "map.csv").string() + " --pheno " +
         (d / "pheno.csv").string();
}

std::size_t count_lines(const fs::path& p) {
  const auto text = read_file(p.string());
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST(Cli, ConfigDumpDefaults) {
  const auto r = cli("config --dump-defaults");
  EXPECT_EQ(r.code, 0);
  for (const auto& k : config_keys()) EXPECT_NE(r.output.find(std::string(k.name) + " = "), std::string::npos) << k.name;
  // The dump is a valid config file.
  const auto dir = testutil::scratch("cli_config");
  testutil::write_text(dir / "c.txt", r.output);
  EXPECT_EQ(cli("config --config " + (dir / "c.txt").string()).code, 0);
  testutil::write_text(dir / "bad.txt", "no-such-key = 1\n");
  const auto bad = cli("config --config " + (dir / "bad.txt").string());
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.output.find("no-such-key"), std::string::npos);
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  const auto dir = testutil::scratch("cli_precedence");
  testutil::write_text(dir / "c.txt", "depth = 3\nseed = 9\n");
  const auto r = cli("config --config " + (dir / "c.txt").string() + " --seed 11");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("depth = 3"), std::string::npos);
  EXPECT_NE(r.output.find("seed = 11"), std::string::npos);
}

TEST(Cli, SimulateWritesStandardFiles) {
  const auto dir = testutil::scratch("cli_simulate");
  const auto r = cli("simulate --preset additive-only --seed 5 --out " + (dir / "sim").string());
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* f : {"markers.csv", "map.csv", "pheno.csv", "truth.tsv"}) EXPECT_TRUE(fs::exists(dir / "sim" / f)) << f;
  EXPECT_EQ(count_lines(dir / "sim" / "pheno.csv"), 501u);
  EXPECT_EQ(cli("simulate --preset nope --out " + (dir / "x").string()).code, 1);
}

TEST(Cli, PartitionSixLeaves) {
  const auto d = dataset("cli_partition", 1);
  const auto out = d / "regions.tsv";
  const auto r = cli("partition --map " + (d / "map.csv").string() + " --depth 2 --splits 2 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto mm = parse_markers((d / "markers.csv").string(), TableFormat::Csv);
  const auto h = read_regions(out.string(), mm);
  EXPECT_EQ(h.leaf_ids.size(), 6u);
  EXPECT_TRUE(fs::exists(out.string() + ".manifest.tsv"));
}

TEST(Cli, FitSmokeMissingMapAndDeterminism) {
  const auto d = dataset("cli_fit", 2);
  const auto a = cli("fit " + inputs(d) + " --seed 4 --threads 1 --out " + (d / "m1").string());
  ASSERT_EQ(a.code, 0) << a.output;
  EXPECT_EQ(count_lines(d / "m1" / "importance.tsv"), 7u);
  EXPECT_TRUE(fs::exists(d / "m1" / "manifest.tsv"));
  const auto b = cli("fit " + inputs(d) + " --seed 4 --threads 1 --out " + (d / "m2").string());
  ASSERT_EQ(b.code, 0) << b.output;
  EXPECT_EQ(read_file((d / "m1" / "importance.tsv").string()), read_file((d / "m2" / "importance.tsv").string()));
  const auto c = cli("fit " + inputs(d) + " --seed 4 --threads 3 --out " + (d / "m3").string());
  ASSERT_EQ(c.code, 0) << c.output;
  const auto t1 = detail::read_matrix_tsv((d / "m1" / "dual_weights.tsv").string(), nullptr).second;
  const auto t3 = detail::read_matrix_tsv((d / "m3" / "dual_weights.tsv").string(), nullptr).second;
  EXPECT_LE((t1 - t3).cwiseAbs().maxCoeff(), 1e-12);

  const auto missing = cli("fit --markers " + (d / "markers.csv").string() + " --pheno " + (d / "pheno.csv").string() +
                           " --out " + (d / "m4").string());
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.output.find("map"), std::string::npos) << missing.output;

  const auto broken = cli("fit " + inputs(d) + " --depth x --out " + (d / "m5").string());
  EXPECT_EQ(broken.code, 1);
  EXPECT_NE(broken.output.find("depth"), std::string::npos);
}

TEST(Cli, PredictConsistencyShuffleAndUnknownMarker) {
  const auto d = dataset("cli_predict", 3);
  ASSERT_EQ(cli("fit " + inputs(d) + " --seed 1 --out " + (d / "model").string()).code, 0);
  const auto p1 = cli("predict --model " + (d / "model").string() + " --markers " + (d / "markers.csv").string() +
                      " --out " + (d / "p1.tsv").string());
  ASSERT_EQ(p1.code, 0) << p1.output;
  EXPECT_EQ(count_lines(d / "p1.tsv"), 121u);

  // Training predictions equal G alpha from the library fit to 1e-8.
  const auto bundle = load_bundle((d / "model").string());
  const auto mm = parse_markers((d / "markers.csv").string(), TableFormat::Csv);
  const auto direct = predict_bundle(bundle, mm);
  const auto [ids, pred] = detail::read_matrix_tsv((d / "p1.tsv").string(), nullptr);
  ASSERT_EQ(pred.rows(), 120);
  EXPECT_LE((pred.col(0) - direct.genotypic).cwiseAbs().maxCoeff(), 1e-8);

  // Reversed marker columns.
  MarkerMatrix rev = mm;
  for (Index j = 0; j < mm.n_markers(); ++j) {
    rev.marker_ids[static_cast<std::size_t>(j)] = mm.marker_ids[static_cast<std::size_t>(mm.n_markers() - 1 - j)];
    rev.values.col(j) = mm.values.col(mm.n_markers() - 1 - j);
  }
  write_markers((d / "rev.csv").string(), rev, TableFormat::Csv);
  ASSERT_EQ(cli("predict --model " + (d / "model").string() + " --markers " + (d / "rev.csv").string() + " --out " +
                (d / "p2.tsv").string())
                .code,
            0);
  EXPECT_EQ(read_file((d / "p1.tsv").string()), read_file((d / "p2.tsv").string()));

  MarkerMatrix extra = mm;
  extra.marker_ids.push_back("stray_snp");
  extra.values.conservativeResize(Eigen::NoChange, mm.n_markers() + 1);
  extra.values.rightCols(1).setOnes();
  write_markers((d / "extra.csv").string(), extra, TableFormat::Csv);
  const auto bad = cli("predict --model " + (d / "model").string() + " --markers " + (d / "extra.csv").string() +
                       " --out " + (d / "p3.tsv").string());
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.output.find("stray_snp"), std::string::npos) << bad.output;
}

TEST(Cli, CvReportRows) {
  const auto d = dataset("cli_cv", 4);
  const auto out = d / "report.tsv";
  const auto r = cli("cv " + inputs(d) + " --replicates 2 --seed 3 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(count_lines(out), 1u + 2u * 3u);
  EXPECT_TRUE(fs::exists(out.string() + ".importance.tsv") || fs::exists(d / "report.importance.tsv"));
  const auto one = cli("cv " + inputs(d) + " --replicates 2 --models mk --seed 3 --out " + (d / "r2.tsv").string());
  ASSERT_EQ(one.code, 0) << one.output;
  EXPECT_EQ(count_lines(d / "r2.tsv"), 3u);
}

TEST(Cli, AssocUnderGlobalNullRejectsNothing) {
  int clean = 0;
  const int runs = 20;
  for (int r = 0; r < runs; ++r) {
    const auto d = dataset("cli_assoc", 100 + static_cast<std::uint64_t>(r), true);
    const auto out = d / "assoc.tsv";
    const auto res = cli("assoc " + inputs(d) + " --alpha 0.05 --null-sims 1000 --seed " + std::to_string(r) +
                         " --out " + out.string());
    ASSERT_EQ(res.code, 0) << res.output;
    const auto text = read_file(out.string());
    bool any = false;
    for (auto line : split(text, '\n')) {
      const auto f = split(line, '\t');
      if (f.size() == 8 && f[7] == "1") any = true;
    }
    clean += !any;
  }
  // Roughly 95%: at most two of twenty runs may reject.
  EXPECT_GE(clean, runs - 2);
}
