#pragma once

// Synthetic mapped-marker populations with known additive and within-region
// epistatic architecture.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ingest.hpp"

namespace locepi {

/// A product term m_a * m_b between two markers drawn from one segment of a
/// chromosome (segment `segment` of `n_segments` equal-count parts).
struct EpistaticPairSpec {
  int chromosome = 0;  // 0-based
  int segment = 0;     // 0-based
  int n_segments = 2;
  double effect = 1.0;
};

struct SimConfig {
  int n_lines = 500;
  int n_chrom = 3;
  int markers_per_chrom = 100;
  double ld_decay = 0.5;  // probability a marker copies its left neighbour
  int n_additive_qtl = 0;
  std::vector<EpistaticPairSpec> epistatic_pairs;
  double h2 = 0.5;
  std::uint64_t seed = 1;
  std::string trait = "trait";
  double freq_lo = 0.1;
  double freq_hi = 0.9;
  double spacing_cM = 1.0;
  // Partition under which declared pairs are local.
  int partition_depth = 2;
  int partition_splits = 2;

  void validate() const {
    require(n_lines >= 2 && n_chrom >= 1 && markers_per_chrom >= 2, ErrorCode::InvalidArgument, "simulation is too small");
    require(ld_decay >= 0.0 && ld_decay < 1.0, ErrorCode::InvalidArgument, "ld_decay must lie in [0, 1)");
    require(h2 > 0.0 && h2 < 1.0, ErrorCode::InvalidArgument, "h2 must lie in (0, 1)");
    require(freq_lo > 0.05 && freq_hi < 0.95 && freq_lo < freq_hi, ErrorCode::InvalidArgument,
            "allele frequency range must lie inside (0.05, 0.95)");
    require(n_additive_qtl >= 0 && n_additive_qtl <= n_chrom * markers_per_chrom, ErrorCode::InvalidArgument,
            "too many additive QTL");
    for (const auto& p : epistatic_pairs) {
      require(p.chromosome >= 0 && p.chromosome < n_chrom, ErrorCode::InvalidArgument, "pair chromosome out of range");
      require(p.n_segments >= 1 && p.segment >= 0 && p.segment < p.n_segments, ErrorCode::InvalidArgument,
              "pair segment out of range");
      require(markers_per_chrom / p.n_segments >= 2, ErrorCode::InvalidArgument, "pair segment has < 2 markers");
    }
  }
};

struct SimTruth {
  std::vector<Index> qtl_markers;
  VectorXd qtl_effects;
  std::vector<std::pair<Index, Index>> pair_markers;
  VectorXd pair_effects;
  VectorXd g_true;  // per line
  double noise_sd = 0.0;
  double realized_h2 = 0.0;
};

struct SimResult {
  MarkerMatrix markers;
  GeneticMap map;
  PhenotypeTable phenos;
  SimTruth truth;
};

inline std::string sim_marker_id(int chrom, int j) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "c%d_m%04d", chrom + 1, j + 1);
  return buf;
}

inline std::string sim_line_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "L%05d", i + 1);
  return buf;
}

/// Equal-count segment bounds [begin, end) of `n` markers split in `parts`,
/// extra markers to the leftmost segments.
inline std::pair<int, int> segment_bounds(int n, int parts, int segment) {
  const int base = n / parts, rem = n % parts;
  const int begin = segment * base + std::min(segment, rem);
  return {begin, begin + base + (segment < rem ? 1 : 0)};
}

inline SimResult simulate(const SimConfig& cfg) {
  cfg.validate();
  require(cfg.n_additive_qtl > 0 || !cfg.epistatic_pairs.empty(), ErrorCode::InfeasibleH2,
          "no additive QTL and no epistatic pairs: genetic variance is zero");
  const int n = cfg.n_lines, mpc = cfg.markers_per_chrom;
  const Index m = static_cast<Index>(cfg.n_chrom) * mpc;
  SimResult out;
  auto& mm = out.markers;
  mm.coding = GenotypeCoding::ZeroOne;
  mm.values.resize(n, m);
  mm.imputed_fraction = VectorXd::Zero(m);
  for (int i = 0; i < n; ++i) mm.line_ids.push_back(sim_line_id(i));

  Rng geno(derive_seed(cfg.seed, "genotypes"));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_real_distribution<double> freq(cfg.freq_lo, cfg.freq_hi);
  for (int c = 0; c < cfg.n_chrom; ++c) {
    for (int j = 0; j < mpc; ++j) {
      const Index col = static_cast<Index>(c) * mpc + j;
      mm.marker_ids.push_back(sim_marker_id(c, j));
      out.map.entries.push_back({mm.marker_ids.back(), std::to_string(c + 1), cfg.spacing_cM * j, MapUnit::cM});
      for (int attempt = 0;; ++attempt) {
        const double p = freq(geno);
        for (int i = 0; i < n; ++i) {
          const bool copy = j > 0 && unif(geno) < cfg.ld_decay;
          mm.values(i, col) = copy ? mm.values(i, col - 1) : (unif(geno) < p ? 1.0 : 0.0);
        }
        const double f = mm.values.col(col).mean();
        if (f > 0.05 && f < 0.95) break;
        require(attempt < 1000, ErrorCode::InvalidArgument, "could not draw a polymorphic marker");
      }
    }
  }
  out.map.sort();

  Rng arch(derive_seed(cfg.seed, "architecture"));
  auto& t = out.truth;
  VectorXd g = VectorXd::Zero(n);
  if (cfg.n_additive_qtl > 0) {
    const auto perm = permutation(arch, m);
    t.qtl_markers.assign(perm.begin(), perm.begin() + cfg.n_additive_qtl);
    std::sort(t.qtl_markers.begin(), t.qtl_markers.end());
    t.qtl_effects = standard_normal(arch, cfg.n_additive_qtl);
    for (int q = 0; q < cfg.n_additive_qtl; ++q)
      g += t.qtl_effects[q] * mm.values.col(t.qtl_markers[static_cast<std::size_t>(q)]);
  }
  t.pair_effects.resize(static_cast<Index>(cfg.epistatic_pairs.size()));
  for (std::size_t k = 0; k < cfg.epistatic_pairs.size(); ++k) {
    const auto& ps = cfg.epistatic_pairs[k];
    const auto [b, e] = segment_bounds(mpc, ps.n_segments, ps.segment);
    std::uniform_int_distribution<int> pick(b, e - 1);
    int a = pick(arch), c = pick(arch);
    while (c == a) c = pick(arch);
    const Index ca = static_cast<Index>(ps.chromosome) * mpc + std::min(a, c);
    const Index cb = static_cast<Index>(ps.chromosome) * mpc + std::max(a, c);
    t.pair_markers.emplace_back(ca, cb);
    t.pair_effects[static_cast<Index>(k)] = ps.effect;
    g += ps.effect * mm.values.col(ca).cwiseProduct(mm.values.col(cb));
  }
  const double vg = sample_variance(g);
  require(vg > 0.0, ErrorCode::InfeasibleH2, "simulated genetic values have zero variance");
  t.noise_sd = std::sqrt(vg * (1.0 - cfg.h2) / cfg.h2);
  Rng noise(derive_seed(cfg.seed, "noise"));
  const VectorXd y = g + t.noise_sd * standard_normal(noise, n);
  t.g_true = g;
  t.realized_h2 = vg / sample_variance(y);
  for (int i = 0; i < n; ++i) out.phenos.add({mm.line_ids[static_cast<std::size_t>(i)], cfg.trait, y[i], std::nullopt});
  return out;
}

/// Named scenarios. All use 3 chromosomes of 100 markers split into 6 leaves
/// (depth 2, 2 splits) and 500 lines.
inline std::map<std::string, SimConfig> scenario_presets() {
  SimConfig base;
  base.n_lines = 500;
  base.n_chrom = 3;
  base.markers_per_chrom = 100;
  base.ld_decay = 0.5;
  base.h2 = 0.5;

  std::map<std::string, SimConfig> presets;
  SimConfig additive = base;
  additive.n_additive_qtl = 10;
  presets["additive-only"] = additive;

  SimConfig local = base;
  local.n_additive_qtl = 0;
  local.epistatic_pairs = {{1, 0, 2, 1.0}};  // third leaf: first half of chromosome 2
  presets["local-epistasis"] = local;

  SimConfig mixed = base;
  mixed.n_additive_qtl = 5;
  mixed.epistatic_pairs = {{0, 1, 2, 1.0}, {2, 0, 2, 1.0}};
  presets["mixed"] = mixed;

  SimConfig high = mixed;
  high.h2 = 0.74;
  presets["mixed-h2-0.74"] = high;

  SimConfig low = mixed;
  low.h2 = 0.30;
  presets["mixed-h2-0.30"] = low;
  return presets;
}

inline SimConfig preset(const std::string& name) {
  const auto all = scenario_presets();
  const auto it = all.find(name);
  if (it == all.end()) {
    std::string names;
    for (const auto& [k, v] : all) names += (names.empty() ? "" : ", ") + k;
    fail(ErrorCode::InvalidArgument, "unknown preset '" + name + "' (available: " + names + ")");
  }
  return it->second;
}

/// Writes markers.csv, map.csv, pheno.csv and truth.tsv into `dir`.
inline void write_simulation(const std::string& dir, const SimResult& sim) {
  write_markers(dir + "/markers.csv", sim.markers, TableFormat::Csv);
  write_map(dir + "/map.csv", sim.map, TableFormat::Csv);
  write_phenotypes(dir + "/pheno.csv", sim.phenos, TableFormat::Csv);
  std::ofstream out(dir + "/truth.tsv");
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + dir + "/truth.tsv");
  out << "kind\tmarker_a\tmarker_b\teffect\n";
  for (std::size_t q = 0; q < sim.truth.qtl_markers.size(); ++q)
    out << "additive\t" << sim.markers.marker_ids[static_cast<std::size_t>(sim.truth.qtl_markers[q])] << "\t.\t"
        << format_double(sim.truth.qtl_effects[static_cast<Index>(q)]) << '\n';
  for (std::size_t k = 0; k < sim.truth.pair_markers.size(); ++k)
    out << "epistatic\t" << sim.markers.marker_ids[static_cast<std::size_t>(sim.truth.pair_markers[k].first)] << '\t'
        << sim.markers.marker_ids[static_cast<std::size_t>(sim.truth.pair_markers[k].second)] << '\t'
        << format_double(sim.truth.pair_effects[static_cast<Index>(k)]) << '\n';
  out << "# realized_h2\t" << format_double(sim.truth.realized_h2) << '\n';
}

}  // namespace locepi
