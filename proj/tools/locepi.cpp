// locepi: command-line entry point for the local-epistasis prediction pipeline.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "locepi/bundle.hpp"
#include "locepi/cv.hpp"
#include "locepi/hierarchy_test.hpp"
#include "locepi/simulator.hpp"

using namespace locepi;

namespace {

const std::set<std::string> kBoolKeys = {"paper-gaussian-constant", "all-levels"};

struct Inputs {
  MarkerMatrix markers;
  GeneticMap map;
  PhenotypeTable phenos;
  std::optional<FixedEffectTable> covariates;
  std::string trait;
};

/// Re-raises an error with the name of the offending input in front.
template <class F>
auto named(const std::string& input, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), input + ": " + e.message());
  }
}

std::string need(const RunConfig& cfg, const std::string& key) {
  require(cfg.has(key), ErrorCode::InvalidArgument, "missing required input --" + key);
  return cfg.get(key);
}

int threads_of(const RunConfig& cfg) {
  const auto t = cfg.get_int("threads");
  require(t >= 0, ErrorCode::InvalidArgument, "threads must be >= 0");
  return t == 0 ? default_threads() : static_cast<int>(t);
}

MarkerMatrix load_markers(const RunConfig& cfg) {
  const auto path = need(cfg, "markers");
  return named("markers", [&] {
    return parse_markers(path, format_for(path), cfg.get("missing-code"), parse_coding(cfg.get("coding")));
  });
}

Inputs load_inputs(const RunConfig& cfg, bool with_pheno) {
  Inputs in;
  // Check presence up front so the message names the first missing input.
  need(cfg, "markers");
  need(cfg, "map");
  if (with_pheno) need(cfg, "pheno");
  in.markers = load_markers(cfg);
  const auto map_path = cfg.get("map");
  in.map = named("map", [&] { return parse_map(map_path, format_for(map_path)); });
  if (with_pheno) {
    const auto p = cfg.get("pheno");
    in.phenos = named("pheno", [&] { return parse_phenotypes(p, format_for(p), cfg.get("missing-code")); });
    require(!in.phenos.trait_ids.empty(), ErrorCode::InvalidArgument, "pheno: no phenotype records");
    in.trait = cfg.has("trait") ? cfg.get("trait") : in.phenos.trait_ids.front();
  }
  if (cfg.has("covariates")) {
    const auto c = cfg.get("covariates");
    in.covariates = named("covariates", [&] { return parse_fixed_effects(c, format_for(c)); });
  }
  return in;
}

RegionHierarchy hierarchy_for(const RunConfig& cfg, const GeneticMap& map, const MarkerMatrix& markers) {
  if (cfg.has("regions")) {
    const auto path = cfg.get("regions");
    return named("regions", [&] { return read_regions(path, markers, &map); });
  }
  return named("map", [&] {
    return build_hierarchy(map, markers, static_cast<int>(cfg.get_int("depth")), static_cast<int>(cfg.get_int("splits")),
                           parse_split_rule(cfg.get("rule")));
  });
}

RegionModelOptions region_options(const RunConfig& cfg) {
  RegionModelOptions o;
  o.kernel = kernel_from_config(cfg);
  const auto pcs = cfg.get_int("pcs");
  require(pcs >= 0, ErrorCode::InvalidArgument, "pcs must be >= 0");
  o.n_pcs = static_cast<int>(pcs);
  o.all_levels = cfg.get_bool("all-levels");
  o.threads = threads_of(cfg);
  return o;
}

CombinerOptions combiner_options(const RunConfig& cfg) {
  CombinerOptions o;
  o.lambda1 = cfg.get_auto("lambda1");
  o.lambda2 = cfg.get_auto("lambda2");
  const auto folds = cfg.get_int("folds");
  require(folds >= 2, ErrorCode::InvalidArgument, "folds must be >= 2");
  o.folds = static_cast<int>(folds);
  o.seed = derive_seed(static_cast<std::uint64_t>(cfg.get_int("seed")), "combiner");
  o.threads = threads_of(cfg);
  return o;
}

std::uint64_t seed_of(const RunConfig& cfg) { return static_cast<std::uint64_t>(cfg.get_int("seed")); }

void report_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "out: cannot write " + path);
  return out;
}

const std::vector<std::string> kDataInputs = {"markers", "map", "pheno", "covariates", "regions"};

// ---------------------------------------------------------------------------

int cmd_partition(const RunConfig& cfg) {
  need(cfg, "map");
  const auto out_path = need(cfg, "out");
  const auto map_path = cfg.get("map");
  const GeneticMap map = named("map", [&] { return parse_map(map_path, format_for(map_path)); });
  MarkerMatrix markers;
  if (cfg.has("markers")) {
    markers = load_markers(cfg);
  } else {
    for (const auto& e : map.entries) markers.marker_ids.push_back(e.marker_id);
    markers.values.resize(0, static_cast<Index>(markers.marker_ids.size()));
  }
  const auto h = hierarchy_for(cfg, map, markers);
  report_warnings(h.warnings);
  write_regions(out_path, h, markers);
  write_manifest(out_path + ".manifest.tsv", "partition", cfg, kDataInputs,
                 {{"regions", std::to_string(h.regions.size())}, {"leaves", std::to_string(h.leaf_ids.size())}});
  std::cout << h.regions.size() << " regions, " << h.leaf_ids.size() << " leaves\n";
  return 0;
}

int cmd_fit(const RunConfig& cfg) {
  const auto out_dir = need(cfg, "out");
  const Inputs in = load_inputs(cfg, true);
  const auto h = hierarchy_for(cfg, in.map, in.markers);
  report_warnings(h.warnings);
  const Alignment a = named("pheno", [&] { return align(in.markers, in.phenos, in.trait); });
  MatrixXd x(a.n_obs(), 0);
  std::vector<std::string> cov_names;
  if (in.covariates) {
    x = named("covariates", [&] { return covariates_for(*in.covariates, in.markers, a); });
    named("covariates", [&] {
      check_full_rank_with_intercept(x);
      return 0;
    });
    cov_names = in.covariates->column_names;
  }
  const TrainingData data = make_training_data(in.markers, a, x);
  const auto ropt = region_options(cfg);
  const MkModel mk = fit_mk(data, h, ropt, combiner_options(cfg));
  report_warnings(mk.local.warnings);

  save_bundle(out_dir, cfg, in.markers, h, mk.local, mk.combiner, cov_names);
  write_manifest(out_dir + "/manifest.tsv", "fit", cfg, kDataInputs,
                 {{"trait", in.trait},
                  {"n_lines", std::to_string(a.n_lines())},
                  {"n_markers", std::to_string(in.markers.n_markers())},
                  {"k", std::to_string(mk.local.regions.size())},
                  {"lambda1", format_double(mk.combiner.lambda1)},
                  {"lambda2", format_double(mk.combiner.lambda2)}});
  std::cout << "fitted " << mk.local.regions.size() << " regions on " << a.n_lines() << " lines; bundle in " << out_dir
            << '\n';
  return 0;
}

int cmd_predict(const RunConfig& cfg) {
  const auto model_dir = need(cfg, "model");
  const auto out_path = need(cfg, "out");
  const ModelBundle b = named("model", [&] { return load_bundle(model_dir); });
  const MarkerMatrix fresh = load_markers(cfg);
  std::optional<FixedEffectTable> cov;
  if (cfg.has("covariates")) {
    const auto c = cfg.get("covariates");
    cov = named("covariates", [&] { return parse_fixed_effects(c, format_for(c)); });
  }
  const auto p = named("markers", [&] { return predict_bundle(b, fresh, cov ? &*cov : nullptr, threads_of(cfg)); });
  write_predictions(out_path, p);
  write_manifest(out_path + ".manifest.tsv", "predict", cfg, {"markers", "covariates"},
                 {{"model_config_hash", b.config.hash()}, {"n_lines", std::to_string(p.line_ids.size())}});
  return 0;
}

int cmd_assoc(const RunConfig& cfg) {
  const auto out_path = need(cfg, "out");
  const Inputs in = load_inputs(cfg, true);
  const auto h = hierarchy_for(cfg, in.map, in.markers);
  report_warnings(h.warnings);
  const Alignment a = named("pheno", [&] { return align(in.markers, in.phenos, in.trait); });
  MatrixXd x(a.n_obs(), 0);
  if (in.covariates) x = named("covariates", [&] { return covariates_for(*in.covariates, in.markers, a); });
  const TrainingData data = make_training_data(in.markers, a, x);
  TestPlan plan;
  plan.alpha = cfg.get_double("alpha");
  plan.null_sims = static_cast<int>(cfg.get_int("null-sims"));
  plan.seed = derive_seed(seed_of(cfg), "assoc");
  plan.threads = threads_of(cfg);
  auto ropt = region_options(cfg);
  ropt.threads = 1;
  const auto tests = hierarchical_test(plan, h, data, ropt);

  auto out = open_out(out_path);
  out << "region_id\tlevel\tn_markers\tstat\tp_value\talpha_local\ttested\trejected\n";
  std::size_t rejected = 0;
  for (const auto& t : tests) {
    out << t.region_id << '\t' << t.level << '\t' << t.n_markers << '\t' << format_double(t.rlrt_stat) << '\t'
        << format_double(t.p_value) << '\t' << format_double(t.alpha_local) << '\t' << (t.tested ? 1 : 0) << '\t'
        << (t.rejected ? 1 : 0) << '\n';
    rejected += t.rejected;
  }
  write_manifest(out_path + ".manifest.tsv", "assoc", cfg, kDataInputs, {{"trait", in.trait}});
  std::cout << rejected << " of " << tests.size() << " regions rejected\n";
  return 0;
}

int cmd_cv(const RunConfig& cfg) {
  const auto out_path = need(cfg, "out");
  need(cfg, "markers");
  need(cfg, "map");
  need(cfg, "pheno");
  RunConfig single = cfg;
  single.set("trait", "");
  Inputs in = load_inputs(single, true);
  std::vector<std::string> traits;
  if (cfg.has("trait")) {
    for (auto t : split(cfg.get("trait"), ',')) traits.emplace_back(trim(t));
  } else {
    traits.push_back(in.phenos.trait_ids.front());
  }
  const auto h = hierarchy_for(cfg, in.map, in.markers);
  report_warnings(h.warnings);

  CvConfig cv;
  cv.models.clear();
  for (auto m : split(cfg.get("models"), ',')) cv.models.push_back(parse_cv_model(trim(m)));
  cv.train_frac = cfg.get_double("train-frac");
  cv.replicates = static_cast<int>(cfg.get_int("replicates"));
  cv.region = region_options(cfg);
  cv.combiner = combiner_options(cfg);
  cv.gaussian_baseline = KernelSpec::gaussian();
  cv.gaussian_baseline.include_gaussian_norm_constant = cfg.get_bool("paper-gaussian-constant");
  cv.threads = threads_of(cfg);

  auto out = open_out(out_path);
  auto imp = open_out(out_path + ".importance.tsv");
  out << "replicate\tmodel\taccuracy\trmse\tseed\ttrait\n";
  imp << "trait\tregion_id\tmean_importance\n";
  std::vector<VectorXd> importance;
  for (const auto& trait : traits) {
    cv.seed = derive_seed(derive_seed(seed_of(cfg), "cv"), trait);
    const auto report = named("pheno", [&] {
      return run_cv(in.markers, in.phenos, trait, h, cv, in.covariates ? &*in.covariates : nullptr);
    });
    for (const auto& r : report.records)
      out << r.replicate << '\t' << to_string(r.model) << '\t' << format_double(r.accuracy) << '\t'
          << format_double(r.rmse) << '\t' << r.seed << '\t' << trait << '\n';
    for (std::size_t j = 0; j < report.region_ids.size(); ++j)
      imp << trait << '\t' << report.region_ids[j] << '\t' << format_double(report.mean_importance[static_cast<Index>(j)])
          << '\n';
    importance.push_back(report.mean_importance);
    for (auto m : cv.models) {
      const auto s = report.summary(m);
      std::cout << trait << '\t' << to_string(m) << "\tmean accuracy " << format_double(s.mean) << " (sd "
                << format_double(s.sd) << ", n " << s.n << ")\n";
    }
  }
  if (traits.size() > 1) {
    const auto tree = trait_similarity(traits, importance);
    auto t = open_out(out_path + ".tree.nwk");
    t << tree.newick << '\n';
  }
  write_manifest(out_path + ".manifest.tsv", "cv", cfg, kDataInputs);
  return 0;
}

int cmd_simulate(const RunConfig& cfg) {
  const auto out_dir = need(cfg, "out");
  SimConfig sc = preset(cfg.get("preset"));
  sc.seed = derive_seed(seed_of(cfg), "simulate");
  const SimResult sim = simulate(sc);
  fs::create_directories(out_dir);
  write_simulation(out_dir, sim);
  write_manifest(out_dir + "/manifest.tsv", "simulate", cfg, {},
                 {{"preset", cfg.get("preset")}, {"realized_h2", format_double(sim.truth.realized_h2)}});
  std::cout << "wrote " << sim.markers.n_lines() << " lines x " << sim.markers.n_markers() << " markers to " << out_dir
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"locepi: locally epistatic genomic prediction"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_file;
  std::map<std::string, std::string> flags;
  struct Sub {
    CLI::App* app;
    std::vector<std::string> keys;
  };
  std::map<std::string, Sub> subs;
  bool dump_defaults = false;

  auto add = [&](const std::string& name, const std::string& help, std::vector<std::string> keys) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_file, "configuration file (key = value)");
    for (const auto& key : keys) {
      std::string help_text;
      for (const auto& k : config_keys())
        if (key == k.name) help_text = std::string(k.help) + " [" + k.default_value + "]";
      auto* opt = sub->add_option("--" + key, flags[key], help_text);
      if (kBoolKeys.count(key)) opt->expected(0, 1);
    }
    subs[name] = {sub, keys};
    return sub;
  };

  const std::vector<std::string> data = {"markers", "map", "pheno", "trait", "covariates", "missing-code", "coding"};
  const std::vector<std::string> part = {"regions", "depth", "splits", "rule"};
  const std::vector<std::string> model = {"kernel", "poly-c", "poly-d", "bandwidth", "paper-gaussian-constant", "pcs",
                                          "all-levels"};
  auto join = [](std::initializer_list<std::vector<std::string>> parts, std::vector<std::string> extra) {
    std::vector<std::string> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    out.insert(out.end(), extra.begin(), extra.end());
    return out;
  };

  add("partition", "build the region hierarchy", join({part}, {"markers", "map", "missing-code", "coding", "out", "threads"}));
  add("fit", "fit region models and the sparse combiner; write a model bundle",
      join({data, part, model}, {"lambda1", "lambda2", "folds", "seed", "threads", "out"}));
  add("predict", "predict new lines from a model bundle",
      {"model", "markers", "covariates", "missing-code", "coding", "out", "threads"});
  add("assoc", "hierarchical region tests", join({data, part, model}, {"alpha", "null-sims", "seed", "threads", "out"}));
  add("cv", "cross-validated accuracy comparison",
      join({data, part, model}, {"lambda1", "lambda2", "folds", "models", "train-frac", "replicates", "seed", "threads", "out"}));
  add("simulate", "simulate a scenario", {"preset", "seed", "out"});
  std::vector<std::string> every;
  for (const auto& k : config_keys()) every.emplace_back(k.name);
  auto* config_cmd = add("config", "print the effective configuration", every);
  config_cmd->add_flag("--dump-defaults", dump_defaults, "print every key with its default and help");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    std::string name;
    for (auto* s : app.get_subcommands()) name = s->get_name();
    const Sub& sub = subs.at(name);
    if (name == "config" && dump_defaults) {
      std::cout << RunConfig().dump(true);
      return 0;
    }
    RunConfig cfg;
    if (!config_file.empty()) named("config", [&] {
        cfg.load_file(config_file);
        return 0;
      });
    for (const auto& key : sub.keys) {
      auto* opt = sub.app->get_option("--" + key);
      if (opt->count() == 0) continue;
      const auto& v = flags[key];
      cfg.set(key, kBoolKeys.count(key) && v.empty() ? "true" : v);
    }
    if (name == "partition") return cmd_partition(cfg);
    if (name == "fit") return cmd_fit(cfg);
    if (name == "predict") return cmd_predict(cfg);
    if (name == "assoc") return cmd_assoc(cfg);
    if (name == "cv") return cmd_cv(cfg);
    if (name == "simulate") return cmd_simulate(cfg);
    std::cout << cfg.dump();
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_numerical(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
