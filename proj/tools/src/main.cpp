#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"
#include "netme/error.hpp"

namespace {

using namespace netme;
using namespace netme::cli;

int report_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << "\n";
  return code;
}

struct FitFlags {
  std::string config;
  std::string bundle, variant, out, deviance;
  std::optional<int> iterations, burnin, thinning, chains, threads;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* cmd, bool need_out) {
    cmd->add_option("-c,--config", config, "fit configuration (JSON)");
    cmd->add_option("--bundle", bundle, "dataset bundle directory");
    cmd->add_option("--variant", variant, "baseline | classical_me | spatial_me");
    cmd->add_option("--deviance", deviance, "likelihood rows in DIC and WAIC: outcome | all_blocks");
    cmd->add_option("--iterations", iterations);
    cmd->add_option("--burnin", burnin);
    cmd->add_option("--thinning", thinning);
    cmd->add_option("--chains", chains);
    cmd->add_option("--threads", threads);
    cmd->add_option("--seed", seed);
    auto* o = cmd->add_option("-o,--out", out, "output directory");
    if (need_out) o->required();
  }

  FitConfig resolve() const {
    FitConfig cfg = config.empty() ? FitConfig{} : load_fit_config(config);
    if (!bundle.empty()) cfg.bundle = bundle;
    if (!variant.empty()) cfg.spec.variant = parse_variant(variant);
    if (!deviance.empty()) cfg.deviance = parse_deviance_scope(deviance);
    if (iterations) cfg.sampler.n_iterations = *iterations;
    if (burnin) cfg.sampler.n_burnin = *burnin;
    if (thinning) cfg.sampler.thinning = *thinning;
    if (chains) cfg.sampler.n_chains = *chains;
    if (threads) cfg.sampler.n_threads = *threads;
    if (seed) cfg.sampler.rng_seed = *seed;
    if (!out.empty()) cfg.out = out;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian Poisson models for event counts on road-network lattices with covariate measurement error"};
  app.require_subcommand(1);

  IngestOptions ingest;
  std::string polygons;
  std::optional<std::size_t> min_component;
  std::optional<std::string> reference;
  auto* ingest_cmd = app.add_subcommand("ingest", "build a dataset bundle from GeoJSON layers");
  ingest_cmd->add_option("--network", ingest.network, "LineString segments")->required();
  ingest_cmd->add_option("--events", ingest.events, "Point events")->required();
  ingest_cmd->add_option("--polygons", polygons, "Polygon covariate layer");
  ingest_cmd->add_option("-o,--out", ingest.out, "bundle directory")->required();
  ingest_cmd->add_option("--proxy", ingest.proxy, "attribute holding the error-prone covariate");
  ingest_cmd->add_option("--proxy-label", ingest.proxy_label);
  ingest_cmd->add_option("--covariate", ingest.covariates, "regression covariate (repeatable)");
  ingest_cmd->add_option("--exposure-covariate", ingest.exposure_covariates, "exposure-model covariate (repeatable)");
  ingest_cmd->add_flag("--road-class-dummies", ingest.road_class_dummies);
  ingest_cmd->add_option("--road-class-reference", reference);
  ingest_cmd->add_option("--min-component-size", min_component, "keep components of at least this size");
  ingest_cmd->add_option("--snap-tolerance", ingest.snap_tolerance_m, "meters");

  SimulateOptions sim;
  std::string sim_variant = "classical_me";
  bool no_theta = false;
  auto* sim_cmd = app.add_subcommand("simulate", "simulate a dataset bundle with known truth");
  sim_cmd->add_option("-o,--out", sim.out)->required();
  sim_cmd->add_option("--lattice", sim.lattice, "grid | street");
  sim_cmd->add_option("--rows", sim.rows);
  sim_cmd->add_option("--cols", sim.cols);
  sim_cmd->add_option("--variant", sim_variant);
  sim_cmd->add_flag("--no-theta", no_theta, "omit the spatial term of the outcome");
  sim_cmd->add_option("--beta0", sim.beta0);
  sim_cmd->add_option("--beta-x", sim.beta_x);
  sim_cmd->add_option("--beta-z", sim.beta_z, "coefficients of simulated regression covariates");
  sim_cmd->add_option("--alpha-z", sim.alpha_z, "coefficients of simulated exposure covariates");
  sim_cmd->add_flag("--lognormal-offsets", sim.lognormal_offsets);
  sim_cmd->add_option("--seed", sim.seed);

  FitFlags fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit one model variant");
  fit.add(fit_cmd, false);

  std::vector<std::string> compare_dirs;
  std::string compare_out;
  auto* compare_cmd = app.add_subcommand("compare", "compare fits by DIC and WAIC");
  compare_cmd->add_option("fits", compare_dirs, "fit directories")->required();
  compare_cmd->add_option("-o,--out", compare_out);

  FitFlags sens;
  std::string sweep;
  bool published_design = false;
  auto* sens_cmd = app.add_subcommand("sensitivity", "refit under alternative priors");
  sens.add(sens_cmd, true);
  sens_cmd->add_option("--sweep", sweep, "JSON file listing prior alternatives");
  sens_cmd->add_flag("--published-design", published_design, "the six published alternatives");

  std::string export_fit, export_network, export_out;
  auto* export_cmd = app.add_subcommand("export", "write posterior rates as GeoJSON");
  export_cmd->add_option("--fit", export_fit)->required();
  export_cmd->add_option("--network", export_network)->required();
  export_cmd->add_option("-o,--out", export_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("validation", e.what(), 2);
  }

  try {
    if (*ingest_cmd) {
      if (!polygons.empty()) ingest.polygons = polygons;
      ingest.min_component_size = min_component;
      ingest.road_class_reference = reference;
      const json report = cmd_ingest(ingest);
      std::cout << report["message"].get<std::string>() << "\n";
    } else if (*sim_cmd) {
      sim.variant = parse_variant(sim_variant);
      sim.include_theta = !no_theta;
      std::cout << cmd_simulate(sim).dump(2) << "\n";
    } else if (*fit_cmd) {
      std::cout << format_summary_table(cmd_fit(fit.resolve()));
    } else if (*compare_cmd) {
      std::vector<fs::path> dirs(compare_dirs.begin(), compare_dirs.end());
      std::optional<fs::path> out;
      if (!compare_out.empty()) out = compare_out;
      std::cout << format_comparison_table(cmd_compare(dirs, out));
    } else if (*sens_cmd) {
      if (!sweep.empty() && published_design) throw ValidationError("--sweep and --published-design are exclusive");
      std::vector<PriorAlternative> alternatives;
      if (published_design) alternatives = published_sensitivity_design();
      if (!sweep.empty()) alternatives = parse_sweep(read_json(sweep));
      std::cout << format_sensitivity_table(cmd_sensitivity(sens.resolve(), alternatives, sens.out));
    } else if (*export_cmd) {
      const json r = cmd_export(export_fit, export_network, export_out);
      std::cout << r["features"].get<std::size_t>() << " features written\n";
    }
  } catch (const Error& e) {
    return e.kind() == ErrorKind::validation ? report_error("validation", e.what(), 2)
                                             : report_error("numerical", e.what(), 3);
  } catch (const json::exception& e) {
    return report_error("validation", e.what(), 2);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error("validation", e.what(), 2);
  }
  return 0;
}
