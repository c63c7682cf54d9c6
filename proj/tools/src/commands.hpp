#pragma once

#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace netme::cli {

struct IngestOptions {
  fs::path network;
  fs::path events;
  std::optional<fs::path> polygons;
  fs::path out;
  std::string proxy = "traffic";
  std::string proxy_label = "Road traffic";
  std::vector<std::string> covariates;
  std::vector<std::string> exposure_covariates;
  bool road_class_dummies = false;
  std::optional<std::string> road_class_reference;  // default: first level in sorted order
  std::optional<std::size_t> min_component_size;     // default: keep the largest component
  double snap_tolerance_m = 10.0;
};

// Returns the ingest report.
json cmd_ingest(const IngestOptions& options);

struct SimulateOptions {
  fs::path out;
  std::string lattice = "grid";  // grid | street
  int rows = 20;
  int cols = 20;
  Variant variant = Variant::classical_me;
  bool include_theta = true;
  double beta0 = 0.5;
  double beta_x = 1.0;
  std::vector<double> beta_z;   // one simulated regression covariate per entry
  std::vector<double> alpha_z;  // one simulated exposure covariate per entry
  bool lognormal_offsets = false;
  std::uint64_t seed = 1;
};

// Writes a dataset bundle plus network.geojson, events.geojson and truth.json.
json cmd_simulate(const SimulateOptions& options);

// Runs MAP, MCMC and the summaries; writes everything under config.out.
json cmd_fit(const FitConfig& config);

// Reads criteria.json of every fit. Throws ValidationError when the data
// hashes differ.
json cmd_compare(const std::vector<fs::path>& fits, const std::optional<fs::path>& out);

struct PriorAlternative {
  std::string slot;  // beta_x, tau_eps or tau_u
  PriorSpec prior;
};

// Alternatives (1)..(6) of the published sensitivity design.
std::vector<PriorAlternative> published_sensitivity_design();
std::vector<PriorAlternative> parse_sweep(const json& doc);

// Column (0) is the base configuration, column k swaps in alternative k.
json cmd_sensitivity(const FitConfig& base, const std::vector<PriorAlternative>& alternatives,
                     const fs::path& out);

// Choropleth GeoJSON of the posterior segment rates.
json cmd_export(const fs::path& fit_dir, const fs::path& network, const fs::path& out);

// Human-readable renderings printed by the commands.
std::string format_summary_table(const json& fit_report);
std::string format_comparison_table(const json& comparison);
std::string format_sensitivity_table(const json& sweep);

}  // namespace netme::cli
