#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netme/inference.hpp"
#include "netme/lattice.hpp"
#include "netme/selection.hpp"

namespace netme {

// Rook-adjacency grid of unit-length pseudo-segments, numbered row-major.
// Throws ValidationError unless rows, cols >= 2.
SegmentNetwork make_grid_lattice(int rows, int cols);

// Path 0 - 1 - ... - (n-1) of unit-length pseudo-segments.
SegmentNetwork make_path_lattice(int n);

// Street segments of a rows x cols block grid (node spacing `spacing_m`):
// horizontal segments first, row by row, then vertical ones. Adjacency is left
// to build_adjacency.
std::vector<Segment> make_street_grid_segments(int rows, int cols, double spacing_m = 100.0);

struct OffsetPolicy {
  enum class Kind { constant, lognormal };
  Kind kind = Kind::constant;
  double value = 1.0;
  // lognormal(log_mean, log_sd) in meters, multiplied by `scale` (km by default).
  double log_mean = 4.2121275978784842;  // log(67.5)
  double log_sd = 1.0;
  double scale = 1e-3;
};

struct SimScenario {
  int rows = 20;
  int cols = 20;
  std::optional<SegmentNetwork> network;  // replaces the grid when set
  Variant variant = Variant::classical_me;
  bool include_theta = true;
  double beta0 = 0.5;
  double beta_x = 1.0;
  std::vector<double> beta_z;   // one N(0,1) regression covariate per entry
  double alpha0 = 0.0;
  std::vector<double> alpha_z;  // one N(0,1) exposure covariate per entry
  double tau_theta = 4.0;
  double tau_eps = 1.0;
  double tau_u = 1.0;
  double tau_phi = 1.0;
  OffsetPolicy offsets;
  std::uint64_t seed = 1;

  // Throws ValidationError.
  void validate() const;
};

struct SimulatedData {
  SegmentNetwork network;
  Dataset data;
  // Generating state on the standardised scale used by the model, and on the
  // original scale of the simulation.
  LatentState truth;
  LatentState truth_original;
};

// Forward simulation: theta (and phi) from the constrained ICAR law, x from
// the exposure model, w = x + u (+ phi), y ~ Poisson(e exp(eta)). Baseline
// scenarios observe x without error. Throws NumericalError when a generated
// |eta| exceeds kEtaLimit.
SimulatedData simulate_dataset(const SimScenario& scenario);

struct ModelFitReport {
  Variant variant = Variant::baseline;
  ParameterSummary beta;        // proxy-slot coefficient, standardised scale
  double beta_original = 0.0;   // posterior mean per unit of the raw proxy
  double low90_original = 0.0;
  double high90_original = 0.0;
  bool covers_truth = false;
  DicResult dic;
  WaicResult waic;
  std::string error;  // set when the fit failed
};

struct AttenuationReport {
  std::uint64_t seed = 0;
  double true_beta_x = 0.0;
  std::vector<ModelFitReport> fits;
};

inline constexpr Variant kAllVariants[] = {Variant::baseline, Variant::classical_me, Variant::spatial_me};

// Simulates one dataset and fits each variant with default priors.
AttenuationReport attenuation_experiment(const SimScenario& scenario, const SamplerConfig& config,
                                         std::span<const Variant> variants = kAllVariants,
                                         DevianceScope scope = DevianceScope::outcome);

// Independent replications with seeds derived from scenario.seed, run on up to
// `n_threads` threads (0: NETME_THREADS or hardware). Reports are ordered by
// replication.
std::vector<AttenuationReport> run_replications(const SimScenario& scenario, const SamplerConfig& config,
                                                int n_replications, std::span<const Variant> variants = kAllVariants,
                                                DevianceScope scope = DevianceScope::outcome, int n_threads = 0);

}  // namespace netme
