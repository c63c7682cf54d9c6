#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "netme/model.hpp"

namespace netme {

// ---------------------------------------------------------------------------
// Augmented pseudo-observation system

// Stacked observation blocks of the measurement-error hierarchy: outcome rows
// (y), exposure rows carrying zero pseudo-observations (0 = -x + mu + eps),
// and error rows (w = x + u [+ phi]). Baseline data yield the outcome block
// alone.
struct AugmentedSystem {
  enum class Block { outcome = 0, exposure = 1, error = 2 };

  // rows x (1 or 3); NaN marks entries a column does not observe.
  Eigen::MatrixXd response;
  // Linear part of every row's predictor over the LatentLayout coordinates.
  // The outcome rows' beta_x * x term is bilinear and added by predictor().
  Eigen::SparseMatrix<double> design;
  std::vector<Block> block;
  std::vector<std::size_t> site;
  bool measurement_error = false;

  Eigen::Index rows() const { return response.rows(); }
  Eigen::VectorXd predictor(const LatentState& state, const LatentLayout& layout) const;
};

AugmentedSystem build_augmented_system(const Dataset& data, const ModelSpec& spec);

struct AugmentedLogLik {
  double outcome = 0.0;
  double exposure = 0.0;
  double error = 0.0;
};

// Log likelihood of every block evaluated from the stacked rows.
AugmentedLogLik augmented_loglik(const AugmentedSystem& system, const LatentState& state,
                                 const Dataset& data, const ModelSpec& spec);

// ---------------------------------------------------------------------------
// MAP

struct MapOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-6;
  // Fixed precisions; unset ones default to their prior medians.
  std::optional<double> tau_theta, tau_eps, tau_u, tau_phi;
};

struct MapResult {
  LatentState state;
  int iterations = 0;
  double gradient_norm = 0.0;  // projected, infinity norm
  double logposterior = 0.0;
};

// Projected damped Newton on the joint log posterior over (beta, alpha, x,
// theta, phi) at fixed precisions. Each step solves the KKT system of the
// per-component sum-to-zero constraints. Throws NumericalError with the last
// gradient norm when max_iterations is reached.
MapResult fit_map(const Dataset& data, const ModelSpec& spec, const IcarStructure& icar,
                  const MapOptions& options = {});

// Gradient with theta and phi entries projected onto the constraint subspace.
Eigen::VectorXd projected_gradient(const LatentState& state, const Dataset& data, const ModelSpec& spec,
                                   const IcarStructure& icar);

// ---------------------------------------------------------------------------
// MCMC

enum class Block { beta, alpha, x, theta, phi, tau_theta, tau_eps, tau_u, tau_phi };

std::string to_string(Block b);

struct SamplerConfig {
  int n_iterations = 30000;
  int n_burnin = 10000;
  int thinning = 4;
  std::uint64_t rng_seed = 20240611;
  int n_chains = 4;
  double target_accept_single = 0.44;
  double target_accept_block = 0.234;
  int adaptation_window = 50;
  // Threads for running chains; 0 reads NETME_THREADS, else hardware concurrency.
  int n_threads = 0;
  // Blocks held at their initial value.
  std::set<Block> fixed_blocks;
  // Update Gamma-prior precisions by Metropolis on log(tau) instead of their
  // conjugate draw.
  bool force_mh_precisions = false;
  // Store theta, x and phi draws (needed for DIC, WAIC and rate summaries).
  bool store_fields = true;

  // Throws ValidationError.
  void validate() const;
  int n_draws() const { return (n_iterations - n_burnin) / thinning; }
};

// Seed of chain c: SplitMix64 applied to master_seed + c.
std::uint64_t chain_seed(std::uint64_t master_seed, int chain);

struct ChainSamples {
  std::uint64_t seed = 0;
  Eigen::MatrixXd scalars;  // draws x scalar parameters
  Eigen::MatrixXd theta;    // draws x n, empty when not stored or not sampled
  Eigen::MatrixXd x;
  Eigen::MatrixXd phi;
  std::vector<double> logpost_trace;  // joint log posterior after every iteration
  std::map<std::string, double> acceptance;  // per block, post burn-in
};

struct PosteriorSamples {
  std::vector<std::string> scalar_names;
  std::vector<ChainSamples> chains;
  Variant variant = Variant::baseline;
  bool include_spatial_theta = true;
  Eigen::Index n_beta = 0;
  Eigen::Index n_alpha = 0;

  std::size_t n_chains() const { return chains.size(); }
  Eigen::Index draws_per_chain() const { return chains.empty() ? 0 : chains.front().scalars.rows(); }
  std::optional<std::size_t> scalar_index(const std::string& name) const;
  // All chains concatenated.
  Eigen::VectorXd pooled(std::size_t scalar) const;
  // Latent state at draw d of chain c.
  LatentState state(std::size_t chain, Eigen::Index draw) const;
  // Coordinate-wise posterior mean over all chains.
  LatentState mean_state() const;
};

// Names of the scalar parameters in sampling order.
std::vector<std::string> scalar_parameter_names(const Dataset& data, const ModelSpec& spec);

// Runs config.n_chains chains started from the MAP (or `initial`), each with
// its own RNG stream. Identical (data, spec, config) reproduce identical
// chains. Throws NumericalError naming the iteration and block when the log
// posterior becomes non-finite.
PosteriorSamples run_mcmc(const Dataset& data, const ModelSpec& spec, const IcarStructure& icar,
                          const SamplerConfig& config, const std::optional<LatentState>& initial = {});

}  // namespace netme
