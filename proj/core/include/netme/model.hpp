#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>
#include <string_view>
#include <vector>

#include "netme/data.hpp"
#include "netme/gmrf.hpp"
#include "netme/priors.hpp"

namespace netme {

enum class Variant { baseline, classical_me, spatial_me };

// Outcome family of the regression equation. Poisson is the model; the
// Gaussian identity-link surrogate and the data-free variant exist for
// closed-form and conjugacy checks.
enum class Outcome { poisson, gaussian, none };

std::string to_string(Variant v);
Variant parse_variant(std::string_view text);
std::string to_string(Outcome o);
Outcome parse_outcome(std::string_view text);

inline bool has_measurement_error(Variant v) { return v != Variant::baseline; }

struct PriorTable {
  PriorSpec beta_intercept = NormalPrior{0.0, 50.0};
  PriorSpec beta_x = NormalPrior{0.0, 50.0};  // proxy slot (beta_w or beta_x)
  PriorSpec beta_z = NormalPrior{0.0, 50.0};  // every regression covariate
  PriorSpec alpha = NormalPrior{0.0, 50.0};   // exposure intercept and slopes
  PriorSpec tau_theta = GammaPrecisionPrior{1.0, 5e-05};
  PriorSpec tau_phi = GammaPrecisionPrior{1.0, 5e-05};
  PriorSpec tau_eps = PcPrecisionPrior{1.0, 0.1};
  PriorSpec tau_u = PcPrecisionPrior{2.0, 0.1};

  // Names: beta0, beta_x, beta_z, alpha, tau_theta, tau_phi, tau_eps, tau_u.
  PriorSpec& at(std::string_view name);
  const PriorSpec& at(std::string_view name) const;
  static const std::vector<std::string>& names();
};

struct ModelSpec {
  Variant variant = Variant::baseline;
  PriorTable priors;
  bool include_spatial_theta = true;
  Outcome outcome = Outcome::poisson;
  double gaussian_precision = 1.0;  // noise precision of the Gaussian surrogate

  // One message per problem; empty when valid.
  std::vector<std::string> validate() const;
};

// Latent quantities on the standardised scale. beta = (intercept, proxy
// slot, z coefficients); alpha = (exposure intercept, ztilde coefficients).
// Empty vectors mark blocks the variant does not use.
struct LatentState {
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;
  Eigen::VectorXd theta;
  Eigen::VectorXd x;
  Eigen::VectorXd phi;
  double tau_theta = 1.0;
  double tau_eps = 1.0;
  double tau_u = 1.0;
  double tau_phi = 1.0;

  static LatentState zeros(const Dataset& data, const ModelSpec& spec);
};

// Flat ordering (beta, alpha, x, theta, phi) of the Gaussian-latent part of
// the state used by the MAP solver and gradient checks.
struct LatentLayout {
  Eigen::Index n_beta = 0, n_alpha = 0, n_x = 0, n_theta = 0, n_phi = 0;

  LatentLayout(const Dataset& data, const ModelSpec& spec);
  Eigen::Index beta() const { return 0; }
  Eigen::Index alpha() const { return n_beta; }
  Eigen::Index x() const { return alpha() + n_alpha; }
  Eigen::Index theta() const { return x() + n_x; }
  Eigen::Index phi() const { return theta() + n_theta; }
  Eigen::Index size() const { return phi() + n_phi; }

  Eigen::VectorXd flatten(const LatentState& s) const;
  void unflatten(const Eigen::VectorXd& v, LatentState& s) const;
};

// eta = beta0 + beta_1 * (w or x) + Z beta_z + theta. Throws NumericalError
// naming the first non-finite entry.
Eigen::VectorXd linear_predictor(const LatentState& state, const Dataset& data, const ModelSpec& spec);

// Largest |eta| accepted before exp(eta) is considered an overflow.
inline constexpr double kEtaLimit = 50.0;

// sum_i y_i (log e_i + eta_i) - e_i exp(eta_i) - lgamma(y_i + 1). Throws
// NumericalError when |eta_i| exceeds kEtaLimit.
double loglik_poisson(const Eigen::VectorXd& y, const Eigen::VectorXd& e, const Eigen::VectorXd& eta);

// Per-observation outcome log likelihood (Poisson or Gaussian surrogate).
Eigen::VectorXd pointwise_loglik(const Dataset& data, const Eigen::VectorXd& eta, const ModelSpec& spec);
double outcome_loglik(const Dataset& data, const Eigen::VectorXd& eta, const ModelSpec& spec);

// Exposure means mu = alpha0 + Ztilde alpha.
Eigen::VectorXd exposure_mean(const LatentState& state, const Dataset& data);

// sum_i log N(x_i; mu_i, 1/tau_eps)
double exposure_logdensity(const LatentState& state, const Dataset& data);

// classical: sum_i log N(w_i; x_i, 1/tau_u); spatial: mean x_i + phi_i.
double error_logdensity(const LatentState& state, const Dataset& data, Variant variant);

struct LogPosteriorTerms {
  double outcome = 0.0;
  double exposure = 0.0;
  double error = 0.0;
  double icar_theta = 0.0;
  double icar_phi = 0.0;
  double priors = 0.0;

  double total() const { return outcome + exposure + error + icar_theta + icar_phi + priors; }
};

// Sum of prior log densities for every parameter the variant samples.
double prior_logdensity(const LatentState& state, const Dataset& data, const ModelSpec& spec);

// Throws NumericalError naming the first non-finite term.
LogPosteriorTerms joint_logposterior_terms(const LatentState& state, const Dataset& data,
                                           const ModelSpec& spec, const IcarStructure& icar);
double joint_logposterior(const LatentState& state, const Dataset& data, const ModelSpec& spec,
                          const IcarStructure& icar);

// Gradient of the joint log posterior over the LatentLayout coordinates at
// fixed precisions.
Eigen::VectorXd joint_gradient(const LatentState& state, const Dataset& data, const ModelSpec& spec,
                               const IcarStructure& icar);

// Upper triangle of minus the Hessian over the LatentLayout coordinates. With
// `fisher` the bilinear (beta_x, x) curvature from the Poisson residual is
// dropped, which keeps the matrix positive semidefinite.
Eigen::SparseMatrix<double> negative_hessian(const LatentState& state, const Dataset& data,
                                             const ModelSpec& spec, const IcarStructure& icar,
                                             bool fisher = false);

// Human-readable coefficient labels for beta and alpha.
std::vector<std::string> beta_names(const Dataset& data);
std::vector<std::string> alpha_names(const Dataset& data);

}  // namespace netme
