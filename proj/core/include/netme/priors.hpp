#pragma once

#include <optional>
#include <string>
#include <variant>

namespace netme {

// N(mean, variance). Configuration files may give a precision instead; the
// parser converts it (see config loading in the CLI).
struct NormalPrior {
  double mean = 0.0;
  double variance = 50.0;
};

// Gamma(shape, rate) on a precision tau, which is the same law as the
// "logGamma(shape, rate)" prior on log(tau).
struct GammaPrecisionPrior {
  double shape = 1.0;
  double rate = 5e-05;
};

// Penalised-complexity prior on a precision defined by P(1/sqrt(tau) > sigma0) = alpha.
struct PcPrecisionPrior {
  double sigma0 = 1.0;
  double alpha = 0.1;

  double lambda() const;
};

using PriorSpec = std::variant<NormalPrior, GammaPrecisionPrior, PcPrecisionPrior>;

double logdensity_normal(double x, double mean, double variance);

// a log b - lgamma(a) + (a - 1) log tau - b tau
double logdensity_loggamma_precision(double tau, double shape, double rate);

// log(lambda / 2) - 1.5 log tau - lambda / sqrt(tau), lambda = -log(alpha) / sigma0
double logdensity_pc_precision(double tau, double sigma0, double alpha);

// Density of the prior at x. Precision priors return -inf for x <= 0.
double logdensity(const PriorSpec& prior, double x);

// Reports the first parameter-range violation, e.g. "variance must be positive".
std::optional<std::string> validate_prior(const PriorSpec& prior);

bool is_precision_prior(const PriorSpec& prior);

// Median of a precision prior, used as the fixed precision for the MAP start.
double precision_prior_median(const PriorSpec& prior);

std::string describe(const PriorSpec& prior);

}  // namespace netme
