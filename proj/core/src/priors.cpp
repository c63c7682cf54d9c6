#include "netme/priors.hpp"

#include <boost/math/distributions/gamma.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "netme/error.hpp"

namespace netme {

double PcPrecisionPrior::lambda() const { return -std::log(alpha) / sigma0; }

double logdensity_normal(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - d * d / (2.0 * variance);
}

double logdensity_loggamma_precision(double tau, double shape, double rate) {
  if (!(tau > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(tau) - rate * tau;
}

double logdensity_pc_precision(double tau, double sigma0, double alpha) {
  if (!(tau > 0.0)) return -std::numeric_limits<double>::infinity();
  const double lambda = -std::log(alpha) / sigma0;
  return std::log(lambda / 2.0) - 1.5 * std::log(tau) - lambda / std::sqrt(tau);
}

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

double logdensity(const PriorSpec& prior, double x) {
  return std::visit(
      overloaded{[x](const NormalPrior& p) { return logdensity_normal(x, p.mean, p.variance); },
                 [x](const GammaPrecisionPrior& p) { return logdensity_loggamma_precision(x, p.shape, p.rate); },
                 [x](const PcPrecisionPrior& p) { return logdensity_pc_precision(x, p.sigma0, p.alpha); }},
      prior);
}

std::optional<std::string> validate_prior(const PriorSpec& prior) {
  return std::visit(
      overloaded{[](const NormalPrior& p) -> std::optional<std::string> {
                   if (!std::isfinite(p.mean)) return "mean must be finite";
                   if (!(p.variance > 0.0) || !std::isfinite(p.variance)) return "variance must be positive";
                   return std::nullopt;
                 },
                 [](const GammaPrecisionPrior& p) -> std::optional<std::string> {
                   if (!(p.shape > 0.0) || !std::isfinite(p.shape)) return "shape must be positive";
                   if (!(p.rate > 0.0) || !std::isfinite(p.rate)) return "rate must be positive";
                   return std::nullopt;
                 },
                 [](const PcPrecisionPrior& p) -> std::optional<std::string> {
                   if (!(p.sigma0 > 0.0) || !std::isfinite(p.sigma0)) return "sigma0 must be positive";
                   if (!(p.alpha > 0.0 && p.alpha < 1.0)) return "alpha in (0,1)";
                   return std::nullopt;
                 }},
      prior);
}

bool is_precision_prior(const PriorSpec& prior) { return !std::holds_alternative<NormalPrior>(prior); }

double precision_prior_median(const PriorSpec& prior) {
  if (const auto* g = std::get_if<GammaPrecisionPrior>(&prior)) {
    return boost::math::median(boost::math::gamma_distribution<double>(g->shape, 1.0 / g->rate));
  }
  if (const auto* pc = std::get_if<PcPrecisionPrior>(&prior)) {
    // sigma ~ Exponential(lambda) under the PC construction.
    const double sigma_median = std::log(2.0) / pc->lambda();
    return 1.0 / (sigma_median * sigma_median);
  }
  throw ValidationError("median requested for a non-precision prior");
}

std::string describe(const PriorSpec& prior) {
  std::ostringstream out;
  std::visit(overloaded{[&](const NormalPrior& p) { out << "N(" << p.mean << ", " << p.variance << ")"; },
                        [&](const GammaPrecisionPrior& p) { out << "logGamma(" << p.shape << ", " << p.rate << ")"; },
                        [&](const PcPrecisionPrior& p) { out << "PC(" << p.sigma0 << ", " << p.alpha << ")"; }},
             prior);
  return out.str();
}

}  // namespace netme
