#include "netme/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "netme/error.hpp"

namespace netme {

namespace {

double deviance(const LatentState& s, const Dataset& data, const ModelSpec& spec, DevianceScope scope) {
  double ll = outcome_loglik(data, linear_predictor(s, data, spec), spec);
  if (scope == DevianceScope::all_blocks && has_measurement_error(spec.variant))
    ll += exposure_logdensity(s, data) + error_logdensity(s, data, spec.variant);
  return -2.0 * ll;
}

double quantile_sorted(const std::vector<double>& v, double p) {
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Eigen::VectorXd log_normal_pdf(const Eigen::VectorXd& v, const Eigen::VectorXd& mean, double precision) {
  return (0.5 * std::log(precision / (2.0 * std::numbers::pi)) - 0.5 * precision * (v - mean).array().square())
      .matrix();
}

double log_poisson_pmf(double k, double mu) { return k * std::log(mu) - mu - std::lgamma(k + 1.0); }

}  // namespace

DicResult dic(const PosteriorSamples& samples, const Dataset& data, const ModelSpec& spec, DevianceScope scope) {
  if (samples.draws_per_chain() == 0) throw ValidationError("DIC needs at least one draw");
  double sum = 0.0;
  double count = 0.0;
  Eigen::Index flat = 0;
  for (std::size_t c = 0; c < samples.n_chains(); ++c) {
    for (Eigen::Index d = 0; d < samples.chains[c].scalars.rows(); ++d, ++flat) {
      double dev = std::numeric_limits<double>::quiet_NaN();
      try {
        dev = deviance(samples.state(c, d), data, spec, scope);
      } catch (const NumericalError&) {
      }
      if (!std::isfinite(dev)) throw NumericalError("deviance is not finite at draw " + std::to_string(flat));
      sum += dev;
      count += 1.0;
    }
  }
  DicResult r;
  r.dbar = sum / count;
  r.d_hat = deviance(samples.mean_state(), data, spec, scope);
  r.p_d = r.dbar - r.d_hat;
  r.dic = r.dbar + r.p_d;
  return r;
}

Eigen::MatrixXd pointwise_loglik_draws(const PosteriorSamples& samples, const Dataset& data,
                                       const ModelSpec& spec, DevianceScope scope) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const bool stacked = scope == DevianceScope::all_blocks && has_measurement_error(spec.variant);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(samples.n_chains()) * samples.draws_per_chain(), stacked ? 3 * n : n);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < samples.n_chains(); ++c)
    for (Eigen::Index d = 0; d < samples.chains[c].scalars.rows(); ++d, ++row) {
      const LatentState st = samples.state(c, d);
      out.row(row).head(n) = pointwise_loglik(data, linear_predictor(st, data, spec), spec).transpose();
      if (!stacked) continue;
      Eigen::VectorXd error_mean = st.x;
      if (spec.variant == Variant::spatial_me) error_mean += st.phi;
      out.row(row).segment(n, n) = log_normal_pdf(st.x, exposure_mean(st, data), st.tau_eps).transpose();
      out.row(row).tail(n) = log_normal_pdf(data.w, error_mean, st.tau_u).transpose();
    }
  return out;
}

WaicResult waic(const Eigen::MatrixXd& loglik) {
  const Eigen::Index s = loglik.rows();
  if (s < 2) throw ValidationError("WAIC needs at least two draws");
  WaicResult r;
  for (Eigen::Index i = 0; i < loglik.cols(); ++i) {
    const auto col = loglik.col(i);
    const double mx = col.maxCoeff();
    if (!std::isfinite(mx)) throw NumericalError("pointwise log likelihood is not finite at observation " +
                                                 std::to_string(i));
    const double lse = mx + std::log((col.array() - mx).exp().sum());
    r.lppd += lse - std::log(static_cast<double>(s));
    const double mean = col.mean();
    r.p_waic += (col.array() - mean).square().sum() / static_cast<double>(s - 1);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

WaicResult waic(const PosteriorSamples& samples, const Dataset& data, const ModelSpec& spec, DevianceScope scope) {
  return waic(pointwise_loglik_draws(samples, data, spec, scope));
}

ParameterSummary summarize_draws(const std::string& name, const Eigen::VectorXd& draws) {
  if (draws.size() == 0) throw ValidationError("no draws to summarise for " + name);
  ParameterSummary s;
  s.name = name;
  s.mean = draws.mean();
  s.sd = draws.size() > 1
             ? std::sqrt((draws.array() - s.mean).square().sum() / static_cast<double>(draws.size() - 1))
             : 0.0;
  std::vector<double> sorted(draws.data(), draws.data() + draws.size());
  std::sort(sorted.begin(), sorted.end());
  s.q05 = quantile_sorted(sorted, 0.05);
  s.q95 = quantile_sorted(sorted, 0.95);
  return s;
}

std::vector<ParameterSummary> summarize(const PosteriorSamples& samples) {
  std::vector<ParameterSummary> out;
  for (std::size_t p = 0; p < samples.scalar_names.size(); ++p)
    out.push_back(summarize_draws(samples.scalar_names[p], samples.pooled(p)));
  return out;
}

std::vector<ParameterSummary> lambda_summary(const PosteriorSamples& samples, const Dataset& data,
                                             const ModelSpec& spec) {
  const auto n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd lambda(static_cast<Eigen::Index>(samples.n_chains()) * samples.draws_per_chain(), n);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < samples.n_chains(); ++c)
    for (Eigen::Index d = 0; d < samples.chains[c].scalars.rows(); ++d, ++row)
      lambda.row(row) = linear_predictor(samples.state(c, d), data, spec).array().exp().transpose();
  std::vector<ParameterSummary> out;
  out.reserve(data.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string id =
        data.segment_ids.empty() ? std::to_string(i) : data.segment_ids[static_cast<std::size_t>(i)];
    out.push_back(summarize_draws(id, lambda.col(i)));
  }
  return out;
}

double rate_ratio(double beta_std, double delta_original, double covariate_sd) {
  if (!(covariate_sd > 0.0)) throw ValidationError("covariate_sd must be positive");
  return std::exp(beta_std * delta_original / covariate_sd);
}

std::vector<CountClass> predicted_vs_observed(const PosteriorSamples& samples, const Dataset& data,
                                              const ModelSpec& spec) {
  constexpr int kClasses = 12;  // 0..10 and 11+
  std::vector<CountClass> out(kClasses);
  for (int k = 0; k < kClasses; ++k) out[static_cast<std::size_t>(k)].label = k < 11 ? std::to_string(k) : "11+";
  for (Eigen::Index i = 0; i < data.y.size(); ++i)
    out[static_cast<std::size_t>(std::min(11.0, data.y(i)))].observed += 1.0;

  double draws = 0.0;
  for (std::size_t c = 0; c < samples.n_chains(); ++c) {
    for (Eigen::Index d = 0; d < samples.chains[c].scalars.rows(); ++d) {
      const Eigen::VectorXd eta = linear_predictor(samples.state(c, d), data, spec);
      for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double mu = data.e(i) * std::exp(eta(i));
        double below = 0.0;
        for (int k = 0; k < 11; ++k) {
          const double p = std::exp(log_poisson_pmf(k, mu));
          out[static_cast<std::size_t>(k)].predicted += p;
          below += p;
        }
        out[11].predicted += std::max(0.0, 1.0 - below);
      }
      draws += 1.0;
    }
  }
  if (draws > 0.0)
    for (auto& c : out) c.predicted /= draws;
  return out;
}

void flag_best(std::vector<ComparisonRow>& rows) {
  if (rows.empty()) return;
  std::size_t best_dic = 0, best_waic = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].dic < rows[best_dic].dic) best_dic = i;
    if (rows[i].waic < rows[best_waic].waic) best_waic = i;
  }
  for (auto& r : rows) r.best_dic = r.best_waic = false;
  rows[best_dic].best_dic = true;
  rows[best_waic].best_waic = true;
}

}  // namespace netme
