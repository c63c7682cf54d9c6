#include "netme/diagnostics.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "netme/error.hpp"

namespace netme {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_equal_lengths(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) throw ValidationError("no chains supplied");
  for (const auto& c : chains)
    if (c.size() != chains.front().size()) throw ValidationError("chains have different lengths");
}

std::vector<Eigen::VectorXd> split_chains(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : chains) {
    const Eigen::Index half = c.size() / 2;
    // An odd draw count drops the middle draw.
    out.emplace_back(c.head(half));
    out.emplace_back(c.tail(half));
  }
  return out;
}

bool constant(const std::vector<Eigen::VectorXd>& chains) {
  const double first = chains.front().size() ? chains.front()(0) : 0.0;
  for (const auto& c : chains)
    for (Eigen::Index i = 0; i < c.size(); ++i)
      if (c(i) != first) return false;
  return true;
}

double sample_variance(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

// Biased autocovariance at lag t.
double autocovariance(const Eigen::VectorXd& v, double mean, Eigen::Index t) {
  const Eigen::Index n = v.size();
  double s = 0.0;
  for (Eigen::Index i = 0; i + t < n; ++i) s += (v(i) - mean) * (v(i + t) - mean);
  return s / static_cast<double>(n);
}

double basic_rhat(const std::vector<Eigen::VectorXd>& chains) {
  const auto m = static_cast<double>(chains.size());
  const auto n = static_cast<double>(chains.front().size());
  Eigen::VectorXd means(static_cast<Eigen::Index>(chains.size()));
  double w = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    means(static_cast<Eigen::Index>(c)) = chains[c].mean();
    w += sample_variance(chains[c]);
  }
  w /= m;
  const double b_over_n = sample_variance(means);
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

std::vector<Eigen::VectorXd> folded(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.data(), c.data() + c.size());
  const std::size_t mid = all.size() / 2;
  std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(mid), all.end());
  double median = all[mid];
  if (all.size() % 2 == 0) {
    const double lower = *std::max_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : chains) out.emplace_back((c.array() - median).abs());
  return out;
}

}  // namespace

std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd>& chains) {
  check_equal_lengths(chains);
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (Eigen::Index i = 0; i < chains[c].size(); ++i)
      all.emplace_back(chains[c](i), c * static_cast<std::size_t>(chains[c].size()) + static_cast<std::size_t>(i));
  std::sort(all.begin(), all.end());
  const auto s = static_cast<double>(all.size());
  std::vector<double> z(all.size());
  const boost::math::normal_distribution<double> normal;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j + 1 < all.size() && all[j + 1].first == all[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double score = boost::math::quantile(normal, (rank - 0.375) / (s + 0.25));
    for (std::size_t k = i; k <= j; ++k) z[all[k].second] = score;
    i = j + 1;
  }
  std::vector<Eigen::VectorXd> out;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const Eigen::Index n = chains[c].size();
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = z[c * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)];
    out.push_back(std::move(v));
  }
  return out;
}

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  check_equal_lengths(chains);
  const Eigen::Index n = chains.front().size();
  const auto m = static_cast<double>(chains.size());
  if (n < 4 || constant(chains)) return kNaN;

  std::vector<double> means(chains.size());
  double w = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    means[c] = chains[c].mean();
    w += sample_variance(chains[c]);
  }
  w /= m;
  const auto nd = static_cast<double>(n);
  double var_plus = w * (nd - 1.0) / nd;
  if (chains.size() > 1) {
    Eigen::Map<const Eigen::VectorXd> mv(means.data(), static_cast<Eigen::Index>(means.size()));
    var_plus += sample_variance(mv);
  }
  if (!(var_plus > 0.0)) return kNaN;

  auto rho = [&](Eigen::Index t) {
    double acov = 0.0;
    for (std::size_t c = 0; c < chains.size(); ++c) acov += autocovariance(chains[c], means[c], t);
    acov /= m;
    return 1.0 - (w - acov) / var_plus;
  };

  std::vector<double> rho_hat(static_cast<std::size_t>(n) + 2, 0.0);
  rho_hat[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho(1);
  rho_hat[1] = rho_odd;
  Eigen::Index t = 0;
  while (t < n - 5 && std::isfinite(rho_even + rho_odd) && rho_even + rho_odd > 0.0) {
    t += 2;
    rho_even = rho(t);
    rho_odd = rho(t + 1);
    if (rho_even + rho_odd >= 0.0) {
      rho_hat[static_cast<std::size_t>(t)] = rho_even;
      rho_hat[static_cast<std::size_t>(t + 1)] = rho_odd;
    }
  }
  const Eigen::Index max_t = t;
  if (rho_even > 0.0) rho_hat[static_cast<std::size_t>(max_t)] = rho_even;
  // Initial monotone sequence.
  for (Eigen::Index k = 1; k <= max_t - 3; k += 2) {
    const auto u = static_cast<std::size_t>(k);
    if (rho_hat[u + 1] + rho_hat[u + 2] > rho_hat[u - 1] + rho_hat[u]) {
      rho_hat[u + 1] = 0.5 * (rho_hat[u - 1] + rho_hat[u]);
      rho_hat[u + 2] = rho_hat[u + 1];
    }
  }
  const double total = m * nd;
  double tau = -1.0 + rho_hat[static_cast<std::size_t>(max_t) + 1];
  for (Eigen::Index k = 0; k <= max_t; ++k) tau += 2.0 * rho_hat[static_cast<std::size_t>(k)];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

std::optional<double> split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  check_equal_lengths(chains);
  if (chains.size() < 2 || chains.front().size() < 4 || constant(chains)) return std::nullopt;
  const double r = basic_rhat(split_chains(chains));
  if (!std::isfinite(r)) return std::nullopt;
  return r;
}

std::optional<double> rank_normalized_rhat(const std::vector<Eigen::VectorXd>& chains) {
  check_equal_lengths(chains);
  if (chains.size() < 2 || chains.front().size() < 4 || constant(chains)) return std::nullopt;
  const auto split = split_chains(chains);
  const double bulk = basic_rhat(rank_normalize(split));
  const auto fold = folded(split);
  double tail = bulk;
  if (!constant(fold)) tail = basic_rhat(rank_normalize(fold));
  const double r = std::max(bulk, tail);
  if (!std::isfinite(r)) return std::nullopt;
  return r;
}

double ess_bulk(const std::vector<Eigen::VectorXd>& chains) {
  check_equal_lengths(chains);
  if (constant(chains)) return kNaN;
  return effective_sample_size(rank_normalize(split_chains(chains)));
}

ParameterDiagnostics diagnose(const std::string& name, const std::vector<Eigen::VectorXd>& chains) {
  ParameterDiagnostics d;
  d.name = name;
  d.degenerate = constant(chains);
  if (d.degenerate) {
    d.ess_bulk = d.ess_mean = kNaN;
    d.mcse_mean = 0.0;
    return d;
  }
  d.ess_bulk = ess_bulk(chains);
  d.ess_mean = effective_sample_size(split_chains(chains));
  Eigen::Index total = 0;
  for (const auto& c : chains) total += c.size();
  Eigen::VectorXd pooled(total);
  Eigen::Index k = 0;
  for (const auto& c : chains) {
    pooled.segment(k, c.size()) = c;
    k += c.size();
  }
  d.mcse_mean = std::sqrt(sample_variance(pooled) / d.ess_mean);
  d.rhat = rank_normalized_rhat(chains);
  return d;
}

DiagnosticsReport diagnostics(const PosteriorSamples& samples) {
  DiagnosticsReport report;
  if (samples.chains.empty()) throw ValidationError("no posterior draws");
  if (samples.n_chains() < 2) report.warnings.push_back("single chain: R-hat omitted");
  for (std::size_t p = 0; p < samples.scalar_names.size(); ++p) {
    std::vector<Eigen::VectorXd> chains;
    for (const auto& c : samples.chains) chains.emplace_back(c.scalars.col(static_cast<Eigen::Index>(p)));
    ParameterDiagnostics d = diagnose(samples.scalar_names[p], chains);
    if (d.degenerate) report.warnings.push_back(d.name + ": all draws identical");
    if (d.rhat && *d.rhat > 1.01)
      report.warnings.push_back(d.name + ": R-hat " + std::to_string(*d.rhat) + " above 1.01");
    if (!d.degenerate && d.ess_bulk < 400.0)
      report.warnings.push_back(d.name + ": bulk ESS " + std::to_string(d.ess_bulk) + " below 400");
    report.parameters.push_back(std::move(d));
  }
  return report;
}

}  // namespace netme
