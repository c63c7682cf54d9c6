#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>

#include "netme/selection.hpp"
#include "toy.hpp"

using namespace netme;

namespace {

double log_poisson(double y, double mean) {
  return std::log(boost::math::pdf(boost::math::poisson_distribution<double>(mean), y));
}

double log_normal(double x, double mean, double sd) {
  return std::log(boost::math::pdf(boost::math::normal_distribution<double>(mean, sd), x));
}

// Outcome log likelihood of one state, written out per segment.
double outcome_ll(const LatentState& s, const Dataset& d, Variant v) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    double eta = s.beta(0) + s.beta(1) * (v == Variant::baseline ? d.w(i) : s.x(i));
    for (Eigen::Index j = 0; j < d.z.cols(); ++j) eta += s.beta(2 + j) * d.z(i, j);
    if (s.theta.size()) eta += s.theta(i);
    ll += log_poisson(d.y(i), d.e(i) * std::exp(eta));
  }
  return ll;
}

double other_blocks_ll(const LatentState& s, const Dataset& d) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    double mu = s.alpha(0);
    for (Eigen::Index j = 0; j < d.ztilde.cols(); ++j) mu += s.alpha(1 + j) * d.ztilde(i, j);
    ll += log_normal(s.x(i), mu, 1 / std::sqrt(s.tau_eps));
    ll += log_normal(d.w(i), s.x(i) + (s.phi.size() ? s.phi(i) : 0.0), 1 / std::sqrt(s.tau_u));
  }
  return ll;
}

PosteriorSamples short_run(const oracle::Toy& toy, const ModelSpec& spec, int iterations = 200) {
  SamplerConfig c;
  c.n_iterations = iterations;
  c.n_burnin = iterations / 2;
  c.thinning = 2;
  c.n_chains = 2;
  c.n_threads = 1;
  c.rng_seed = 5;
  return run_mcmc(toy.data, spec, toy.icar, c);
}

}  // namespace

TEST(Selection, DicMatchesDirectComputation) {
  const auto toy = oracle::make_toy(3, 4, Variant::classical_me, 41);
  for (Variant v : {Variant::baseline, Variant::classical_me}) {
    ModelSpec spec;
    spec.variant = v;
    const PosteriorSamples s = short_run(toy, spec);
    for (DevianceScope scope : {DevianceScope::outcome, DevianceScope::all_blocks}) {
      auto ll = [&](const LatentState& st) {
        double out = outcome_ll(st, toy.data, v);
        if (scope == DevianceScope::all_blocks && v != Variant::baseline) out += other_blocks_ll(st, toy.data);
        return out;
      };
      double dbar = 0.0;
      int count = 0;
      for (std::size_t c = 0; c < s.n_chains(); ++c)
        for (Eigen::Index d = 0; d < s.draws_per_chain(); ++d, ++count) dbar += -2 * ll(s.state(c, d));
      dbar /= count;
      const double dhat = -2 * ll(s.mean_state());
      const DicResult r = dic(s, toy.data, spec, scope);
      EXPECT_NEAR(r.dbar, dbar, 1e-8);
      EXPECT_NEAR(r.d_hat, dhat, 1e-8);
      EXPECT_NEAR(r.p_d, dbar - dhat, 1e-8);
      EXPECT_NEAR(r.dic, 2 * dbar - dhat, 1e-8);
    }
  }
}

TEST(Selection, WaicMatchesHighPrecisionSums) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-6.0, -0.1);
  const int draws = 100, n = 20;
  Eigen::MatrixXd ll(draws, n);
  for (int s = 0; s < draws; ++s)
    for (int i = 0; i < n; ++i) ll(s, i) = u(rng);
  long double lppd = 0, pw = 0;
  for (int i = 0; i < n; ++i) {
    long double mean_p = 0, mean = 0, sq = 0;
    for (int s = 0; s < draws; ++s) {
      mean_p += std::exp(static_cast<long double>(ll(s, i)));
      mean += ll(s, i);
    }
    mean_p /= draws;
    mean /= draws;
    for (int s = 0; s < draws; ++s) sq += (ll(s, i) - mean) * (ll(s, i) - mean);
    lppd += std::log(mean_p);
    pw += sq / (draws - 1);
  }
  const WaicResult r = waic(ll);
  EXPECT_NEAR(r.lppd, static_cast<double>(lppd), 1e-10);
  EXPECT_NEAR(r.p_waic, static_cast<double>(pw), 1e-10);
  EXPECT_NEAR(r.waic, static_cast<double>(-2 * (lppd - pw)), 1e-10);
}

TEST(Selection, WaicIsStableForVeryNegativeLogLik) {
  Eigen::MatrixXd ll = Eigen::MatrixXd::Constant(10, 2, -2000.0);
  ll(0, 0) = -1999.0;
  const WaicResult r = waic(ll);
  EXPECT_TRUE(std::isfinite(r.waic));
  EXPECT_NEAR(r.lppd, -2000.0 + std::log((9 + std::exp(1.0)) / 10) - 2000.0, 1e-9);
}

TEST(Selection, PointwiseDrawsMatchDirectPoisson) {
  const auto toy = oracle::make_toy(3, 3, Variant::classical_me, 43);
  ModelSpec spec;
  const PosteriorSamples s = short_run(toy, spec);
  const Eigen::MatrixXd ll = pointwise_loglik_draws(s, toy.data, spec);
  ASSERT_EQ(ll.rows(), s.draws_per_chain() * 2);
  const LatentState st = s.state(1, 3);
  EXPECT_NEAR(ll.row(s.draws_per_chain() + 3).sum(), outcome_ll(st, toy.data, Variant::baseline), 1e-9);
}

TEST(Selection, StackedWaicAddsExposureAndErrorRows) {
  const auto toy = oracle::make_toy(3, 3, Variant::spatial_me, 46);
  ModelSpec spec;
  spec.variant = Variant::spatial_me;
  const PosteriorSamples s = short_run(toy, spec);
  const Eigen::MatrixXd ll = pointwise_loglik_draws(s, toy.data, spec, DevianceScope::all_blocks);
  ASSERT_EQ(ll.cols(), 27);
  for (Eigen::Index d : {Eigen::Index{0}, s.draws_per_chain() - 1}) {
    const LatentState st = s.state(0, d);
    EXPECT_NEAR(ll.row(d).sum(), outcome_ll(st, toy.data, Variant::spatial_me) + other_blocks_ll(st, toy.data), 1e-9);
  }
  const WaicResult stacked = waic(s, toy.data, spec, DevianceScope::all_blocks);
  EXPECT_NEAR(stacked.waic, waic(ll).waic, 1e-12);
  ModelSpec base;
  EXPECT_EQ(pointwise_loglik_draws(short_run(toy, base), toy.data, base, DevianceScope::all_blocks).cols(), 9);
}

TEST(Selection, SummaryUsesLinearInterpolationQuantiles) {
  Eigen::VectorXd d(5);
  d << 4, 1, 3, 2, 10;
  const ParameterSummary s = summarize_draws("p", d);
  EXPECT_DOUBLE_EQ(s.mean, 4.0);
  EXPECT_NEAR(s.sd, std::sqrt(50.0 / 4), 1e-12);
  // sorted 1 2 3 4 10: h = 4 p
  EXPECT_NEAR(s.q05, 1.2, 1e-12);
  EXPECT_NEAR(s.q95, 4 + 0.8 * 6, 1e-12);
  const ParameterSummary c = summarize_draws("c", Eigen::VectorXd::Constant(7, 2.5));
  EXPECT_EQ(c.mean, 2.5);
  EXPECT_EQ(c.sd, 0.0);
}

TEST(Selection, LambdaSummaryIsPositive) {
  const auto toy = oracle::make_toy(3, 3, Variant::spatial_me, 44);
  ModelSpec spec;
  spec.variant = Variant::spatial_me;
  const PosteriorSamples s = short_run(toy, spec);
  const auto lambda = lambda_summary(s, toy.data, spec);
  ASSERT_EQ(lambda.size(), toy.data.size());
  for (const auto& l : lambda) {
    EXPECT_GT(l.mean, 0.0);
    EXPECT_LE(l.q05, l.q95);
  }
}

TEST(Selection, RateRatioArithmetic) {
  EXPECT_NEAR(rate_ratio(0.319, 100000, 700000), 1.046, 1e-3);
  EXPECT_NEAR(rate_ratio(3.990, 100000, 700000), 1.768, 1e-3);
  EXPECT_NEAR(rate_ratio(7.956, 100000, 700000), 3.116, 1e-3);
  EXPECT_EQ(rate_ratio(2.0, 0.0, 3.0), 1.0);
  EXPECT_NEAR(rate_ratio(0.7, 5.0, 2.0) * rate_ratio(0.7, -5.0, 2.0), 1.0, 1e-15);
}

TEST(Selection, PredictedVsObservedClasses) {
  const auto toy = oracle::make_toy(4, 4, Variant::classical_me, 45);
  ModelSpec spec;
  const PosteriorSamples s = short_run(toy, spec);
  const auto classes = predicted_vs_observed(s, toy.data, spec);
  ASSERT_EQ(classes.size(), 12u);
  EXPECT_EQ(classes.front().label, "0");
  EXPECT_EQ(classes.back().label, "11+");
  double obs = 0, pred = 0;
  for (const auto& c : classes) {
    obs += c.observed;
    pred += c.predicted;
  }
  EXPECT_DOUBLE_EQ(obs, 16.0);
  EXPECT_NEAR(pred, 16.0, 1e-9);
  const double zeros = static_cast<double>(std::count(toy.data.y.data(), toy.data.y.data() + 16, 0.0));
  EXPECT_EQ(classes[0].observed, zeros);
}

TEST(Selection, FlagBestPerCriterion) {
  std::vector<ComparisonRow> rows{{"a", 10, 1, 12, 1}, {"b", 9, 1, 13, 1}, {"c", 9, 1, 14, 1}};
  flag_best(rows);
  EXPECT_FALSE(rows[0].best_dic);
  EXPECT_TRUE(rows[1].best_dic);
  EXPECT_FALSE(rows[2].best_dic);
  EXPECT_TRUE(rows[0].best_waic);
  EXPECT_FALSE(rows[1].best_waic);
}
