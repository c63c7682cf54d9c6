#include <gtest/gtest.h>

#include <cmath>

#include "netme/error.hpp"
#include "netme/inference.hpp"
#include "toy.hpp"

using namespace netme;

namespace {

Eigen::MatrixXd baseline_design(const Dataset& data) {
  Eigen::MatrixXd x(data.size(), 2 + data.z.cols());
  x.col(0).setOnes();
  x.col(1) = data.w;
  x.rightCols(data.z.cols()) = data.z;
  return x;
}

// Penalised IRLS for the Poisson mode with N(0, v) priors on every coefficient.
Eigen::VectorXd irls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& e, double v) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(x.cols());
  const Eigen::MatrixXd penalty = Eigen::MatrixXd::Identity(x.cols(), x.cols()) / v;
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd mu = (e.array() * (x * b).array().exp()).matrix();
    const Eigen::VectorXd z = x * b + ((y - mu).array() / mu.array()).matrix();
    const Eigen::MatrixXd w = mu.asDiagonal();
    const Eigen::VectorXd next = (x.transpose() * w * x + penalty).ldlt().solve(x.transpose() * w * z);
    if ((next - b).cwiseAbs().maxCoeff() < 1e-13) return next;
    b = next;
  }
  return b;
}

SamplerConfig short_config(int iterations = 600) {
  SamplerConfig c;
  c.n_iterations = iterations;
  c.n_burnin = iterations / 2;
  c.thinning = 1;
  c.n_chains = 2;
  c.n_threads = 1;
  c.rng_seed = 99;
  return c;
}

}  // namespace

TEST(Map, GaussianOutcomeMatchesGeneralisedLeastSquares) {
  const auto toy = oracle::make_toy(4, 4, Variant::classical_me, 3);
  ModelSpec spec;
  spec.outcome = Outcome::gaussian;
  spec.gaussian_precision = 2.0;
  spec.include_spatial_theta = false;
  Dataset data = toy.data;
  data.y = data.y.array().log1p();
  const MapResult r = fit_map(data, spec, toy.icar);
  const Eigen::MatrixXd x = baseline_design(data);
  const Eigen::VectorXd expect =
      (2.0 * x.transpose() * x + Eigen::MatrixXd::Identity(3, 3) / 50.0).ldlt().solve(2.0 * x.transpose() * data.y);
  EXPECT_LT((r.state.beta - expect).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(r.gradient_norm, 1e-6);
}

TEST(Map, GaussianOutcomeWithFieldMatchesKktSolve) {
  const auto toy = oracle::make_toy(3, 4, Variant::classical_me, 5);
  ModelSpec spec;
  spec.outcome = Outcome::gaussian;
  spec.gaussian_precision = 1.5;
  Dataset data = toy.data;
  data.y = data.y.array().log1p();
  MapOptions options;
  options.tau_theta = 3.0;
  const MapResult r = fit_map(data, spec, toy.icar, options);

  // Joint Gaussian in (beta, theta) with sum(theta) = 0.
  const Eigen::Index n = data.y.size(), p = 3, m = p + n;
  Eigen::MatrixXd a(n, m);
  a << baseline_design(data), Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd q = 1.5 * a.transpose() * a;
  q.topLeftCorner(p, p) += Eigen::MatrixXd::Identity(p, p) / 50.0;
  q.bottomRightCorner(n, n) += 3.0 * toy.icar.k().dense();
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 1, m + 1);
  kkt.topLeftCorner(m, m) = q;
  kkt.block(m, p, 1, n).setOnes();
  kkt.block(p, m, n, 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
  rhs.head(m) = 1.5 * a.transpose() * data.y;
  const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
  EXPECT_LT((r.state.beta - sol.head(p)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((r.state.theta - sol.segment(p, n)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Map, PoissonBaselineMatchesPenalisedIrls) {
  const auto toy = oracle::make_toy(5, 5, Variant::classical_me, 7);
  ModelSpec spec;
  spec.include_spatial_theta = false;
  const MapResult r = fit_map(toy.data, spec, toy.icar);
  const Eigen::VectorXd expect = irls(baseline_design(toy.data), toy.data.y, toy.data.e, 50.0);
  EXPECT_LT((r.state.beta - expect).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Map, SpatialMeConvergesWithConstrainedFields) {
  const auto toy = oracle::make_toy(4, 4, Variant::spatial_me, 11);
  ModelSpec spec;
  spec.variant = Variant::spatial_me;
  MapOptions o;
  o.tau_theta = o.tau_phi = o.tau_eps = o.tau_u = 1.0;
  const MapResult r = fit_map(toy.data, spec, toy.icar, o);
  EXPECT_LE(projected_gradient(r.state, toy.data, spec, toy.icar).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(toy.icar.max_abs_component_sum(r.state.theta), 1e-9);
  EXPECT_LT(toy.icar.max_abs_component_sum(r.state.phi), 1e-9);
}

TEST(Map, IterationLimitThrows) {
  const auto toy = oracle::make_toy(4, 4, Variant::spatial_me, 11);
  ModelSpec spec;
  spec.variant = Variant::spatial_me;
  MapOptions o;
  o.max_iterations = 1;
  EXPECT_THROW(fit_map(toy.data, spec, toy.icar, o), NumericalError);
}

TEST(Sampler, ChainSeedIsSplitMix64) {
  EXPECT_EQ(chain_seed(0, 0), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(chain_seed(5, 2), chain_seed(7, 0));
}

TEST(Sampler, ConfigValidation) {
  SamplerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.n_burnin = c.n_iterations;
  EXPECT_THROW(c.validate(), ValidationError);
  c = SamplerConfig{};
  c.thinning = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = SamplerConfig{};
  c.target_accept_block = 1.2;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_EQ(SamplerConfig{}.n_draws(), 5000);
}

TEST(Sampler, ScalarNamesFollowVariant) {
  const auto toy = oracle::make_toy(3, 3, Variant::spatial_me, 2);
  ModelSpec spec;
  EXPECT_EQ(scalar_parameter_names(toy.data, spec),
            (std::vector<std::string>{"Intercept", "Road traffic", "z1", "tau_theta"}));
  spec.variant = Variant::spatial_me;
  EXPECT_EQ(scalar_parameter_names(toy.data, spec),
            (std::vector<std::string>{"Intercept", "Road traffic", "z1", "Exposure intercept", "Exposure ztilde1",
                                      "tau_theta", "tau_eps", "tau_u", "tau_phi"}));
}

TEST(Sampler, DeterministicForFixedSeed) {
  const auto toy = oracle::make_toy(4, 4, Variant::spatial_me, 21);
  ModelSpec spec;
  spec.variant = Variant::spatial_me;
  SamplerConfig c = short_config(300);
  const PosteriorSamples a = run_mcmc(toy.data, spec, toy.icar, c);
  c.n_threads = 2;
  const PosteriorSamples b = run_mcmc(toy.data, spec, toy.icar, c);
  ASSERT_EQ(a.n_chains(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(a.chains[k].scalars, b.chains[k].scalars);
    EXPECT_EQ(a.chains[k].theta, b.chains[k].theta);
    EXPECT_EQ(a.chains[k].logpost_trace, b.chains[k].logpost_trace);
  }
  EXPECT_NE(a.chains[0].scalars, a.chains[1].scalars);
  c.rng_seed += 1;
  EXPECT_NE(run_mcmc(toy.data, spec, toy.icar, c).chains[0].scalars, a.chains[0].scalars);
}

TEST(Sampler, DrawsRespectConstraintsAndShapes) {
  const auto toy = oracle::make_toy(4, 4, Variant::spatial_me, 22);
  ModelSpec spec;
  spec.variant = Variant::spatial_me;
  const SamplerConfig c = short_config(300);
  const PosteriorSamples s = run_mcmc(toy.data, spec, toy.icar, c);
  EXPECT_EQ(s.draws_per_chain(), c.n_draws());
  EXPECT_EQ(s.chains[0].theta.rows(), c.n_draws());
  EXPECT_EQ(s.chains[0].logpost_trace.size(), std::size_t(c.n_iterations));
  for (Eigen::Index d = 0; d < s.draws_per_chain(); d += 37) {
    const LatentState st = s.state(1, d);
    EXPECT_LT(toy.icar.max_abs_component_sum(st.theta), 1e-8);
    EXPECT_LT(toy.icar.max_abs_component_sum(st.phi), 1e-8);
    EXPECT_GT(st.tau_u, 0.0);
  }
  for (const auto& [block, rate] : s.chains[0].acceptance) {
    EXPECT_GE(rate, 0.0) << block;
    EXPECT_LE(rate, 1.0) << block;
  }
  EXPECT_TRUE(s.chains[0].acceptance.count("beta"));
  EXPECT_TRUE(s.chains[0].acceptance.count("x"));
}

TEST(Sampler, FixedBlocksStayPut) {
  const auto toy = oracle::make_toy(3, 3, Variant::classical_me, 23);
  ModelSpec spec;
  spec.variant = Variant::classical_me;
  std::mt19937_64 rng(1);
  const LatentState init = oracle::random_state(toy.data, spec, toy.icar, rng);
  SamplerConfig c = short_config(200);
  c.fixed_blocks = {Block::beta, Block::tau_u};
  const PosteriorSamples s = run_mcmc(toy.data, spec, toy.icar, c, init);
  for (Eigen::Index d = 0; d < s.draws_per_chain(); ++d) {
    const LatentState st = s.state(0, d);
    EXPECT_EQ(st.beta, init.beta);
    EXPECT_EQ(st.tau_u, init.tau_u);
  }
  EXPECT_NE(s.pooled(*s.scalar_index("tau_eps")).maxCoeff(), s.pooled(*s.scalar_index("tau_eps")).minCoeff());
}

TEST(Sampler, PoissonRegressionAgreesWithIrls) {
  // Flat-ish priors and many observations: the posterior mean is close to the
  // mode, which IRLS gives independently.
  oracle::Toy toy = oracle::make_toy(10, 10, Variant::classical_me, 31);
  ModelSpec spec;
  spec.include_spatial_theta = false;
  SamplerConfig c = short_config(4000);
  c.n_burnin = 1000;
  const PosteriorSamples s = run_mcmc(toy.data, spec, toy.icar, c);
  const Eigen::VectorXd mode = irls(baseline_design(toy.data), toy.data.y, toy.data.e, 50.0);
  for (Eigen::Index j = 0; j < mode.size(); ++j) {
    const Eigen::VectorXd d = s.pooled(static_cast<std::size_t>(j));
    const double sd = std::sqrt((d.array() - d.mean()).square().sum() / (d.size() - 1));
    EXPECT_NEAR(d.mean(), mode(j), 0.5 * sd + 0.02) << j;
  }
}

TEST(Sampler, MeanStateAveragesDraws) {
  const auto toy = oracle::make_toy(3, 3, Variant::classical_me, 24);
  ModelSpec spec;
  spec.variant = Variant::classical_me;
  const PosteriorSamples s = run_mcmc(toy.data, spec, toy.icar, short_config(200));
  const LatentState m = s.mean_state();
  EXPECT_NEAR(m.beta(1), s.pooled(1).mean(), 1e-12);
  EXPECT_NEAR(m.tau_eps, s.pooled(*s.scalar_index("tau_eps")).mean(), 1e-9);
}
