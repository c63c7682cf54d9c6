#include "netme/sim.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <random>
#include <thread>

#include "netme/error.hpp"

namespace netme {

namespace {

Segment pseudo_segment(std::size_t index, double x, double y) {
  return make_segment(std::to_string(index), {Point{x, y}, Point{x + 1.0, y}});
}

int thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("NETME_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

}  // namespace

SegmentNetwork make_grid_lattice(int rows, int cols) {
  if (rows < 2 || cols < 2) throw ValidationError("grid lattice needs rows, cols >= 2");
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  std::vector<Segment> segments;
  segments.reserve(n);
  std::vector<std::vector<std::size_t>> adjacency(n);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto i = static_cast<std::size_t>(r * cols + c);
      segments.push_back(pseudo_segment(i, 2.0 * c, 2.0 * r));
      if (r > 0) adjacency[i].push_back(i - static_cast<std::size_t>(cols));
      if (c > 0) adjacency[i].push_back(i - 1);
      if (c + 1 < cols) adjacency[i].push_back(i + 1);
      if (r + 1 < rows) adjacency[i].push_back(i + static_cast<std::size_t>(cols));
    }
  }
  return SegmentNetwork(std::move(segments), std::move(adjacency));
}

SegmentNetwork make_path_lattice(int n) {
  if (n < 2) throw ValidationError("path lattice needs at least two sites");
  std::vector<Segment> segments;
  std::vector<std::vector<std::size_t>> adjacency(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    segments.push_back(pseudo_segment(u, 2.0 * i, 0.0));
    if (i > 0) adjacency[u].push_back(u - 1);
    if (i + 1 < n) adjacency[u].push_back(u + 1);
  }
  return SegmentNetwork(std::move(segments), std::move(adjacency));
}

std::vector<Segment> make_street_grid_segments(int rows, int cols, double spacing_m) {
  if (rows < 1 || cols < 1) throw ValidationError("street grid needs at least one block");
  if (!(spacing_m > 0.0)) throw ValidationError("spacing must be positive");
  std::vector<Segment> out;
  std::size_t k = 0;
  for (int r = 0; r <= rows; ++r)
    for (int c = 0; c < cols; ++c)
      out.push_back(make_segment("h" + std::to_string(k++),
                                 {Point{c * spacing_m, r * spacing_m}, Point{(c + 1) * spacing_m, r * spacing_m}}));
  for (int c = 0; c <= cols; ++c)
    for (int r = 0; r < rows; ++r)
      out.push_back(make_segment("v" + std::to_string(k++),
                                 {Point{c * spacing_m, r * spacing_m}, Point{c * spacing_m, (r + 1) * spacing_m}}));
  return out;
}

void SimScenario::validate() const {
  if (!network && (rows < 2 || cols < 2)) throw ValidationError("grid needs rows, cols >= 2");
  for (double t : {tau_theta, tau_eps, tau_u, tau_phi})
    if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("scenario precisions must be positive");
  if (network && network->n_components() != 1) throw ValidationError("scenario lattice must be connected");
  if (offsets.kind == OffsetPolicy::Kind::constant && !(offsets.value > 0.0))
    throw ValidationError("constant offset must be positive");
  if (offsets.kind == OffsetPolicy::Kind::lognormal && (!(offsets.log_sd >= 0.0) || !(offsets.scale > 0.0)))
    throw ValidationError("lognormal offsets need log_sd >= 0 and scale > 0");
}

SimulatedData simulate_dataset(const SimScenario& scenario) {
  scenario.validate();
  SimulatedData out;
  out.network = scenario.network ? *scenario.network : make_grid_lattice(scenario.rows, scenario.cols);
  const IcarStructure icar = icar_structure(out.network);
  const auto n = static_cast<Eigen::Index>(out.network.size());
  const auto p = static_cast<Eigen::Index>(scenario.beta_z.size());
  const auto q = static_cast<Eigen::Index>(scenario.alpha_z.size());
  const bool me = has_measurement_error(scenario.variant);
  const bool spatial = scenario.variant == Variant::spatial_me;

  Rng rng(scenario.seed);
  std::normal_distribution<double> normal;
  auto normals = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
    return m;
  };

  LatentState& raw = out.truth_original;
  raw.tau_theta = scenario.tau_theta;
  raw.tau_eps = scenario.tau_eps;
  raw.tau_u = scenario.tau_u;
  raw.tau_phi = scenario.tau_phi;
  raw.beta = Eigen::VectorXd(2 + p);
  raw.beta << scenario.beta0, scenario.beta_x, Eigen::Map<const Eigen::VectorXd>(scenario.beta_z.data(), p);
  raw.alpha = Eigen::VectorXd(1 + q);
  raw.alpha << scenario.alpha0, Eigen::Map<const Eigen::VectorXd>(scenario.alpha_z.data(), q);

  const Eigen::VectorXd theta =
      scenario.include_theta ? sample_constrained(icar, scenario.tau_theta, rng) : Eigen::VectorXd::Zero(n);
  const Eigen::MatrixXd z = normals(n, p);
  const Eigen::MatrixXd zt = normals(n, q);
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(n, scenario.alpha0);
  if (q > 0) mu += zt * raw.alpha.tail(q);
  const Eigen::VectorXd x = mu + normals(n, 1).col(0) / std::sqrt(scenario.tau_eps);
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
  if (spatial) phi = sample_constrained(icar, scenario.tau_phi, rng);
  Eigen::VectorXd w = x;
  if (me) w += normals(n, 1).col(0) / std::sqrt(scenario.tau_u) + phi;

  Eigen::VectorXd e(n);
  if (scenario.offsets.kind == OffsetPolicy::Kind::constant) {
    e.setConstant(scenario.offsets.value);
  } else {
    std::lognormal_distribution<double> lognormal(scenario.offsets.log_mean, scenario.offsets.log_sd);
    for (Eigen::Index i = 0; i < n; ++i) e(i) = lognormal(rng) * scenario.offsets.scale;
  }

  Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, scenario.beta0) + scenario.beta_x * x + theta;
  if (p > 0) eta += z * raw.beta.tail(p);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(std::abs(eta(i)) <= kEtaLimit))
      throw NumericalError("simulated rate overflows at index " + std::to_string(i) +
                           "; use smaller coefficients");

  Dataset& data = out.data;
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::poisson_distribution<long long> poisson(e(i) * std::exp(eta(i)));
    data.y(i) = static_cast<double>(poisson(rng));
  }
  data.e = e;
  for (const Segment& s : out.network.segments()) data.segment_ids.push_back(s.id);
  data.w = standardize(w, data.w_scaling);
  const double m = data.w_scaling.mean;
  const double s = data.w_scaling.sd;
  data.z.resize(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    ColumnScaling col{"z" + std::to_string(j + 1)};
    data.z.col(j) = standardize(z.col(j), col);
    data.z_scaling.push_back(col);
  }
  data.ztilde.resize(n, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    ColumnScaling col{"ztilde" + std::to_string(j + 1)};
    data.ztilde.col(j) = standardize(zt.col(j), col);
    data.ztilde_scaling.push_back(col);
  }

  if (scenario.include_theta) raw.theta = theta;
  if (me) raw.x = x;
  if (spatial) raw.phi = phi;

  // Standardised-scale truth.
  LatentState& t = out.truth;
  t.tau_theta = scenario.tau_theta;
  t.tau_eps = scenario.tau_eps * s * s;
  t.tau_u = scenario.tau_u * s * s;
  t.tau_phi = scenario.tau_phi * s * s;
  t.beta = Eigen::VectorXd(2 + p);
  t.beta(0) = scenario.beta0 + scenario.beta_x * m;
  t.beta(1) = scenario.beta_x * s;
  for (Eigen::Index j = 0; j < p; ++j) {
    const ColumnScaling& col = data.z_scaling[static_cast<std::size_t>(j)];
    t.beta(0) += raw.beta(2 + j) * col.mean;
    t.beta(2 + j) = raw.beta(2 + j) * col.sd;
  }
  if (scenario.include_theta) t.theta = theta;
  if (me) {
    t.alpha = Eigen::VectorXd(1 + q);
    double a0 = scenario.alpha0 - m;
    for (Eigen::Index j = 0; j < q; ++j) {
      const ColumnScaling& col = data.ztilde_scaling[static_cast<std::size_t>(j)];
      a0 += raw.alpha(1 + j) * col.mean;
      t.alpha(1 + j) = raw.alpha(1 + j) * col.sd / s;
    }
    t.alpha(0) = a0 / s;
    t.x = (x.array() - m) / s;
  }
  if (spatial) t.phi = phi / s;
  return out;
}

AttenuationReport attenuation_experiment(const SimScenario& scenario, const SamplerConfig& config,
                                         std::span<const Variant> variants, DevianceScope scope) {
  if (!has_measurement_error(scenario.variant))
    throw ValidationError("attenuation experiment needs data generated with measurement error");
  const SimulatedData sim = simulate_dataset(scenario);
  const IcarStructure icar = icar_structure(sim.network);
  const double sd = sim.data.w_scaling.sd;

  AttenuationReport report;
  report.seed = scenario.seed;
  report.true_beta_x = scenario.beta_x;
  for (Variant v : variants) {
    ModelFitReport fit;
    fit.variant = v;
    try {
      ModelSpec spec;
      spec.variant = v;
      spec.include_spatial_theta = scenario.include_theta;
      const PosteriorSamples samples = run_mcmc(sim.data, spec, icar, config);
      fit.beta = summarize_draws(samples.scalar_names[1], samples.pooled(1));
      fit.beta_original = fit.beta.mean / sd;
      fit.low90_original = fit.beta.q05 / sd;
      fit.high90_original = fit.beta.q95 / sd;
      fit.covers_truth = fit.low90_original <= scenario.beta_x && scenario.beta_x <= fit.high90_original;
      fit.dic = dic(samples, sim.data, spec, scope);
      fit.waic = waic(samples, sim.data, spec, scope);
    } catch (const Error& e) {
      fit.error = e.what();
    }
    report.fits.push_back(std::move(fit));
  }
  return report;
}

std::vector<AttenuationReport> run_replications(const SimScenario& scenario, const SamplerConfig& config,
                                                int n_replications, std::span<const Variant> variants,
                                                DevianceScope scope, int n_threads) {
  if (n_replications <= 0) throw ValidationError("n_replications must be positive");
  std::vector<AttenuationReport> reports(static_cast<std::size_t>(n_replications));
  std::vector<std::exception_ptr> errors(reports.size());
  const int threads = std::min(thread_count(n_threads), n_replications);
  SamplerConfig inner = config;
  if (threads > 1) inner.n_threads = 1;

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int r = next++; r < n_replications; r = next++) {
      try {
        SimScenario rep = scenario;
        rep.seed = chain_seed(scenario.seed ^ 0x5851f42d4c957f2dULL, r);
        SamplerConfig cfg = inner;
        cfg.rng_seed = chain_seed(config.rng_seed, 1000 + r);
        reports[static_cast<std::size_t>(r)] = attenuation_experiment(rep, cfg, variants, scope);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return reports;
}

}  // namespace netme
