#include "netme/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <thread>

#include "netme/error.hpp"

namespace netme {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Shared helpers

void require_valid(const Dataset& data, const ModelSpec& spec) {
  const auto problems = spec.validate();
  if (!problems.empty()) {
    std::string msg = "invalid model specification: " + problems.front();
    for (std::size_t i = 1; i < problems.size(); ++i) msg += "; " + problems[i];
    throw ValidationError(msg);
  }
  data.validate(spec.outcome == Outcome::poisson);
}

std::vector<std::vector<std::size_t>> shifted_components(const IcarStructure& icar, Eigen::Index offset) {
  auto out = icar.components();
  for (auto& c : out)
    for (std::size_t& i : c) i += static_cast<std::size_t>(offset);
  return out;
}

void project_segment(Eigen::VectorXd& g, Eigen::Index offset, const IcarStructure& icar) {
  for (const auto& comp : icar.components()) {
    double mean = 0.0;
    for (std::size_t i : comp) mean += g(offset + static_cast<Eigen::Index>(i));
    mean /= static_cast<double>(comp.size());
    for (std::size_t i : comp) g(offset + static_cast<Eigen::Index>(i)) -= mean;
  }
}

// Log posterior that reports failures as -inf instead of throwing.
double safe_logposterior(const LatentState& s, const Dataset& data, const ModelSpec& spec,
                         const IcarStructure& icar) {
  try {
    const double v = joint_logposterior(s, data, spec, icar);
    return std::isfinite(v) ? v : kNegInf;
  } catch (const Error&) {
    return kNegInf;
  }
}

Eigen::SparseMatrix<double> add_diagonal(const Eigen::SparseMatrix<double>& upper, const Eigen::VectorXd& d) {
  Eigen::SparseMatrix<double> diag(upper.rows(), upper.cols());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(d.size()));
  for (Eigen::Index i = 0; i < d.size(); ++i) t.emplace_back(i, i, d(i));
  diag.setFromTriplets(t.begin(), t.end());
  Eigen::SparseMatrix<double> out = upper + diag;
  out.makeCompressed();
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("NETME_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Augmented system

Eigen::VectorXd AugmentedSystem::predictor(const LatentState& state, const LatentLayout& layout) const {
  Eigen::VectorXd pred = design * layout.flatten(state);
  if (measurement_error)
    for (Eigen::Index r = 0; r < rows(); ++r)
      if (block[static_cast<std::size_t>(r)] == Block::outcome)
        pred(r) += state.beta(1) * state.x(static_cast<Eigen::Index>(site[static_cast<std::size_t>(r)]));
  return pred;
}

AugmentedSystem build_augmented_system(const Dataset& data, const ModelSpec& spec) {
  const LatentLayout layout(data, spec);
  const auto n = static_cast<Eigen::Index>(data.size());
  const bool me = has_measurement_error(spec.variant);
  const Eigen::Index n_rows = me ? 3 * n : n;
  const Eigen::Index n_cols = me ? 3 : 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  AugmentedSystem sys;
  sys.measurement_error = me;
  sys.response = Eigen::MatrixXd::Constant(n_rows, n_cols, nan);
  sys.block.resize(static_cast<std::size_t>(n_rows));
  sys.site.resize(static_cast<std::size_t>(n_rows));
  std::vector<Eigen::Triplet<double>> t;

  for (Eigen::Index i = 0; i < n; ++i) {
    sys.response(i, 0) = data.y(i);
    sys.block[static_cast<std::size_t>(i)] = AugmentedSystem::Block::outcome;
    sys.site[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
    t.emplace_back(i, layout.beta(), 1.0);
    if (!me) t.emplace_back(i, layout.beta() + 1, data.w(i));
    for (Eigen::Index j = 0; j < data.z.cols(); ++j) t.emplace_back(i, layout.beta() + 2 + j, data.z(i, j));
    if (layout.n_theta) t.emplace_back(i, layout.theta() + i, 1.0);
  }
  if (me) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r = n + i;
      sys.response(r, 1) = 0.0;
      sys.block[static_cast<std::size_t>(r)] = AugmentedSystem::Block::exposure;
      sys.site[static_cast<std::size_t>(r)] = static_cast<std::size_t>(i);
      t.emplace_back(r, layout.alpha(), 1.0);
      for (Eigen::Index j = 0; j < data.ztilde.cols(); ++j)
        t.emplace_back(r, layout.alpha() + 1 + j, data.ztilde(i, j));
      t.emplace_back(r, layout.x() + i, -1.0);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r = 2 * n + i;
      sys.response(r, 2) = data.w(i);
      sys.block[static_cast<std::size_t>(r)] = AugmentedSystem::Block::error;
      sys.site[static_cast<std::size_t>(r)] = static_cast<std::size_t>(i);
      t.emplace_back(r, layout.x() + i, 1.0);
      if (layout.n_phi) t.emplace_back(r, layout.phi() + i, 1.0);
    }
  }
  sys.design.resize(n_rows, layout.size());
  sys.design.setFromTriplets(t.begin(), t.end());
  sys.design.makeCompressed();
  return sys;
}

AugmentedLogLik augmented_loglik(const AugmentedSystem& system, const LatentState& state, const Dataset& data,
                                 const ModelSpec& spec) {
  const LatentLayout layout(data, spec);
  const Eigen::VectorXd pred = system.predictor(state, layout);
  const auto n = static_cast<Eigen::Index>(data.size());
  AugmentedLogLik out;
  out.outcome = outcome_loglik(data, pred.head(n), spec);
  if (system.measurement_error) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out.exposure += logdensity_normal(system.response(n + i, 1), pred(n + i), 1.0 / state.tau_eps);
      out.error += logdensity_normal(system.response(2 * n + i, 2), pred(2 * n + i), 1.0 / state.tau_u);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// MAP

Eigen::VectorXd projected_gradient(const LatentState& state, const Dataset& data, const ModelSpec& spec,
                                   const IcarStructure& icar) {
  const LatentLayout layout(data, spec);
  Eigen::VectorXd g = joint_gradient(state, data, spec, icar);
  if (layout.n_theta) project_segment(g, layout.theta(), icar);
  if (layout.n_phi) project_segment(g, layout.phi(), icar);
  return g;
}

MapResult fit_map(const Dataset& data, const ModelSpec& spec, const IcarStructure& icar,
                  const MapOptions& options) {
  require_valid(data, spec);
  if (icar.dimension() != data.size()) throw ValidationError("adjacency and data sizes differ");
  const LatentLayout layout(data, spec);
  const PriorTable& p = spec.priors;

  LatentState s = LatentState::zeros(data, spec);
  s.tau_theta = options.tau_theta.value_or(precision_prior_median(p.tau_theta));
  s.tau_phi = options.tau_phi.value_or(precision_prior_median(p.tau_phi));
  s.tau_eps = options.tau_eps.value_or(precision_prior_median(p.tau_eps));
  s.tau_u = options.tau_u.value_or(precision_prior_median(p.tau_u));
  if (spec.outcome == Outcome::poisson && data.y.sum() > 0.0) s.beta(0) = std::log(data.y.sum() / data.e.sum());
  if (spec.outcome == Outcome::gaussian) s.beta(0) = data.y.mean();
  if (layout.n_x) {
    s.x = data.w;
    s.alpha(0) = data.w.mean();
  }

  std::vector<std::vector<std::size_t>> constrained;
  if (layout.n_theta) {
    auto c = shifted_components(icar, layout.theta());
    constrained.insert(constrained.end(), c.begin(), c.end());
  }
  if (layout.n_phi) {
    auto c = shifted_components(icar, layout.phi());
    constrained.insert(constrained.end(), c.begin(), c.end());
  }
  ConstrainedGaussian newton(constrained);

  double f = safe_logposterior(s, data, spec, icar);
  if (!std::isfinite(f)) throw NumericalError("log posterior is not finite at the MAP starting point");
  double gnorm = 0.0;
  double damping = 0.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    const Eigen::VectorXd g = projected_gradient(s, data, spec, icar);
    gnorm = g.lpNorm<Eigen::Infinity>();
    if (gnorm <= options.gradient_tolerance) {
      MapResult r;
      r.state = s;
      r.iterations = it;
      r.gradient_norm = gnorm;
      r.logposterior = f;
      return r;
    }

    const Eigen::VectorXd x0 = layout.flatten(s);
    bool stepped = false;
    bool fisher = false;
    while (!stepped) {
      const Eigen::SparseMatrix<double> h = negative_hessian(s, data, spec, icar, fisher);
      Eigen::VectorXd shift = h.diagonal().cwiseAbs().cwiseMax(1e-8) * damping;
      try {
        newton.set_precision(damping > 0.0 ? add_diagonal(h, shift) : h);
      } catch (const NumericalError&) {
        if (!fisher) {
          fisher = true;
        } else {
          damping = std::max(1e-8, damping * 10.0);
        }
        if (damping > 1e12) throw NumericalError("MAP Hessian could not be regularised");
        continue;
      }
      const Eigen::VectorXd dir = newton.mean(g);
      const double slope = g.dot(dir);
      double t = 1.0;
      for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
        LatentState trial = s;
        layout.unflatten(x0 + t * dir, trial);
        if (layout.n_theta) icar.center(trial.theta);
        if (layout.n_phi) icar.center(trial.phi);
        const double ft = safe_logposterior(trial, data, spec, icar);
        if (std::isfinite(ft) && ft >= f + 1e-4 * t * slope - 1e-12 * (1.0 + std::abs(f))) {
          s = std::move(trial);
          f = ft;
          stepped = true;
          break;
        }
      }
      if (stepped) {
        damping = t == 1.0 ? damping * 0.1 : damping;
        if (damping < 1e-10) damping = 0.0;
      } else {
        damping = std::max(1e-6, damping * 10.0);
        if (damping > 1e12) break;
      }
    }
    if (!stepped) break;
  }
  throw NumericalError("MAP did not converge after " + std::to_string(options.max_iterations) +
                       " iterations; projected gradient norm " + std::to_string(gnorm));
}

// ---------------------------------------------------------------------------
// Sampler

std::string to_string(Block b) {
  switch (b) {
    case Block::beta: return "beta";
    case Block::alpha: return "alpha";
    case Block::x: return "x";
    case Block::theta: return "theta";
    case Block::phi: return "phi";
    case Block::tau_theta: return "tau_theta";
    case Block::tau_eps: return "tau_eps";
    case Block::tau_u: return "tau_u";
    case Block::tau_phi: return "tau_phi";
  }
  return "unknown";
}

void SamplerConfig::validate() const {
  if (n_iterations <= 0) throw ValidationError("n_iterations must be positive");
  if (n_burnin < 0 || n_burnin >= n_iterations) throw ValidationError("n_burnin must lie in [0, n_iterations)");
  if (thinning <= 0) throw ValidationError("thinning must be positive");
  if (n_draws() < 1) throw ValidationError("sampler settings keep no draws");
  if (n_chains <= 0) throw ValidationError("n_chains must be positive");
  if (!(target_accept_single > 0.0 && target_accept_single < 1.0) ||
      !(target_accept_block > 0.0 && target_accept_block < 1.0))
    throw ValidationError("acceptance targets must lie in (0, 1)");
  if (adaptation_window <= 0) throw ValidationError("adaptation_window must be positive");
  if (n_threads < 0) throw ValidationError("n_threads must be nonnegative");
}

std::uint64_t chain_seed(std::uint64_t master_seed, int chain) {
  return splitmix64(master_seed + static_cast<std::uint64_t>(chain));
}

std::vector<std::string> scalar_parameter_names(const Dataset& data, const ModelSpec& spec) {
  std::vector<std::string> names = beta_names(data);
  if (has_measurement_error(spec.variant))
    for (auto& a : alpha_names(data)) names.push_back(a);
  if (spec.include_spatial_theta) names.push_back("tau_theta");
  if (has_measurement_error(spec.variant)) {
    names.push_back("tau_eps");
    names.push_back("tau_u");
  }
  if (spec.variant == Variant::spatial_me) names.push_back("tau_phi");
  return names;
}

std::optional<std::size_t> PosteriorSamples::scalar_index(const std::string& name) const {
  for (std::size_t i = 0; i < scalar_names.size(); ++i)
    if (scalar_names[i] == name) return i;
  return std::nullopt;
}

Eigen::VectorXd PosteriorSamples::pooled(std::size_t scalar) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n_chains()) * draws_per_chain());
  Eigen::Index k = 0;
  for (const auto& c : chains) {
    out.segment(k, c.scalars.rows()) = c.scalars.col(static_cast<Eigen::Index>(scalar));
    k += c.scalars.rows();
  }
  return out;
}

LatentState PosteriorSamples::state(std::size_t chain, Eigen::Index draw) const {
  const ChainSamples& c = chains.at(chain);
  const bool me = has_measurement_error(variant);
  if ((include_spatial_theta && c.theta.rows() == 0) || (me && c.x.rows() == 0))
    throw ValidationError("latent fields were not stored; rerun with field storage enabled");
  LatentState s;
  Eigen::Index k = 0;
  s.beta = c.scalars.row(draw).segment(k, n_beta).transpose();
  k += n_beta;
  if (me) {
    s.alpha = c.scalars.row(draw).segment(k, n_alpha).transpose();
    k += n_alpha;
  }
  if (include_spatial_theta) {
    s.tau_theta = c.scalars(draw, k++);
    s.theta = c.theta.row(draw).transpose();
  }
  if (me) {
    s.tau_eps = c.scalars(draw, k++);
    s.tau_u = c.scalars(draw, k++);
    s.x = c.x.row(draw).transpose();
  }
  if (variant == Variant::spatial_me) {
    s.tau_phi = c.scalars(draw, k++);
    s.phi = c.phi.row(draw).transpose();
  }
  return s;
}

LatentState PosteriorSamples::mean_state() const {
  if (chains.empty()) throw ValidationError("no posterior draws");
  LatentState mean;
  double count = 0.0;
  auto accumulate = [](Eigen::VectorXd& acc, const Eigen::VectorXd& v) {
    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(v.size());
    acc += v;
  };
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (Eigen::Index d = 0; d < chains[c].scalars.rows(); ++d) {
      const LatentState s = state(c, d);
      accumulate(mean.beta, s.beta);
      accumulate(mean.alpha, s.alpha);
      accumulate(mean.theta, s.theta);
      accumulate(mean.x, s.x);
      accumulate(mean.phi, s.phi);
      if (count == 0.0) mean.tau_theta = mean.tau_eps = mean.tau_u = mean.tau_phi = 0.0;
      mean.tau_theta += s.tau_theta;
      mean.tau_eps += s.tau_eps;
      mean.tau_u += s.tau_u;
      mean.tau_phi += s.tau_phi;
      count += 1.0;
    }
  }
  for (Eigen::VectorXd* v : {&mean.beta, &mean.alpha, &mean.theta, &mean.x, &mean.phi}) *v /= count;
  mean.tau_theta /= count;
  mean.tau_eps /= count;
  mean.tau_u /= count;
  mean.tau_phi /= count;
  return mean;
}

namespace {

// Robbins-Monro step on a log proposal scale at the end of an adaptation window.
void adapt_log_scale(double& log_scale, double rate, double target, int window_index) {
  log_scale += (rate - target) / std::sqrt(static_cast<double>(window_index));
  log_scale = std::clamp(log_scale, -20.0, 20.0);
}

struct Counter {
  long long accepted = 0;
  long long proposed = 0;
  void add(bool a) {
    accepted += a ? 1 : 0;
    ++proposed;
  }
  double rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

class ChainRunner {
 public:
  ChainRunner(const Dataset& data, const ModelSpec& spec, const IcarStructure& icar, const SamplerConfig& cfg,
              LatentState start, const Eigen::MatrixXd& beta_cov, std::uint64_t seed, bool jitter)
      : data_(data),
        spec_(spec),
        icar_(icar),
        cfg_(cfg),
        rng_(seed),
        seed_(seed),
        s_(std::move(start)),
        me_(has_measurement_error(spec.variant)),
        spatial_(spec.variant == Variant::spatial_me),
        has_theta_(spec.include_spatial_theta),
        n_(static_cast<Eigen::Index>(data.size())),
        theta_sampler_(icar.components()),
        phi_sampler_(icar.components()) {
    const Eigen::Index d = s_.beta.size();
    Eigen::LLT<Eigen::MatrixXd> llt(beta_cov * (2.38 * 2.38 / static_cast<double>(d)));
    beta_chol_ = llt.matrixL();
    if (jitter && !fixed(Block::beta)) {
      const Eigen::VectorXd sd = beta_cov.diagonal().cwiseSqrt();
      s_.beta += sd.cwiseProduct(standard_normal_vector(static_cast<std::size_t>(d), rng_));
    }
    x_log_sd_ = Eigen::VectorXd::Constant(n_, std::log(0.5));
    x_window_ = Eigen::VectorXi::Zero(n_);
    if (me_) {
      ztilde1_ = Eigen::MatrixXd::Ones(n_, 1 + data.ztilde.cols());
      if (data.ztilde.cols() > 0) ztilde1_.rightCols(data.ztilde.cols()) = data.ztilde;
      ztz_ = ztilde1_.transpose() * ztilde1_;
    }
    recompute_eta();
  }

  ChainSamples run() {
    ChainSamples out;
    out.seed = seed_;
    const int n_draws = cfg_.n_draws();
    const std::size_t n_scalars = scalar_count();
    out.scalars.resize(n_draws, static_cast<Eigen::Index>(n_scalars));
    if (cfg_.store_fields) {
      if (has_theta_) out.theta.resize(n_draws, n_);
      if (me_) out.x.resize(n_draws, n_);
      if (spatial_) out.phi.resize(n_draws, n_);
    }
    out.logpost_trace.reserve(static_cast<std::size_t>(cfg_.n_iterations));

    int stored = 0;
    for (iteration_ = 0; iteration_ < cfg_.n_iterations; ++iteration_) {
      burnin_ = iteration_ < cfg_.n_burnin;
      sweep();
      double lp = 0.0;
      try {
        lp = joint_logposterior(s_, data_, spec_, icar_);
      } catch (const Error& e) {
        throw NumericalError("divergence at iteration " + std::to_string(iteration_) + ": " + e.what());
      }
      out.logpost_trace.push_back(lp);
      if (burnin_ && (iteration_ + 1) % cfg_.adaptation_window == 0) adapt();
      if (!burnin_ && (iteration_ - cfg_.n_burnin + 1) % cfg_.thinning == 0 && stored < n_draws) {
        store(out, stored);
        ++stored;
      }
    }
    out.acceptance["beta"] = beta_acc_.rate();
    if (me_) out.acceptance["x"] = x_acc_.rate();
    if (has_theta_) out.acceptance["theta"] = theta_acc_.rate();
    if (spatial_) out.acceptance["phi"] = phi_acc_.rate();
    if (me_) out.acceptance["scale"] = scale_acc_.rate();
    if (me_) out.acceptance["shift"] = shift_acc_.rate();
    if (has_theta_ && spec_.outcome != Outcome::none) out.acceptance["tau_theta_joint"] = theta_sampler_.joint_acc.rate();
    if (spatial_) out.acceptance["tau_phi_joint"] = phi_sampler_.joint_acc.rate();
    for (const auto& [name, c] : tau_acc_) out.acceptance[name] = c.rate();
    return out;
  }

 private:
  bool fixed(Block b) const { return cfg_.fixed_blocks.contains(b); }

  std::size_t scalar_count() const {
    return static_cast<std::size_t>(s_.beta.size() + (me_ ? s_.alpha.size() + 2 : 0)) + (has_theta_ ? 1 : 0) +
           (spatial_ ? 1 : 0);
  }

  const Eigen::VectorXd& proxy() const { return me_ ? s_.x : data_.w; }

  void recompute_eta() {
    eta_ = Eigen::VectorXd::Constant(n_, s_.beta(0)) + s_.beta(1) * proxy();
    if (data_.z.cols() > 0) eta_ += data_.z * s_.beta.tail(data_.z.cols());
    if (has_theta_) eta_ += s_.theta;
  }

  double site_outcome(Eigen::Index i, double eta) const {
    switch (spec_.outcome) {
      case Outcome::poisson:
        if (!(std::abs(eta) <= kEtaLimit)) return kNegInf;
        return data_.y(i) * eta - data_.e(i) * std::exp(eta);
      case Outcome::gaussian: {
        const double r = data_.y(i) - eta;
        return -0.5 * spec_.gaussian_precision * r * r;
      }
      case Outcome::none:
        return 0.0;
    }
    return 0.0;
  }

  double outcome_sum(const Eigen::VectorXd& eta) const {
    if (spec_.outcome == Outcome::none) return 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) total += site_outcome(i, eta(i));
    return std::isnan(total) ? kNegInf : total;
  }

  void check_finite(const Eigen::VectorXd& v, Block b) const {
    if (!v.allFinite()) diverge(b);
  }
  void check_finite(double v, Block b) const {
    if (!std::isfinite(v)) diverge(b);
  }
  [[noreturn]] void diverge(Block b) const {
    throw NumericalError("divergence at iteration " + std::to_string(iteration_) + " in block " + to_string(b));
  }

  void sweep() {
    if (!fixed(Block::beta)) update_beta();
    if (me_ && !fixed(Block::alpha)) update_alpha();
    if (me_ && !fixed(Block::x)) update_x();
    if (me_ && !fixed(Block::beta) && !fixed(Block::x)) update_scale();
    if (me_ && !fixed(Block::beta) && !fixed(Block::x) && !fixed(Block::alpha)) update_shift();
    if (has_theta_ && !fixed(Block::theta)) update_theta();
    if (spatial_ && !fixed(Block::phi)) update_phi();
    if (has_theta_ && !fixed(Block::tau_theta))
      update_icar_precision(s_.tau_theta, s_.theta, spec_.priors.tau_theta, "tau_theta", Block::tau_theta);
    if (me_ && !fixed(Block::tau_eps)) {
      const double ss = (s_.x - exposure_mean(s_, data_)).squaredNorm();
      update_precision(s_.tau_eps, ss, static_cast<double>(n_), spec_.priors.tau_eps, "tau_eps", Block::tau_eps);
    }
    if (me_ && !fixed(Block::tau_u)) {
      Eigen::VectorXd r = data_.w - s_.x;
      if (spatial_) r -= s_.phi;
      update_precision(s_.tau_u, r.squaredNorm(), static_cast<double>(n_), spec_.priors.tau_u, "tau_u",
                       Block::tau_u);
    }
    if (spatial_ && !fixed(Block::tau_phi))
      update_icar_precision(s_.tau_phi, s_.phi, spec_.priors.tau_phi, "tau_phi", Block::tau_phi);
  }

  double beta_prior(const Eigen::VectorXd& b) const {
    const PriorTable& p = spec_.priors;
    double total = logdensity(p.beta_intercept, b(0)) + logdensity(p.beta_x, b(1));
    for (Eigen::Index j = 2; j < b.size(); ++j) total += logdensity(p.beta_z, b(j));
    return total;
  }

  Eigen::VectorXd eta_for_beta(const Eigen::VectorXd& b) const {
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(n_, b(0)) + b(1) * proxy();
    if (data_.z.cols() > 0) eta += data_.z * b.tail(data_.z.cols());
    if (has_theta_) eta += s_.theta;
    return eta;
  }

  void update_beta() {
    const Eigen::Index d = s_.beta.size();
    const Eigen::VectorXd z = standard_normal_vector(static_cast<std::size_t>(d), rng_);
    const Eigen::VectorXd prop = s_.beta + std::exp(beta_log_scale_) * (beta_chol_ * z);
    const Eigen::VectorXd eta_prop = eta_for_beta(prop);
    const double lp_new = outcome_sum(eta_prop) + beta_prior(prop);
    const double lp_old = outcome_sum(eta_) + beta_prior(s_.beta);
    const bool accept = std::isfinite(lp_new) && std::log(uniform_(rng_)) < lp_new - lp_old;
    if (accept) {
      s_.beta = prop;
      eta_ = eta_prop;
    }
    record(beta_acc_, beta_window_, accept);
    check_finite(s_.beta, Block::beta);
  }

  void update_alpha() {
    const auto& prior = std::get<NormalPrior>(spec_.priors.alpha);
    const Eigen::Index d = ztz_.rows();
    Eigen::MatrixXd a = s_.tau_eps * ztz_;
    a.diagonal().array() += 1.0 / prior.variance;
    const Eigen::VectorXd b =
        s_.tau_eps * (ztilde1_.transpose() * s_.x) + Eigen::VectorXd::Constant(d, prior.mean / prior.variance);
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) diverge(Block::alpha);
    const Eigen::VectorXd mean = llt.solve(b);
    const Eigen::VectorXd z = standard_normal_vector(static_cast<std::size_t>(d), rng_);
    s_.alpha = mean + llt.matrixU().solve(z);
    check_finite(s_.alpha, Block::alpha);
  }

  void update_x() {
    const Eigen::VectorXd mu = exposure_mean(s_, data_);
    const double b1 = s_.beta(1);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < n_; ++i) {
      const double old = s_.x(i);
      const double prop = old + std::exp(x_log_sd_(i)) * normal(rng_);
      const double shift = spatial_ ? s_.phi(i) : 0.0;
      const double r_old = data_.w(i) - old - shift;
      const double r_new = data_.w(i) - prop - shift;
      const double eta_new = eta_(i) + b1 * (prop - old);
      const double delta = site_outcome(i, eta_new) - site_outcome(i, eta_(i)) -
                           0.5 * s_.tau_eps * ((prop - mu(i)) * (prop - mu(i)) - (old - mu(i)) * (old - mu(i))) -
                           0.5 * s_.tau_u * (r_new * r_new - r_old * r_old);
      const bool accept = std::isfinite(delta) && std::log(uniform_(rng_)) < delta;
      if (accept) {
        s_.x(i) = prop;
        eta_(i) = eta_new;
        ++x_window_(i);
      }
      if (!burnin_) x_acc_.add(accept);
    }
    check_finite(s_.x, Block::x);
  }

  // Per-site log terms of a constrained field: value, gradient and curvature
  // (minus the second derivative). `quadratic` marks Gaussian terms, whose
  // conditional mode takes a single Newton step.
  struct FieldTerms {
    std::function<double(Eigen::Index, double)> value;
    std::function<void(Eigen::Index, double, double&, double&)> derivs;
    bool quadratic = false;
  };

  // Gaussian approximation of a field's full conditional at its mode.
  struct Laplace {
    explicit Laplace(const std::vector<std::vector<std::size_t>>& components) : gauss(components) {}
    ConstrainedGaussian gauss;
    Eigen::VectorXd mode;
    Eigen::SparseMatrix<double> q_upper;
    bool valid = false;
  };

  struct FieldSampler {
    explicit FieldSampler(const std::vector<std::vector<std::size_t>>& components)
        : current(std::make_unique<Laplace>(components)), proposal(std::make_unique<Laplace>(components)) {}
    std::unique_ptr<Laplace> current;
    std::unique_ptr<Laplace> proposal;
    Eigen::VectorXd warm;  // last mode, starting point of the next Newton run
    double joint_log_sd = std::log(0.3);
    Counter joint_acc, joint_window;
  };

  double field_objective(const Eigen::VectorXd& v, double tau, const FieldTerms& terms) const {
    double total = -0.5 * tau * icar_.quad_form(v);
    for (Eigen::Index i = 0; i < n_; ++i) total += terms.value(i, v(i));
    return std::isnan(total) ? kNegInf : total;
  }

  // Newton iterations for the conditional mode; fills `out` with the mode and
  // the factorised precision tau K + diag(curvature). False on failure.
  bool laplace_at(const Eigen::VectorXd& start, double tau, const FieldTerms& terms, Laplace& out) const {
    out.valid = false;
    Eigen::VectorXd m = start;
    double fm = field_objective(m, tau, terms);
    if (!std::isfinite(fm)) return false;
    const SparseSymmetricMatrix tk = icar_.k().scaled(tau);
    Eigen::VectorXd g(n_), w(n_);
    bool converged = false;
    for (int it = 0; it < 50 && !converged; ++it) {
      for (Eigen::Index i = 0; i < n_; ++i) terms.derivs(i, m(i), g(i), w(i));
      if (!g.allFinite() || !w.allFinite()) return false;
      out.q_upper = tk.plus_diagonal(w).upper();
      try {
        out.gauss.set_precision(out.q_upper);
      } catch (const NumericalError&) {
        return false;
      }
      const Eigen::VectorXd step = out.gauss.mean(g + w.cwiseProduct(m)) - m;
      if (terms.quadratic) {
        m += step;
        converged = true;
        break;
      }
      double t = 1.0;
      Eigen::VectorXd next;
      double fn = kNegInf;
      for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
        next = m + t * step;
        fn = field_objective(next, tau, terms);
        if (fn >= fm - 1e-10 * (1.0 + std::abs(fm))) break;
      }
      if (!std::isfinite(fn)) return false;
      converged = (t * step).lpNorm<Eigen::Infinity>() < 1e-8;
      m = std::move(next);
      fm = fn;
    }
    if (!converged) return false;
    icar_.center(m);
    out.mode = std::move(m);
    out.valid = true;
    return true;
  }

  // Log density of the Laplace proposal on the constraint subspace, up to a
  // constant shared by every proposal for the same components.
  static double proposal_logdensity(const Eigen::VectorXd& v, const Laplace& lap) {
    return 0.5 * lap.gauss.log_normalizer() + lap.gauss.log_kernel(v, lap.mode);
  }

  // Independence proposal from the Laplace approximation of the field's full
  // conditional; each connected component is accepted or rejected on its own.
  void update_field(Eigen::VectorXd& f, double tau, const FieldTerms& terms, FieldSampler& fs, Counter& acc,
                    Block block) {
    const auto& labels = icar_.component_label();
    const auto n_comp = static_cast<std::size_t>(icar_.n_components());
    const bool warm_ok = fs.warm.size() == n_ && std::isfinite(field_objective(fs.warm, tau, terms));
    if (!laplace_at(warm_ok ? fs.warm : f, tau, terms, *fs.current)) {
      if (!burnin_)
        for (std::size_t c = 0; c < n_comp; ++c) acc.add(false);
      return;
    }
    const Laplace& lap = *fs.current;
    fs.warm = lap.mode;
    Eigen::VectorXd prop = lap.gauss.sample(lap.mode, rng_);
    icar_.center(prop);

    auto per_component = [&](const Eigen::VectorXd& v, std::vector<double>& target, std::vector<double>& proposal) {
      target.assign(n_comp, 0.0);
      proposal.assign(n_comp, 0.0);
      for (Eigen::Index i = 0; i < n_; ++i)
        target[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] += terms.value(i, v(i));
      for (const auto& [a, b] : icar_.edges()) {
        const double diff = v(static_cast<Eigen::Index>(a)) - v(static_cast<Eigen::Index>(b));
        target[static_cast<std::size_t>(labels[a])] -= 0.5 * tau * diff * diff;
      }
      const Eigen::VectorXd d = v - lap.mode;
      const Eigen::VectorXd qd = lap.q_upper.selfadjointView<Eigen::Upper>() * d;
      for (Eigen::Index i = 0; i < n_; ++i)
        proposal[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] -= 0.5 * d(i) * qd(i);
    };
    std::vector<double> t_old, p_old, t_new, p_new;
    per_component(f, t_old, p_old);
    per_component(prop, t_new, p_new);
    for (std::size_t c = 0; c < n_comp; ++c) {
      const double log_ratio = (t_new[c] - t_old[c]) - (p_new[c] - p_old[c]);
      const bool accept = std::isfinite(t_new[c]) && std::log(uniform_(rng_)) < log_ratio;
      if (accept)
        for (std::size_t i : icar_.components()[c]) f(static_cast<Eigen::Index>(i)) = prop(static_cast<Eigen::Index>(i));
      if (!burnin_) acc.add(accept);
    }
    check_finite(f, block);
  }

  // Joint move of a precision and its field: log tau takes a random-walk step
  // and the field is redrawn from the Laplace approximation at the new
  // precision. Needs the approximation at the current precision, left in
  // fs.current by update_field.
  void joint_precision_move(Eigen::VectorXd& f, double& tau, const PriorSpec& prior, const FieldTerms& terms,
                            FieldSampler& fs, Block block) {
    if (!fs.current->valid) return;
    std::normal_distribution<double> normal;
    const double tau_new = tau * std::exp(std::exp(fs.joint_log_sd) * normal(rng_));
    bool accept = false;
    if (std::isfinite(tau_new) && tau_new > 0.0 && laplace_at(fs.current->mode, tau_new, terms, *fs.proposal)) {
      Eigen::VectorXd prop = fs.proposal->gauss.sample(fs.proposal->mode, rng_);
      icar_.center(prop);
      const double r = static_cast<double>(icar_.rank());
      auto log_target = [&](double t, const Eigen::VectorXd& v) {
        return logdensity(prior, t) + 0.5 * r * std::log(t) + field_objective(v, t, terms);
      };
      const double log_ratio = log_target(tau_new, prop) - log_target(tau, f) +
                               proposal_logdensity(f, *fs.current) - proposal_logdensity(prop, *fs.proposal) +
                               std::log(tau_new) - std::log(tau);
      accept = std::isfinite(log_ratio) && std::log(uniform_(rng_)) < log_ratio;
      if (accept) {
        f = std::move(prop);
        tau = tau_new;
        std::swap(fs.current, fs.proposal);
        fs.warm = fs.current->mode;
      }
    }
    if (!burnin_) fs.joint_acc.add(accept);
    fs.joint_window.add(accept);
    check_finite(f, block);
    check_finite(tau, block);
  }

  FieldTerms theta_terms() {
    theta_rest_ = eta_ - s_.theta;
    FieldTerms t;
    t.value = [this](Eigen::Index i, double v) { return site_outcome(i, theta_rest_(i) + v); };
    if (spec_.outcome == Outcome::poisson) {
      t.derivs = [this](Eigen::Index i, double v, double& g, double& w) {
        const double mu = data_.e(i) * std::exp(theta_rest_(i) + v);
        g = data_.y(i) - mu;
        w = mu;
      };
    } else {
      const double tau_y = spec_.gaussian_precision;
      t.derivs = [this, tau_y](Eigen::Index i, double v, double& g, double& w) {
        g = tau_y * (data_.y(i) - theta_rest_(i) - v);
        w = tau_y;
      };
      t.quadratic = true;
    }
    return t;
  }

  FieldTerms phi_terms() {
    phi_rest_ = data_.w - s_.x;
    const double tau_u = s_.tau_u;
    FieldTerms t;
    t.value = [this, tau_u](Eigen::Index i, double v) {
      const double d = phi_rest_(i) - v;
      return -0.5 * tau_u * d * d;
    };
    t.derivs = [this, tau_u](Eigen::Index i, double v, double& g, double& w) {
      g = tau_u * (phi_rest_(i) - v);
      w = tau_u;
    };
    t.quadratic = true;
    return t;
  }

  void update_theta() {
    if (spec_.outcome == Outcome::none) {
      s_.theta = sample_constrained(icar_, s_.tau_theta, rng_);
      if (!burnin_) theta_acc_.add(true);
      recompute_eta();
      return;
    }
    const FieldTerms terms = theta_terms();
    update_field(s_.theta, s_.tau_theta, terms, theta_sampler_, theta_acc_, Block::theta);
    if (!fixed(Block::tau_theta))
      joint_precision_move(s_.theta, s_.tau_theta, spec_.priors.tau_theta, terms, theta_sampler_, Block::theta);
    eta_ = theta_rest_ + s_.theta;
  }

  void update_phi() {
    const FieldTerms terms = phi_terms();
    update_field(s_.phi, s_.tau_phi, terms, phi_sampler_, phi_acc_, Block::phi);
    if (!fixed(Block::tau_phi))
      joint_precision_move(s_.phi, s_.tau_phi, spec_.priors.tau_phi, terms, phi_sampler_, Block::phi);
  }

  // Rescaling move along the ridge of the bilinear beta_x * x term:
  // (beta_x, x - mu, tau_eps) -> (c beta_x, (x - mu) / c, c^2 tau_eps), with the
  // intercept absorbing the shift of the mean.
  void update_scale() {
    std::normal_distribution<double> normal;
    const double log_c = std::exp(scale_log_sd_) * normal(rng_);
    const double c = std::exp(log_c);
    const bool scale_tau = !fixed(Block::tau_eps);
    const Eigen::VectorXd mu = exposure_mean(s_, data_);
    LatentState prop = s_;
    prop.beta(1) = c * s_.beta(1);
    prop.beta(0) = s_.beta(0) - s_.beta(1) * (c - 1.0) * mu.mean();
    prop.x = mu + (s_.x - mu) / c;
    if (scale_tau) prop.tau_eps = c * c * s_.tau_eps;
    const double log_jacobian = (1.0 - static_cast<double>(n_) + (scale_tau ? 2.0 : 0.0)) * log_c;
    const double lp_new = safe_logposterior(prop, data_, spec_, icar_);
    const double lp_old = safe_logposterior(s_, data_, spec_, icar_);
    const double log_ratio = lp_new - lp_old + log_jacobian;
    const bool accept = std::isfinite(log_ratio) && std::log(uniform_(rng_)) < log_ratio;
    if (accept) {
      s_ = std::move(prop);
      recompute_eta();
    }
    record(scale_acc_, scale_window_, accept);
  }

  // Location move: (x, alpha0, beta0) -> (x + d, alpha0 + d, beta0 - beta_x d)
  // leaves eta and the exposure residuals unchanged.
  void update_shift() {
    std::normal_distribution<double> normal;
    const double d = std::exp(shift_log_sd_) * normal(rng_);
    LatentState prop = s_;
    prop.x.array() += d;
    prop.alpha(0) += d;
    prop.beta(0) -= s_.beta(1) * d;
    const double log_ratio =
        safe_logposterior(prop, data_, spec_, icar_) - safe_logposterior(s_, data_, spec_, icar_);
    const bool accept = std::isfinite(log_ratio) && std::log(uniform_(rng_)) < log_ratio;
    if (accept) {
      s_ = std::move(prop);
      recompute_eta();
    }
    record(shift_acc_, shift_window_, accept);
  }

  // Precision with a Gaussian-kernel likelihood tau^(count/2) exp(-tau ss/2).
  void update_precision(double& tau, double ss, double count, const PriorSpec& prior, const std::string& name,
                        Block block) {
    if (const auto* g = std::get_if<GammaPrecisionPrior>(&prior); g && !cfg_.force_mh_precisions) {
      std::gamma_distribution<double> draw(g->shape + 0.5 * count, 1.0 / (g->rate + 0.5 * ss));
      tau = draw(rng_);
      if (!burnin_) tau_acc_[name].add(true);
      check_finite(tau, block);
      if (!(tau > 0.0)) diverge(block);
      return;
    }
    auto log_target = [&](double log_tau) {
      const double t = std::exp(log_tau);
      return logdensity(prior, t) + 0.5 * count * log_tau - 0.5 * t * ss + log_tau;
    };
    double& log_sd = tau_log_sd_.try_emplace(name, std::log(0.5)).first->second;
    std::normal_distribution<double> normal;
    const double cur = std::log(tau);
    const double prop = cur + std::exp(log_sd) * normal(rng_);
    const double delta = log_target(prop) - log_target(cur);
    const bool accept = std::isfinite(delta) && std::log(uniform_(rng_)) < delta;
    if (accept) tau = std::exp(prop);
    if (!burnin_) tau_acc_[name].add(accept);
    tau_window_[name].add(accept);
    check_finite(tau, block);
  }

  void update_icar_precision(double& tau, const Eigen::VectorXd& field, const PriorSpec& prior,
                             const std::string& name, Block block) {
    update_precision(tau, icar_.quad_form(field), static_cast<double>(icar_.rank()), prior, name, block);
  }

  void record(Counter& total, Counter& window, bool accept) {
    if (!burnin_) total.add(accept);
    window.add(accept);
  }

  void adapt() {
    ++window_index_;
    if (beta_window_.proposed > 0)
      adapt_log_scale(beta_log_scale_, beta_window_.rate(), cfg_.target_accept_block, window_index_);
    beta_window_ = {};
    if (me_) {
      const double w = static_cast<double>(cfg_.adaptation_window);
      for (Eigen::Index i = 0; i < n_; ++i)
        adapt_log_scale(x_log_sd_(i), x_window_(i) / w, cfg_.target_accept_single, window_index_);
      x_window_.setZero();
    }
    if (scale_window_.proposed > 0)
      adapt_log_scale(scale_log_sd_, scale_window_.rate(), cfg_.target_accept_single, window_index_);
    scale_window_ = {};
    if (shift_window_.proposed > 0)
      adapt_log_scale(shift_log_sd_, shift_window_.rate(), cfg_.target_accept_single, window_index_);
    shift_window_ = {};
    for (FieldSampler* fs : {&theta_sampler_, &phi_sampler_}) {
      if (fs->joint_window.proposed > 0)
        adapt_log_scale(fs->joint_log_sd, fs->joint_window.rate(), cfg_.target_accept_single, window_index_);
      fs->joint_window = {};
    }
    for (auto& [name, c] : tau_window_) {
      if (c.proposed > 0) adapt_log_scale(tau_log_sd_[name], c.rate(), cfg_.target_accept_single, window_index_);
      c = {};
    }
  }

  void store(ChainSamples& out, int row) const {
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < s_.beta.size(); ++j) out.scalars(row, k++) = s_.beta(j);
    if (me_)
      for (Eigen::Index j = 0; j < s_.alpha.size(); ++j) out.scalars(row, k++) = s_.alpha(j);
    if (has_theta_) out.scalars(row, k++) = s_.tau_theta;
    if (me_) {
      out.scalars(row, k++) = s_.tau_eps;
      out.scalars(row, k++) = s_.tau_u;
    }
    if (spatial_) out.scalars(row, k++) = s_.tau_phi;
    if (!cfg_.store_fields) return;
    if (has_theta_) out.theta.row(row) = s_.theta.transpose();
    if (me_) out.x.row(row) = s_.x.transpose();
    if (spatial_) out.phi.row(row) = s_.phi.transpose();
  }

  const Dataset& data_;
  const ModelSpec& spec_;
  const IcarStructure& icar_;
  const SamplerConfig& cfg_;
  Rng rng_;
  std::uint64_t seed_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  LatentState s_;
  bool me_, spatial_, has_theta_;
  Eigen::Index n_;
  Eigen::VectorXd eta_;

  Eigen::MatrixXd beta_chol_;
  double beta_log_scale_ = 0.0;
  Counter beta_acc_, beta_window_;
  Eigen::MatrixXd ztilde1_, ztz_;
  Eigen::VectorXd x_log_sd_;
  Eigen::VectorXi x_window_;
  Counter x_acc_;
  FieldSampler theta_sampler_, phi_sampler_;
  Eigen::VectorXd theta_rest_, phi_rest_;
  Counter theta_acc_, phi_acc_;
  double scale_log_sd_ = std::log(0.05);
  Counter scale_acc_, scale_window_;
  double shift_log_sd_ = std::log(0.05);
  Counter shift_acc_, shift_window_;
  std::map<std::string, double> tau_log_sd_;
  std::map<std::string, Counter> tau_acc_, tau_window_;

  int iteration_ = 0;
  int window_index_ = 0;
  bool burnin_ = true;
};

Eigen::MatrixXd beta_proposal_covariance(const LatentState& start, const Dataset& data, const ModelSpec& spec,
                                         const IcarStructure& icar) {
  const Eigen::Index d = start.beta.size();
  const Eigen::SparseMatrix<double> full =
      negative_hessian(start, data, spec, icar, true).selfadjointView<Eigen::Upper>();
  const Eigen::MatrixXd h = Eigen::MatrixXd(full).topLeftCorner(d, d);
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() == Eigen::Success) return llt.solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) diag(j, j) = 1.0 / std::max(h(j, j), 1e-8);
  return diag;
}

}  // namespace

PosteriorSamples run_mcmc(const Dataset& data, const ModelSpec& spec, const IcarStructure& icar,
                          const SamplerConfig& config, const std::optional<LatentState>& initial) {
  config.validate();
  require_valid(data, spec);
  if (icar.dimension() != data.size()) throw ValidationError("adjacency and data sizes differ");

  LatentState start;
  if (initial) {
    start = *initial;
    // Validates shapes and finiteness of the supplied state.
    if (!std::isfinite(safe_logposterior(start, data, spec, icar)))
      throw ValidationError("initial state has a non-finite log posterior");
  } else {
    MapOptions opts;
    opts.tau_theta = opts.tau_eps = opts.tau_u = opts.tau_phi = 1.0;
    start = fit_map(data, spec, icar, opts).state;
  }
  const Eigen::MatrixXd beta_cov = beta_proposal_covariance(start, data, spec, icar);

  PosteriorSamples result;
  result.scalar_names = scalar_parameter_names(data, spec);
  result.variant = spec.variant;
  result.include_spatial_theta = spec.include_spatial_theta;
  result.n_beta = start.beta.size();
  result.n_alpha = has_measurement_error(spec.variant) ? start.alpha.size() : 0;
  result.chains.resize(static_cast<std::size_t>(config.n_chains));

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(config.n_chains));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int c = next++; c < config.n_chains; c = next++) {
      try {
        ChainRunner runner(data, spec, icar, config, start, beta_cov, chain_seed(config.rng_seed, c), !initial);
        result.chains[static_cast<std::size_t>(c)] = runner.run();
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    }
  };
  const int n_threads = std::min(resolve_threads(config.n_threads), config.n_chains);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

}  // namespace netme
