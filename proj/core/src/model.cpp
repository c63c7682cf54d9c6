#include "netme/model.hpp"

#include <cmath>
#include <numbers>

#include "netme/error.hpp"

namespace netme {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::classical_me: return "classical_me";
    case Variant::spatial_me: return "spatial_me";
  }
  return "unknown";
}

Variant parse_variant(std::string_view text) {
  if (text == "baseline") return Variant::baseline;
  if (text == "classical_me" || text == "classical") return Variant::classical_me;
  if (text == "spatial_me" || text == "spatial") return Variant::spatial_me;
  throw ValidationError("unknown model variant: " + std::string(text));
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::poisson: return "poisson";
    case Outcome::gaussian: return "gaussian";
    case Outcome::none: return "none";
  }
  return "unknown";
}

Outcome parse_outcome(std::string_view text) {
  if (text == "poisson") return Outcome::poisson;
  if (text == "gaussian") return Outcome::gaussian;
  if (text == "none") return Outcome::none;
  throw ValidationError("unknown outcome family: " + std::string(text));
}

PriorSpec& PriorTable::at(std::string_view name) {
  return const_cast<PriorSpec&>(static_cast<const PriorTable&>(*this).at(name));
}

const PriorSpec& PriorTable::at(std::string_view name) const {
  if (name == "beta0") return beta_intercept;
  if (name == "beta_x") return beta_x;
  if (name == "beta_z") return beta_z;
  if (name == "alpha") return alpha;
  if (name == "tau_theta") return tau_theta;
  if (name == "tau_phi") return tau_phi;
  if (name == "tau_eps") return tau_eps;
  if (name == "tau_u") return tau_u;
  throw ValidationError("unknown prior slot: " + std::string(name));
}

const std::vector<std::string>& PriorTable::names() {
  static const std::vector<std::string> kNames{"beta0",     "beta_x",  "beta_z",  "alpha",
                                               "tau_theta", "tau_phi", "tau_eps", "tau_u"};
  return kNames;
}

std::vector<std::string> ModelSpec::validate() const {
  std::vector<std::string> problems;
  for (const std::string& name : PriorTable::names()) {
    const PriorSpec& p = priors.at(name);
    if (auto violation = validate_prior(p)) problems.push_back(name + ": " + *violation);
    const bool precision_slot = name.starts_with("tau_");
    if (precision_slot != is_precision_prior(p))
      problems.push_back(name + ": " + (precision_slot ? "needs a precision prior" : "needs a normal prior"));
  }
  if (outcome == Outcome::gaussian && !(gaussian_precision > 0.0))
    problems.push_back("gaussian_precision must be positive");
  return problems;
}

LatentState LatentState::zeros(const Dataset& data, const ModelSpec& spec) {
  const auto n = static_cast<Eigen::Index>(data.size());
  LatentState s;
  s.beta = Eigen::VectorXd::Zero(2 + data.z.cols());
  if (spec.include_spatial_theta) s.theta = Eigen::VectorXd::Zero(n);
  if (has_measurement_error(spec.variant)) {
    s.alpha = Eigen::VectorXd::Zero(1 + data.ztilde.cols());
    s.x = Eigen::VectorXd::Zero(n);
  }
  if (spec.variant == Variant::spatial_me) s.phi = Eigen::VectorXd::Zero(n);
  return s;
}

LatentLayout::LatentLayout(const Dataset& data, const ModelSpec& spec) {
  const auto n = static_cast<Eigen::Index>(data.size());
  n_beta = 2 + data.z.cols();
  if (has_measurement_error(spec.variant)) {
    n_alpha = 1 + data.ztilde.cols();
    n_x = n;
  }
  if (spec.include_spatial_theta) n_theta = n;
  if (spec.variant == Variant::spatial_me) n_phi = n;
}

Eigen::VectorXd LatentLayout::flatten(const LatentState& s) const {
  Eigen::VectorXd v(size());
  v.segment(beta(), n_beta) = s.beta;
  if (n_alpha) v.segment(alpha(), n_alpha) = s.alpha;
  if (n_x) v.segment(x(), n_x) = s.x;
  if (n_theta) v.segment(theta(), n_theta) = s.theta;
  if (n_phi) v.segment(phi(), n_phi) = s.phi;
  return v;
}

void LatentLayout::unflatten(const Eigen::VectorXd& v, LatentState& s) const {
  s.beta = v.segment(beta(), n_beta);
  s.alpha = v.segment(alpha(), n_alpha);
  s.x = v.segment(x(), n_x);
  s.theta = v.segment(theta(), n_theta);
  s.phi = v.segment(phi(), n_phi);
}

namespace {

void check_state(const LatentState& s, const Dataset& data, const ModelSpec& spec) {
  const auto n = static_cast<Eigen::Index>(data.size());
  if (s.beta.size() != 2 + data.z.cols()) throw ValidationError("beta has the wrong length");
  if (spec.include_spatial_theta && s.theta.size() != n) throw ValidationError("theta has the wrong length");
  if (has_measurement_error(spec.variant)) {
    if (s.x.size() != n) throw ValidationError("x has the wrong length");
    if (s.alpha.size() != 1 + data.ztilde.cols()) throw ValidationError("alpha has the wrong length");
  }
  if (spec.variant == Variant::spatial_me && s.phi.size() != n) throw ValidationError("phi has the wrong length");
}

const Eigen::VectorXd& proxy_slot(const LatentState& s, const Dataset& data, const ModelSpec& spec) {
  return has_measurement_error(spec.variant) ? s.x : data.w;
}

double normal_prior_gradient(const PriorSpec& p, double x) {
  const auto& n = std::get<NormalPrior>(p);
  return -(x - n.mean) / n.variance;
}

double normal_prior_curvature(const PriorSpec& p) { return 1.0 / std::get<NormalPrior>(p).variance; }

// Outcome residual d loglik / d eta and curvature -d2 loglik / d eta2.
void outcome_derivatives(const Dataset& data, const Eigen::VectorXd& eta, const ModelSpec& spec,
                         Eigen::VectorXd& residual, Eigen::VectorXd& curvature) {
  const Eigen::Index n = eta.size();
  switch (spec.outcome) {
    case Outcome::poisson:
      curvature = data.e.array() * eta.array().exp();
      residual = data.y - curvature;
      break;
    case Outcome::gaussian:
      residual = spec.gaussian_precision * (data.y - eta);
      curvature = Eigen::VectorXd::Constant(n, spec.gaussian_precision);
      break;
    case Outcome::none:
      residual = Eigen::VectorXd::Zero(n);
      curvature = Eigen::VectorXd::Zero(n);
      break;
  }
}

}  // namespace

Eigen::VectorXd linear_predictor(const LatentState& state, const Dataset& data, const ModelSpec& spec) {
  check_state(state, data, spec);
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(data.size()), state.beta(0));
  eta += state.beta(1) * proxy_slot(state, data, spec);
  if (data.z.cols() > 0) eta += data.z * state.beta.tail(data.z.cols());
  if (spec.include_spatial_theta) eta += state.theta;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    if (!std::isfinite(eta(i)))
      throw NumericalError("linear predictor is not finite at index " + std::to_string(i));
  return eta;
}

double loglik_poisson(const Eigen::VectorXd& y, const Eigen::VectorXd& e, const Eigen::VectorXd& eta) {
  if (y.size() != e.size() || y.size() != eta.size()) throw ValidationError("loglik_poisson: length mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (std::abs(eta(i)) > kEtaLimit)
      throw NumericalError("exp(eta) overflow at index " + std::to_string(i) +
                           "; rescale covariates or offsets");
    total += y(i) * (std::log(e(i)) + eta(i)) - e(i) * std::exp(eta(i)) - std::lgamma(y(i) + 1.0);
  }
  return total;
}

Eigen::VectorXd pointwise_loglik(const Dataset& data, const Eigen::VectorXd& eta, const ModelSpec& spec) {
  const Eigen::Index n = eta.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  switch (spec.outcome) {
    case Outcome::poisson:
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(eta(i)) > kEtaLimit)
          throw NumericalError("exp(eta) overflow at index " + std::to_string(i) +
                               "; rescale covariates or offsets");
        out(i) = data.y(i) * (std::log(data.e(i)) + eta(i)) - data.e(i) * std::exp(eta(i)) -
                 std::lgamma(data.y(i) + 1.0);
      }
      break;
    case Outcome::gaussian:
      for (Eigen::Index i = 0; i < n; ++i)
        out(i) = logdensity_normal(data.y(i), eta(i), 1.0 / spec.gaussian_precision);
      break;
    case Outcome::none:
      break;
  }
  return out;
}

double outcome_loglik(const Dataset& data, const Eigen::VectorXd& eta, const ModelSpec& spec) {
  if (spec.outcome == Outcome::poisson) return loglik_poisson(data.y, data.e, eta);
  return pointwise_loglik(data, eta, spec).sum();
}

Eigen::VectorXd exposure_mean(const LatentState& state, const Dataset& data) {
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(data.size()), state.alpha(0));
  if (data.ztilde.cols() > 0) mu += data.ztilde * state.alpha.tail(data.ztilde.cols());
  return mu;
}

double exposure_logdensity(const LatentState& state, const Dataset& data) {
  if (!(state.tau_eps > 0.0)) throw ValidationError("tau_eps must be positive");
  const Eigen::VectorXd r = state.x - exposure_mean(state, data);
  const double n = static_cast<double>(r.size());
  return 0.5 * n * std::log(state.tau_eps / (2.0 * std::numbers::pi)) - 0.5 * state.tau_eps * r.squaredNorm();
}

double error_logdensity(const LatentState& state, const Dataset& data, Variant variant) {
  if (!(state.tau_u > 0.0)) throw ValidationError("tau_u must be positive");
  Eigen::VectorXd r = data.w - state.x;
  if (variant == Variant::spatial_me) r -= state.phi;
  const double n = static_cast<double>(r.size());
  return 0.5 * n * std::log(state.tau_u / (2.0 * std::numbers::pi)) - 0.5 * state.tau_u * r.squaredNorm();
}

double prior_logdensity(const LatentState& state, const Dataset& data, const ModelSpec& spec) {
  const PriorTable& p = spec.priors;
  double total = logdensity(p.beta_intercept, state.beta(0)) + logdensity(p.beta_x, state.beta(1));
  for (Eigen::Index j = 0; j < data.z.cols(); ++j) total += logdensity(p.beta_z, state.beta(2 + j));
  if (spec.include_spatial_theta) total += logdensity(p.tau_theta, state.tau_theta);
  if (has_measurement_error(spec.variant)) {
    for (Eigen::Index j = 0; j < state.alpha.size(); ++j) total += logdensity(p.alpha, state.alpha(j));
    total += logdensity(p.tau_eps, state.tau_eps) + logdensity(p.tau_u, state.tau_u);
  }
  if (spec.variant == Variant::spatial_me) total += logdensity(p.tau_phi, state.tau_phi);
  return total;
}

LogPosteriorTerms joint_logposterior_terms(const LatentState& state, const Dataset& data,
                                           const ModelSpec& spec, const IcarStructure& icar) {
  LogPosteriorTerms t;
  if (spec.outcome != Outcome::none) t.outcome = outcome_loglik(data, linear_predictor(state, data, spec), spec);
  if (has_measurement_error(spec.variant)) {
    t.exposure = exposure_logdensity(state, data);
    t.error = error_logdensity(state, data, spec.variant);
  }
  if (spec.include_spatial_theta) t.icar_theta = icar_logdensity(state.theta, state.tau_theta, icar);
  if (spec.variant == Variant::spatial_me) t.icar_phi = icar_logdensity(state.phi, state.tau_phi, icar);
  t.priors = prior_logdensity(state, data, spec);

  const std::pair<const char*, double> named[] = {{"outcome likelihood", t.outcome},
                                                  {"exposure model", t.exposure},
                                                  {"error model", t.error},
                                                  {"ICAR theta", t.icar_theta},
                                                  {"ICAR phi", t.icar_phi},
                                                  {"priors", t.priors}};
  for (const auto& [name, value] : named)
    if (!std::isfinite(value)) throw NumericalError(std::string("non-finite log posterior term: ") + name);
  return t;
}

double joint_logposterior(const LatentState& state, const Dataset& data, const ModelSpec& spec,
                          const IcarStructure& icar) {
  return joint_logposterior_terms(state, data, spec, icar).total();
}

Eigen::VectorXd joint_gradient(const LatentState& state, const Dataset& data, const ModelSpec& spec,
                               const IcarStructure& icar) {
  const LatentLayout layout(data, spec);
  const Eigen::VectorXd eta = linear_predictor(state, data, spec);
  Eigen::VectorXd r, curvature;
  outcome_derivatives(data, eta, spec, r, curvature);
  const Eigen::VectorXd& v = proxy_slot(state, data, spec);
  const Eigen::Index p = data.z.cols();

  Eigen::VectorXd g = Eigen::VectorXd::Zero(layout.size());
  g(0) = r.sum() + normal_prior_gradient(spec.priors.beta_intercept, state.beta(0));
  g(1) = r.dot(v) + normal_prior_gradient(spec.priors.beta_x, state.beta(1));
  for (Eigen::Index j = 0; j < p; ++j)
    g(2 + j) = data.z.col(j).dot(r) + normal_prior_gradient(spec.priors.beta_z, state.beta(2 + j));

  if (layout.n_x) {
    const Eigen::VectorXd mu = exposure_mean(state, data);
    const Eigen::VectorXd exp_res = state.x - mu;
    Eigen::VectorXd err_res = data.w - state.x;
    if (layout.n_phi) err_res -= state.phi;
    g.segment(layout.x(), layout.n_x) = state.beta(1) * r - state.tau_eps * exp_res + state.tau_u * err_res;
    g(layout.alpha()) = state.tau_eps * exp_res.sum() + normal_prior_gradient(spec.priors.alpha, state.alpha(0));
    for (Eigen::Index j = 0; j < data.ztilde.cols(); ++j)
      g(layout.alpha() + 1 + j) = state.tau_eps * data.ztilde.col(j).dot(exp_res) +
                                  normal_prior_gradient(spec.priors.alpha, state.alpha(1 + j));
    if (layout.n_phi)
      g.segment(layout.phi(), layout.n_phi) = state.tau_u * err_res - state.tau_phi * icar.k().multiply(state.phi);
  }
  if (layout.n_theta)
    g.segment(layout.theta(), layout.n_theta) = r - state.tau_theta * icar.k().multiply(state.theta);
  return g;
}

Eigen::SparseMatrix<double> negative_hessian(const LatentState& state, const Dataset& data,
                                             const ModelSpec& spec, const IcarStructure& icar, bool fisher) {
  const LatentLayout layout(data, spec);
  const Eigen::VectorXd eta = linear_predictor(state, data, spec);
  Eigen::VectorXd r, w;
  outcome_derivatives(data, eta, spec, r, w);
  const Eigen::VectorXd& v = proxy_slot(state, data, spec);
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  const Eigen::Index p = data.z.cols();
  const Eigen::Index nb = layout.n_beta;

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>((nb + 4) * n * 2 + nb * nb));
  auto add = [&t](Eigen::Index a, Eigen::Index b, double value) {
    if (value == 0.0) return;
    if (a > b) std::swap(a, b);
    t.emplace_back(a, b, value);
  };

  // Outcome curvature W_i J_i J_i' with J_i = d eta_i / d latent.
  Eigen::MatrixXd beta_block = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::VectorXd j_beta(nb);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w(i) == 0.0) continue;
    j_beta(0) = 1.0;
    j_beta(1) = v(i);
    for (Eigen::Index j = 0; j < p; ++j) j_beta(2 + j) = data.z(i, j);
    beta_block.noalias() += w(i) * j_beta * j_beta.transpose();
    if (layout.n_x) {
      const Eigen::Index xi = layout.x() + i;
      for (Eigen::Index a = 0; a < nb; ++a) add(a, xi, w(i) * j_beta(a) * state.beta(1));
      add(xi, xi, w(i) * state.beta(1) * state.beta(1));
      if (layout.n_theta) add(xi, layout.theta() + i, w(i) * state.beta(1));
    }
    if (layout.n_theta) {
      const Eigen::Index ti = layout.theta() + i;
      for (Eigen::Index a = 0; a < nb; ++a) add(a, ti, w(i) * j_beta(a));
      add(ti, ti, w(i));
    }
  }
  if (layout.n_x && !fisher)
    for (Eigen::Index i = 0; i < n; ++i) add(1, layout.x() + i, -r(i));

  beta_block(0, 0) += normal_prior_curvature(spec.priors.beta_intercept);
  beta_block(1, 1) += normal_prior_curvature(spec.priors.beta_x);
  for (Eigen::Index j = 0; j < p; ++j) beta_block(2 + j, 2 + j) += normal_prior_curvature(spec.priors.beta_z);
  for (Eigen::Index a = 0; a < nb; ++a)
    for (Eigen::Index b = a; b < nb; ++b) add(a, b, beta_block(a, b));

  if (layout.n_x) {
    const Eigen::Index na = layout.n_alpha;
    Eigen::MatrixXd zt1(n, na);
    zt1.col(0).setOnes();
    if (na > 1) zt1.rightCols(na - 1) = data.ztilde;
    Eigen::MatrixXd aa = state.tau_eps * zt1.transpose() * zt1;
    aa.diagonal().array() += normal_prior_curvature(spec.priors.alpha);
    for (Eigen::Index a = 0; a < na; ++a)
      for (Eigen::Index b = a; b < na; ++b) add(layout.alpha() + a, layout.alpha() + b, aa(a, b));
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index xi = layout.x() + i;
      for (Eigen::Index a = 0; a < na; ++a) add(layout.alpha() + a, xi, -state.tau_eps * zt1(i, a));
      add(xi, xi, state.tau_eps + state.tau_u);
      if (layout.n_phi) {
        add(xi, layout.phi() + i, state.tau_u);
        add(layout.phi() + i, layout.phi() + i, state.tau_u);
      }
    }
  }
  auto add_icar = [&](Eigen::Index offset, double tau) {
    for (const MatrixEntry& e : icar.k().entries())
      add(offset + static_cast<Eigen::Index>(e.row), offset + static_cast<Eigen::Index>(e.col), tau * e.value);
  };
  if (layout.n_theta) add_icar(layout.theta(), state.tau_theta);
  if (layout.n_phi) add_icar(layout.phi(), state.tau_phi);

  Eigen::SparseMatrix<double> h(layout.size(), layout.size());
  h.setFromTriplets(t.begin(), t.end());
  h.makeCompressed();
  return h;
}

std::vector<std::string> beta_names(const Dataset& data) {
  std::vector<std::string> names{"Intercept", data.w_scaling.name};
  for (const auto& s : data.z_scaling) names.push_back(s.name);
  return names;
}

std::vector<std::string> alpha_names(const Dataset& data) {
  std::vector<std::string> names{"Exposure intercept"};
  for (const auto& s : data.ztilde_scaling) names.push_back("Exposure " + s.name);
  return names;
}

}  // namespace netme
