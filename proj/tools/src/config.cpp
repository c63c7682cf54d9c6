#include "config.hpp"

#include <algorithm>
#include <cstdint>
#include <set>

#include "netme/error.hpp"

namespace netme::cli {

namespace {

void check_keys(const json& object, const std::set<std::string>& allowed, const std::string& context) {
  if (!object.is_object()) throw ValidationError(context + " must be an object");
  for (const auto& [key, value] : object.items())
    if (!allowed.count(key)) throw ValidationError("unknown key '" + key + "' in " + context);
}

double number(const json& object, const std::string& key, const std::string& context) {
  if (!object.contains(key)) throw ValidationError(context + " needs '" + key + "'");
  if (!object[key].is_number()) throw ValidationError(context + "." + key + " must be a number");
  return object[key].get<double>();
}

int integer(const json& object, const std::string& key, const std::string& context) {
  if (!object[key].is_number_integer()) throw ValidationError(context + "." + key + " must be an integer");
  return object[key].get<int>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

PriorSpec parse_prior(const json& record, const std::string& context) {
  if (!record.is_object() || !record.contains("family") || !record["family"].is_string())
    throw ValidationError(context + " needs a string 'family'");
  const std::string family = record["family"].get<std::string>();
  PriorSpec prior;
  if (family == "normal") {
    check_keys(record, {"family", "mean", "variance", "precision"}, context);
    NormalPrior p;
    p.mean = record.contains("mean") ? number(record, "mean", context) : 0.0;
    if (record.contains("variance") == record.contains("precision"))
      throw ValidationError(context + " needs exactly one of 'variance' and 'precision'");
    if (record.contains("variance")) {
      p.variance = number(record, "variance", context);
    } else {
      const double precision = number(record, "precision", context);
      if (!(precision > 0.0)) throw ValidationError(context + ": precision must be positive");
      p.variance = 1.0 / precision;
    }
    prior = p;
  } else if (family == "loggamma" || family == "gamma") {
    check_keys(record, {"family", "shape", "rate"}, context);
    prior = GammaPrecisionPrior{number(record, "shape", context), number(record, "rate", context)};
  } else if (family == "pc") {
    check_keys(record, {"family", "sigma0", "alpha"}, context);
    prior = PcPrecisionPrior{number(record, "sigma0", context), number(record, "alpha", context)};
  } else {
    throw ValidationError(context + ": unknown prior family '" + family + "'");
  }
  if (auto problem = validate_prior(prior)) throw ValidationError(context + ": " + *problem);
  return prior;
}

json prior_to_json(const PriorSpec& prior) {
  if (const auto* p = std::get_if<NormalPrior>(&prior))
    return {{"family", "normal"}, {"mean", p->mean}, {"variance", p->variance}};
  if (const auto* p = std::get_if<GammaPrecisionPrior>(&prior))
    return {{"family", "loggamma"}, {"shape", p->shape}, {"rate", p->rate}};
  const auto& p = std::get<PcPrecisionPrior>(prior);
  return {{"family", "pc"}, {"sigma0", p.sigma0}, {"alpha", p.alpha}};
}

DevianceScope parse_deviance_scope(const std::string& text) {
  if (text == "outcome") return DevianceScope::outcome;
  if (text == "all_blocks") return DevianceScope::all_blocks;
  throw ValidationError("unknown deviance scope '" + text + "' (expected outcome or all_blocks)");
}

std::string to_string(DevianceScope scope) {
  return scope == DevianceScope::outcome ? "outcome" : "all_blocks";
}

void FitConfig::validate() const {
  if (bundle.empty()) throw ValidationError("data.bundle is required");
  const auto problems = spec.validate();
  if (!problems.empty()) throw ValidationError(problems.front());
  sampler.validate();
}

json FitConfig::settings() const {
  json priors = json::object();
  for (const std::string& name : PriorTable::names()) priors[name] = prior_to_json(spec.priors.at(name));
  return {{"model",
           {{"variant", to_string(spec.variant)},
            {"spatial_theta", spec.include_spatial_theta},
            {"deviance", to_string(deviance)}}},
          {"priors", priors},
          {"sampler",
           {{"iterations", sampler.n_iterations},
            {"burnin", sampler.n_burnin},
            {"thinning", sampler.thinning},
            {"chains", sampler.n_chains},
            {"seed", sampler.rng_seed},
            {"adaptation_window", sampler.adaptation_window}}}};
}

FitConfig parse_fit_config(const json& doc, const fs::path& base_dir) {
  check_keys(doc, {"data", "model", "priors", "sampler", "output"}, "config");
  FitConfig cfg;
  if (doc.contains("data")) {
    const json& d = doc["data"];
    check_keys(d, {"bundle"}, "data");
    if (d.contains("bundle")) {
      if (!d["bundle"].is_string()) throw ValidationError("data.bundle must be a path");
      cfg.bundle = resolve(base_dir, d["bundle"].get<std::string>());
    }
  }
  if (doc.contains("model")) {
    const json& m = doc["model"];
    check_keys(m, {"variant", "spatial_theta", "deviance"}, "model");
    if (m.contains("variant")) cfg.spec.variant = parse_variant(m["variant"].get<std::string>());
    if (m.contains("spatial_theta")) {
      if (!m["spatial_theta"].is_boolean()) throw ValidationError("model.spatial_theta must be a boolean");
      cfg.spec.include_spatial_theta = m["spatial_theta"].get<bool>();
    }
    if (m.contains("deviance")) cfg.deviance = parse_deviance_scope(m["deviance"].get<std::string>());
  }
  if (doc.contains("priors")) {
    const json& p = doc["priors"];
    if (!p.is_object()) throw ValidationError("priors must be an object");
    for (const auto& [name, record] : p.items()) {
      const auto& names = PriorTable::names();
      if (std::find(names.begin(), names.end(), name) == names.end())
        throw ValidationError("unknown prior slot '" + name + "'");
      cfg.spec.priors.at(name) = parse_prior(record, "priors." + name);
    }
  }
  if (doc.contains("sampler")) {
    const json& s = doc["sampler"];
    check_keys(s, {"iterations", "burnin", "thinning", "chains", "seed", "threads", "adaptation_window"},
               "sampler");
    if (s.contains("iterations")) cfg.sampler.n_iterations = integer(s, "iterations", "sampler");
    if (s.contains("burnin")) cfg.sampler.n_burnin = integer(s, "burnin", "sampler");
    if (s.contains("thinning")) cfg.sampler.thinning = integer(s, "thinning", "sampler");
    if (s.contains("chains")) cfg.sampler.n_chains = integer(s, "chains", "sampler");
    if (s.contains("threads")) cfg.sampler.n_threads = integer(s, "threads", "sampler");
    if (s.contains("adaptation_window"))
      cfg.sampler.adaptation_window = integer(s, "adaptation_window", "sampler");
    if (s.contains("seed")) {
      if (!s["seed"].is_number_integer() || (!s["seed"].is_number_unsigned() && s["seed"].get<std::int64_t>() < 0))
        throw ValidationError("sampler.seed must be a nonnegative integer");
      cfg.sampler.rng_seed = s["seed"].get<std::uint64_t>();
    }
  }
  if (doc.contains("output")) {
    const json& o = doc["output"];
    check_keys(o, {"dir"}, "output");
    if (o.contains("dir")) cfg.out = resolve(base_dir, o["dir"].get<std::string>());
  }
  return cfg;
}

FitConfig load_fit_config(const fs::path& path) {
  try {
    return parse_fit_config(read_json(path), path.parent_path());
  } catch (const json::exception& e) {
    throw ValidationError("invalid config " + path.string() + ": " + e.what());
  }
}

}  // namespace netme::cli
