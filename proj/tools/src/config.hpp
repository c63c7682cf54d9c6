#pragma once

#include <filesystem>
#include <string>

#include "io.hpp"
#include "netme/inference.hpp"
#include "netme/selection.hpp"

namespace netme::cli {

// Contents of a fit configuration file. Sections: data, model, priors,
// sampler, output. Relative paths resolve against the file's directory.
struct FitConfig {
  fs::path bundle;
  ModelSpec spec;
  DevianceScope deviance = DevianceScope::outcome;
  SamplerConfig sampler;
  fs::path out;

  // Throws ValidationError listing the first problem found.
  void validate() const;
  // Model, priors and sampler settings; paths are left out so that manifests
  // do not depend on where the files live.
  json settings() const;
};

// Accepts {"family": "normal", "mean", "variance" | "precision"},
// {"family": "loggamma" | "gamma", "shape", "rate"} and
// {"family": "pc", "sigma0", "alpha"}.
PriorSpec parse_prior(const json& record, const std::string& context);
json prior_to_json(const PriorSpec& prior);

FitConfig parse_fit_config(const json& doc, const fs::path& base_dir);
FitConfig load_fit_config(const fs::path& path);

DevianceScope parse_deviance_scope(const std::string& text);
std::string to_string(DevianceScope scope);

}  // namespace netme::cli
