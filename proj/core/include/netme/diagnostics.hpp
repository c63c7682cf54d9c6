#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "netme/inference.hpp"

namespace netme {

struct ParameterDiagnostics {
  std::string name;
  double ess_bulk = 0.0;      // rank-normalised, split chains
  double ess_mean = 0.0;      // on the raw draws, used for the MCSE
  double mcse_mean = 0.0;
  std::optional<double> rhat;  // max of bulk and folded split R-hat; needs 2 chains
  bool degenerate = false;     // every draw identical
};

struct DiagnosticsReport {
  std::vector<ParameterDiagnostics> parameters;
  std::vector<std::string> warnings;
};

// Effective sample size of equal-length chains (multi-chain Geyer initial
// monotone sequence estimator). NaN when the draws have zero variance.
double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);

// Split R-hat of equal-length chains on their raw values, and its rank-normalised
// (bulk/folded) version. nullopt for constant draws or fewer than 2 chains.
std::optional<double> split_rhat(const std::vector<Eigen::VectorXd>& chains);
std::optional<double> rank_normalized_rhat(const std::vector<Eigen::VectorXd>& chains);

// Normal scores of the pooled ranks (average ranks for ties), returned in the
// original chain layout.
std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd>& chains);

// Bulk ESS: ESS of the rank-normalised split chains.
double ess_bulk(const std::vector<Eigen::VectorXd>& chains);

ParameterDiagnostics diagnose(const std::string& name, const std::vector<Eigen::VectorXd>& chains);

// One entry per scalar parameter. A single chain omits R-hat and adds a
// warning, as do R-hat above 1.01 and bulk ESS below 400.
DiagnosticsReport diagnostics(const PosteriorSamples& samples);

}  // namespace netme
