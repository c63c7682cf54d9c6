#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "netme/inference.hpp"

namespace netme {

// Which likelihood rows enter DIC and WAIC. `outcome` is the count model
// alone; `all_blocks` adds the exposure and error rows of the augmented
// system.
enum class DevianceScope { outcome, all_blocks };

struct DicResult {
  double dic = 0.0;
  double p_d = 0.0;
  double dbar = 0.0;   // mean deviance over draws
  double d_hat = 0.0;  // deviance at the posterior-mean state
};

// D(s) = -2 loglik(s); p_D = Dbar - D(mean state); DIC = Dbar + p_D. Throws
// NumericalError naming the draw whose deviance is not finite.
DicResult dic(const PosteriorSamples& samples, const Dataset& data, const ModelSpec& spec,
              DevianceScope scope = DevianceScope::outcome);

struct WaicResult {
  double waic = 0.0;
  double p_waic = 0.0;
  double lppd = 0.0;
};

// Draws x observations matrix of log p(y_i | draw), chains concatenated. With
// `all_blocks` and a measurement-error variant the exposure rows and error
// rows follow as further columns (3n in total).
Eigen::MatrixXd pointwise_loglik_draws(const PosteriorSamples& samples, const Dataset& data, const ModelSpec& spec,
                                       DevianceScope scope = DevianceScope::outcome);

// WAIC from a pointwise log-likelihood matrix (draws x observations).
WaicResult waic(const Eigen::MatrixXd& loglik);
WaicResult waic(const PosteriorSamples& samples, const Dataset& data, const ModelSpec& spec,
                DevianceScope scope = DevianceScope::outcome);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q05 = 0.0;
  double q95 = 0.0;
};

// Mean, sample sd and the 5% / 95% quantiles (linear interpolation).
ParameterSummary summarize_draws(const std::string& name, const Eigen::VectorXd& draws);
std::vector<ParameterSummary> summarize(const PosteriorSamples& samples);

// Posterior summaries of lambda_i = exp(eta_i), one per segment.
std::vector<ParameterSummary> lambda_summary(const PosteriorSamples& samples, const Dataset& data,
                                             const ModelSpec& spec);

// exp(beta_std * delta_original / covariate_sd): rate ratio for an increase of
// delta_original in a covariate standardised by covariate_sd.
double rate_ratio(double beta_std, double delta_original, double covariate_sd);

struct CountClass {
  std::string label;  // "0" ... "10", "11+"
  double observed = 0.0;
  double predicted = 0.0;  // expected number of segments under the posterior predictive
};

// Observed and posterior-predictive frequencies of segment counts.
std::vector<CountClass> predicted_vs_observed(const PosteriorSamples& samples, const Dataset& data,
                                              const ModelSpec& spec);

struct ComparisonRow {
  std::string model;
  double dic = 0.0;
  double p_d = 0.0;
  double waic = 0.0;
  double p_waic = 0.0;
  bool best_dic = false;
  bool best_waic = false;
};

// Flags the minimiser of each criterion (first one on ties).
void flag_best(std::vector<ComparisonRow>& rows);

}  // namespace netme
