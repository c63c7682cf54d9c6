#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace netme {

struct ColumnScaling {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
  bool dummy = false;  // 0/1 indicator, left unscaled
};

// Per-segment model inputs. Numeric columns of Z and Ztilde and the proxy w
// are standardised; `*_scaling` keeps the original location and scale.
struct Dataset {
  std::vector<std::string> segment_ids;
  Eigen::VectorXd y;  // counts for Poisson outcomes
  Eigen::VectorXd e;  // offsets
  Eigen::VectorXd w;  // proxy covariate
  ColumnScaling w_scaling{"Road traffic", 0.0, 1.0, false};
  Eigen::MatrixXd z;       // regression covariates
  std::vector<ColumnScaling> z_scaling;
  Eigen::MatrixXd ztilde;  // exposure-model covariates
  std::vector<ColumnScaling> ztilde_scaling;

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }

  // Throws ValidationError if dimensions disagree, offsets are not positive,
  // standardised columns drift from zero mean / unit sd by more than 1e-8,
  // dummy columns hold values other than 0 and 1, or (when
  // `integer_counts`) y holds negative or fractional values.
  void validate(bool integer_counts = true) const;
};

// Returns (raw - mean) / sd with the sample standard deviation. Throws
// ValidationError for constant columns.
Eigen::VectorXd standardize(const Eigen::VectorXd& raw, ColumnScaling& scaling);

// Indicator columns for every level except `reference`, in sorted level order.
Eigen::MatrixXd dummy_columns(const std::vector<std::string>& values, const std::string& reference,
                              const std::string& prefix, std::vector<ColumnScaling>& scaling);

}  // namespace netme
