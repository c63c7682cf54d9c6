#include "netme/data.hpp"

#include <cmath>
#include <set>

#include "netme/error.hpp"

namespace netme {

namespace {

void check_columns(const Eigen::MatrixXd& m, const std::vector<ColumnScaling>& scaling, const char* what) {
  if (static_cast<std::size_t>(m.cols()) != scaling.size())
    throw ValidationError(std::string(what) + ": column metadata does not match column count");
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const ColumnScaling& s = scaling[static_cast<std::size_t>(c)];
    if (!m.col(c).allFinite()) throw ValidationError(std::string(what) + " column " + s.name + " is not finite");
    if (s.dummy) {
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        if (m(i, c) != 0.0 && m(i, c) != 1.0)
          throw ValidationError(std::string(what) + " dummy column " + s.name + " holds a non 0/1 value");
      continue;
    }
    if (m.rows() < 2) continue;
    const double mean = m.col(c).mean();
    const double sd = std::sqrt((m.col(c).array() - mean).square().sum() / static_cast<double>(m.rows() - 1));
    if (std::abs(mean) > 1e-8 || std::abs(sd - 1.0) > 1e-8)
      throw ValidationError(std::string(what) + " column " + s.name + " is not standardised");
  }
}

}  // namespace

void Dataset::validate(bool integer_counts) const {
  const Eigen::Index n = y.size();
  if (e.size() != n || w.size() != n || z.rows() != n || ztilde.rows() != n ||
      (!segment_ids.empty() && static_cast<Eigen::Index>(segment_ids.size()) != n))
    throw ValidationError("dataset vectors have inconsistent lengths");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(e(i) > 0.0) || !std::isfinite(e(i)))
      throw ValidationError("offset at index " + std::to_string(i) + " must be positive");
    if (!std::isfinite(y(i)) || !std::isfinite(w(i)))
      throw ValidationError("non-finite response or proxy at index " + std::to_string(i));
    if (integer_counts && (y(i) < 0.0 || y(i) != std::floor(y(i))))
      throw ValidationError("count at index " + std::to_string(i) + " is not a nonnegative integer");
  }
  check_columns(z, z_scaling, "regression covariate");
  check_columns(ztilde, ztilde_scaling, "exposure covariate");
}

Eigen::VectorXd standardize(const Eigen::VectorXd& raw, ColumnScaling& scaling) {
  const Eigen::Index n = raw.size();
  if (n < 2) throw ValidationError("cannot standardise column " + scaling.name + " with fewer than two values");
  const double mean = raw.mean();
  const double sd = std::sqrt((raw.array() - mean).square().sum() / static_cast<double>(n - 1));
  if (!(sd > 0.0) || !std::isfinite(sd)) throw ValidationError("column " + scaling.name + " is constant");
  scaling.mean = mean;
  scaling.sd = sd;
  scaling.dummy = false;
  Eigen::VectorXd out = (raw.array() - mean) / sd;
  // Recentre to remove the rounding left by the division.
  out.array() -= out.mean();
  return out;
}

Eigen::MatrixXd dummy_columns(const std::vector<std::string>& values, const std::string& reference,
                              const std::string& prefix, std::vector<ColumnScaling>& scaling) {
  std::set<std::string> levels(values.begin(), values.end());
  levels.erase(reference);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(values.size()),
                                              static_cast<Eigen::Index>(levels.size()));
  Eigen::Index c = 0;
  for (const std::string& level : levels) {
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i] == level) out(static_cast<Eigen::Index>(i), c) = 1.0;
    scaling.push_back({prefix + level, 0.0, 1.0, true});
    ++c;
  }
  return out;
}

}  // namespace netme
