#include "netme/gmrf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "netme/error.hpp"

namespace netme {

SparseSymmetricMatrix::SparseSymmetricMatrix(std::size_t dimension,
                                             std::span<const MatrixEntry> entries) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(entries.size());
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const MatrixEntry& e : entries) {
    const std::size_t r = std::min(e.row, e.col);
    const std::size_t c = std::max(e.row, e.col);
    if (c >= dimension) throw ValidationError("matrix entry index out of range");
    if (!std::isfinite(e.value)) throw ValidationError("matrix entry is not finite");
    if (!seen.emplace(r, c).second)
      throw ValidationError("duplicate matrix entry (" + std::to_string(r) + ", " + std::to_string(c) + ")");
    triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), e.value);
  }
  upper_.resize(static_cast<Eigen::Index>(dimension), static_cast<Eigen::Index>(dimension));
  upper_.setFromTriplets(triplets.begin(), triplets.end());
  upper_.makeCompressed();
}

SparseSymmetricMatrix::SparseSymmetricMatrix(Eigen::SparseMatrix<double> upper)
    : upper_(std::move(upper)) {
  if (upper_.rows() != upper_.cols()) throw ValidationError("matrix must be square");
  upper_ = upper_.triangularView<Eigen::Upper>();
  upper_.makeCompressed();
}

Eigen::VectorXd SparseSymmetricMatrix::multiply(const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != dimension())
    throw ValidationError("dimension mismatch in matrix-vector product");
  return upper_.selfadjointView<Eigen::Upper>() * v;
}

Eigen::VectorXd SparseSymmetricMatrix::diagonal() const { return upper_.diagonal(); }

Eigen::SparseMatrix<double> SparseSymmetricMatrix::full() const {
  Eigen::SparseMatrix<double> out = upper_.selfadjointView<Eigen::Upper>();
  return out;
}

Eigen::MatrixXd SparseSymmetricMatrix::dense() const { return Eigen::MatrixXd(full()); }

std::vector<MatrixEntry> SparseSymmetricMatrix::entries() const {
  std::vector<MatrixEntry> out;
  out.reserve(nnz());
  for (Eigen::Index c = 0; c < upper_.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(upper_, c); it; ++it)
      out.push_back({static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col()), it.value()});
  return out;
}

SparseSymmetricMatrix SparseSymmetricMatrix::plus_diagonal(const Eigen::VectorXd& d) const {
  if (static_cast<std::size_t>(d.size()) != dimension()) throw ValidationError("diagonal size mismatch");
  Eigen::SparseMatrix<double> diag(upper_.rows(), upper_.cols());
  diag.reserve(Eigen::VectorXi::Constant(upper_.cols(), 1));
  for (Eigen::Index i = 0; i < d.size(); ++i) diag.insert(i, i) = d(i);
  return SparseSymmetricMatrix(Eigen::SparseMatrix<double>(upper_ + diag));
}

SparseSymmetricMatrix SparseSymmetricMatrix::scaled(double factor) const {
  return SparseSymmetricMatrix(Eigen::SparseMatrix<double>(factor * upper_));
}

double quad_form(const SparseSymmetricMatrix& q, const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != q.dimension())
    throw ValidationError("quad_form: vector has length " + std::to_string(v.size()) +
                          ", matrix dimension is " + std::to_string(q.dimension()));
  const auto& u = q.upper();
  double total = 0.0;
  for (Eigen::Index c = 0; c < u.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(u, c); it; ++it) {
      const double term = it.value() * v(it.row()) * v(it.col());
      total += it.row() == it.col() ? term : 2.0 * term;
    }
  return total;
}

IcarStructure::IcarStructure(SparseSymmetricMatrix k, std::vector<int> component_label,
                             int n_components, std::vector<std::pair<std::size_t, std::size_t>> edges)
    : k_(std::move(k)),
      component_label_(std::move(component_label)),
      n_components_(n_components),
      edges_(std::move(edges)) {
  members_.assign(static_cast<std::size_t>(n_components_), {});
  for (std::size_t i = 0; i < component_label_.size(); ++i)
    members_[static_cast<std::size_t>(component_label_[i])].push_back(i);
}

double IcarStructure::quad_form(const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != dimension())
    throw ValidationError("quad_form: vector length does not match structure dimension");
  double total = 0.0;
  for (const auto& [i, j] : edges_) {
    const double d = v(static_cast<Eigen::Index>(i)) - v(static_cast<Eigen::Index>(j));
    total += d * d;
  }
  return total;
}

double IcarStructure::logdet_plus() const {
  std::call_once(logdet_->once, [this] {
    double total = 0.0;
    const auto& upper = k_.upper();
    for (const auto& members : members_) {
      const std::size_t nc = members.size();
      total += std::log(static_cast<double>(nc));
      if (nc < 2) continue;
      // Drop the last member: the reduced Laplacian of a connected graph is SPD.
      std::vector<Eigen::Index> local(dimension(), -1);
      for (std::size_t a = 0; a + 1 < nc; ++a) local[members[a]] = static_cast<Eigen::Index>(a);
      std::vector<Eigen::Triplet<double>> triplets;
      for (std::size_t a = 0; a + 1 < nc; ++a) {
        const auto col = static_cast<Eigen::Index>(members[a]);
        for (Eigen::SparseMatrix<double>::InnerIterator it(upper, col); it; ++it) {
          const Eigen::Index r = local[static_cast<std::size_t>(it.row())];
          if (r < 0) continue;
          const Eigen::Index c = local[static_cast<std::size_t>(it.col())];
          triplets.emplace_back(std::min(r, c), std::max(r, c), it.value());
        }
      }
      const auto m = static_cast<Eigen::Index>(nc - 1);
      Eigen::SparseMatrix<double> reduced(m, m);
      reduced.setFromTriplets(triplets.begin(), triplets.end());
      SpdFactorization f;
      f.factorize(reduced);
      total += f.logdet();
    }
    logdet_->value = total;
  });
  return logdet_->value;
}

Eigen::VectorXd IcarStructure::component_sums(const Eigen::VectorXd& v) const {
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(n_components_);
  for (std::size_t i = 0; i < component_label_.size(); ++i)
    sums(component_label_[i]) += v(static_cast<Eigen::Index>(i));
  return sums;
}

void IcarStructure::center(Eigen::VectorXd& v) const {
  for (const auto& members : members_) {
    double mean = 0.0;
    for (std::size_t i : members) mean += v(static_cast<Eigen::Index>(i));
    mean /= static_cast<double>(members.size());
    for (std::size_t i : members) v(static_cast<Eigen::Index>(i)) -= mean;
  }
}

double IcarStructure::max_abs_component_sum(const Eigen::VectorXd& v) const {
  return n_components_ == 0 ? 0.0 : component_sums(v).cwiseAbs().maxCoeff();
}

IcarStructure icar_structure(std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  if (n < 2) throw ValidationError("ICAR structure needs at least two sites");
  std::vector<std::vector<std::size_t>> adjacency(n);
  std::vector<std::pair<std::size_t, std::size_t>> clean;
  for (auto [i, j] : edges) {
    if (i == j || i >= n || j >= n) throw ValidationError("invalid ICAR edge");
    if (i > j) std::swap(i, j);
    clean.emplace_back(i, j);
  }
  std::sort(clean.begin(), clean.end());
  clean.erase(std::unique(clean.begin(), clean.end()), clean.end());
  for (const auto& [i, j] : clean) {
    adjacency[i].push_back(j);
    adjacency[j].push_back(i);
  }
  std::vector<MatrixEntry> entries;
  entries.reserve(n + clean.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (adjacency[i].empty())
      throw ValidationError("site " + std::to_string(i) +
                            " has no neighbours; prune isolated segments before building the ICAR prior");
    entries.push_back({i, i, static_cast<double>(adjacency[i].size())});
  }
  for (const auto& [i, j] : clean) entries.push_back({i, j, -1.0});
  std::vector<int> labels;
  const int k = label_components(adjacency, labels);
  return IcarStructure(SparseSymmetricMatrix(n, entries), std::move(labels), k, std::move(clean));
}

IcarStructure icar_structure(const SegmentNetwork& network) {
  const auto edges = network.edges();
  for (std::size_t i = 0; i < network.size(); ++i)
    if (network.neighbors(i).empty())
      throw ValidationError("segment " + network.segment(i).id +
                            " has no neighbours; prune isolated segments before building the ICAR prior");
  return icar_structure(network.size(), edges);
}

double icar_logdensity(const Eigen::VectorXd& theta, double tau, const IcarStructure& structure,
                       const IcarDensityOptions& options) {
  if (!(tau > 0.0)) throw ValidationError("ICAR precision must be positive");
  if (static_cast<std::size_t>(theta.size()) != structure.dimension())
    throw ValidationError("ICAR field length does not match structure dimension");
  const Eigen::VectorXd sums = structure.component_sums(theta);
  for (Eigen::Index c = 0; c < sums.size(); ++c)
    if (std::abs(sums(c)) > options.constraint_tolerance)
      throw ValidationError("ICAR field violates the sum-to-zero constraint on component " +
                            std::to_string(c));
  const double r = static_cast<double>(structure.rank());
  return 0.5 * r * std::log(tau) + 0.5 * structure.logdet_plus() - 0.5 * tau * structure.quad_form(theta) -
         0.5 * r * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd standard_normal_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return z;
}

Eigen::VectorXd sample_constrained(const IcarStructure& structure, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw ValidationError("ICAR precision must be positive");
  // Adding tau at one site per component makes the precision SPD. Its inverse
  // restricted to the constraint subspace equals (tau K)^+, so centring a draw
  // from the augmented Gaussian yields the constrained ICAR law exactly.
  Eigen::VectorXd anchor = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(structure.dimension()));
  for (const auto& members : structure.components()) anchor(static_cast<Eigen::Index>(members.front())) = tau;
  const SparseSymmetricMatrix q = structure.k().scaled(tau).plus_diagonal(anchor);
  SpdFactorization f(q);
  Eigen::VectorXd x = f.sample(standard_normal_vector(structure.dimension(), rng));
  structure.center(x);
  return x;
}

Eigen::VectorXd sample_constrained(const IcarStructure& structure, double tau, std::uint64_t seed) {
  Rng rng(seed);
  return sample_constrained(structure, tau, rng);
}

void SpdFactorization::factorize(const SparseSymmetricMatrix& q) { factorize(q.upper()); }

void SpdFactorization::factorize(const Eigen::SparseMatrix<double>& upper_in) {
  Eigen::SparseMatrix<double> upper = upper_in;
  upper.makeCompressed();
  const std::vector<int> outer(upper.outerIndexPtr(), upper.outerIndexPtr() + upper.outerSize() + 1);
  const std::vector<int> inner(upper.innerIndexPtr(), upper.innerIndexPtr() + upper.nonZeros());
  if (!analyzed_ || outer != pattern_outer_ || inner != pattern_inner_) {
    ldlt_.analyzePattern(upper);
    analyzed_ = true;
    n_ = static_cast<std::size_t>(upper.rows());
    pattern_outer_ = outer;
    pattern_inner_ = inner;
  }
  ldlt_.factorize(upper);
  const Eigen::VectorXd d = ldlt_.vectorD();
  const auto& pinv = ldlt_.permutationPinv().indices();
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    if (!(d(k) > 0.0) || !std::isfinite(d(k))) {
      throw NumericalError("matrix is not positive definite: non-positive pivot at index " +
                           std::to_string(pinv(k)));
    }
  }
  if (ldlt_.info() != Eigen::Success) throw NumericalError("sparse factorisation failed");
}

Eigen::VectorXd SpdFactorization::solve(const Eigen::VectorXd& b) const {
  if (static_cast<std::size_t>(b.size()) != n_) throw ValidationError("right-hand side length mismatch");
  return ldlt_.solve(b);
}

Eigen::MatrixXd SpdFactorization::solve(const Eigen::MatrixXd& b) const {
  if (static_cast<std::size_t>(b.rows()) != n_) throw ValidationError("right-hand side length mismatch");
  return ldlt_.solve(b);
}

Eigen::VectorXd SpdFactorization::sample(const Eigen::VectorXd& z) const {
  // P Q P' = L D L'  =>  x = P' L'^-1 D^-1/2 z has covariance Q^-1.
  Eigen::VectorXd y = z.cwiseQuotient(ldlt_.vectorD().cwiseSqrt());
  y = ldlt_.matrixU().solve(y);
  return ldlt_.permutationPinv() * y;
}

double SpdFactorization::logdet() const { return ldlt_.vectorD().array().log().sum(); }

Eigen::VectorXd solve_spd(const SparseSymmetricMatrix& q, const Eigen::VectorXd& b,
                          const SolveOptions& options) {
  if (static_cast<std::size_t>(b.size()) != q.dimension()) throw ValidationError("solve_spd: dimension mismatch");
  if (options.jitter != 0.0) {
    const SparseSymmetricMatrix jittered =
        q.plus_diagonal(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(q.dimension()), options.jitter));
    return SpdFactorization(jittered).solve(b);
  }
  return SpdFactorization(q).solve(b);
}

ConstrainedGaussian::ConstrainedGaussian(const std::vector<std::vector<std::size_t>>& components)
    : components_(components) {}

void ConstrainedGaussian::set_precision(const Eigen::SparseMatrix<double>& upper) {
  upper_ = upper;
  factor_.factorize(upper_);
  const auto n = static_cast<Eigen::Index>(factor_.dimension());
  const auto k = static_cast<Eigen::Index>(components_.size());
  Eigen::MatrixXd ct = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index c = 0; c < k; ++c)
    for (std::size_t i : components_[static_cast<std::size_t>(c)]) ct(static_cast<Eigen::Index>(i), c) = 1.0;
  if (k == 0) {
    qinv_ct_.resize(n, 0);
    return;
  }
  qinv_ct_ = factor_.solve(ct);
  schur_.compute(ct.transpose() * qinv_ct_);
}

Eigen::VectorXd ConstrainedGaussian::krige(const Eigen::VectorXd& x) const {
  if (qinv_ct_.cols() == 0) return x;
  Eigen::VectorXd cx(qinv_ct_.cols());
  for (Eigen::Index c = 0; c < cx.size(); ++c) {
    double s = 0.0;
    for (std::size_t i : components_[static_cast<std::size_t>(c)]) s += x(static_cast<Eigen::Index>(i));
    cx(c) = s;
  }
  return x - qinv_ct_ * schur_.solve(cx);
}

Eigen::VectorXd ConstrainedGaussian::mean(const Eigen::VectorXd& b) const { return krige(factor_.solve(b)); }

Eigen::VectorXd ConstrainedGaussian::sample(const Eigen::VectorXd& mean, Rng& rng, double scale) const {
  const Eigen::VectorXd z = standard_normal_vector(factor_.dimension(), rng);
  return mean + scale * krige(factor_.sample(z));
}

double ConstrainedGaussian::log_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                       double scale) const {
  const Eigen::VectorXd d = x - mean;
  const double q = d.dot(upper_.selfadjointView<Eigen::Upper>() * d);
  return -0.5 * q / (scale * scale);
}

double ConstrainedGaussian::log_normalizer() const {
  double value = factor_.logdet();
  if (qinv_ct_.cols() > 0) value += 2.0 * schur_.matrixLLT().diagonal().array().log().sum();
  return value;
}

std::string to_matrix_market(const SparseSymmetricMatrix& m) {
  std::ostringstream out;
  out.precision(17);
  const auto entries = m.entries();
  out << "%%MatrixMarket matrix coordinate real symmetric\n";
  out << m.dimension() << ' ' << m.dimension() << ' ' << entries.size() << '\n';
  // MatrixMarket symmetric storage is lower-triangular, 1-based.
  for (const auto& e : entries) out << e.col + 1 << ' ' << e.row + 1 << ' ' << e.value << '\n';
  return out.str();
}

}  // namespace netme
