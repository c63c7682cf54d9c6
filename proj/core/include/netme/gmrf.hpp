#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "netme/lattice.hpp"

namespace netme {

struct MatrixEntry {
  std::size_t row;
  std::size_t col;
  double value;
};

// Symmetric matrix stored as its upper triangle (row <= col) in compressed
// column form.
class SparseSymmetricMatrix {
 public:
  SparseSymmetricMatrix() = default;
  // Entries with row > col are mirrored into the upper triangle. Throws
  // ValidationError on duplicates, out-of-range indices or non-finite values.
  SparseSymmetricMatrix(std::size_t dimension, std::span<const MatrixEntry> entries);
  explicit SparseSymmetricMatrix(Eigen::SparseMatrix<double> upper);

  std::size_t dimension() const { return static_cast<std::size_t>(upper_.rows()); }
  std::size_t nnz() const { return static_cast<std::size_t>(upper_.nonZeros()); }
  const Eigen::SparseMatrix<double>& upper() const { return upper_; }

  Eigen::VectorXd multiply(const Eigen::VectorXd& v) const;
  Eigen::VectorXd diagonal() const;
  Eigen::SparseMatrix<double> full() const;
  Eigen::MatrixXd dense() const;
  std::vector<MatrixEntry> entries() const;

  // this + diag(d)
  SparseSymmetricMatrix plus_diagonal(const Eigen::VectorXd& d) const;
  SparseSymmetricMatrix scaled(double factor) const;

 private:
  Eigen::SparseMatrix<double> upper_;
};

// v' Q v. Throws ValidationError on dimension mismatch.
double quad_form(const SparseSymmetricMatrix& q, const Eigen::VectorXd& v);

// ICAR structure K = D - W of a segment network with per-component metadata.
class IcarStructure {
 public:
  IcarStructure(SparseSymmetricMatrix k, std::vector<int> component_label, int n_components,
                std::vector<std::pair<std::size_t, std::size_t>> edges);

  std::size_t dimension() const { return k_.dimension(); }
  const SparseSymmetricMatrix& k() const { return k_; }
  int n_components() const { return n_components_; }
  const std::vector<int>& component_label() const { return component_label_; }
  const std::vector<std::vector<std::size_t>>& components() const { return members_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  std::size_t rank() const { return dimension() - static_cast<std::size_t>(n_components_); }

  // Sum over edges of (v_i - v_j)^2, which equals v'Kv.
  double quad_form(const Eigen::VectorXd& v) const;

  // Sum of logs of the positive eigenvalues of K, evaluated once on first
  // use via the matrix-tree identity pdet(K_c) = n_c * det(K_c reduced).
  double logdet_plus() const;

  Eigen::VectorXd component_sums(const Eigen::VectorXd& v) const;
  // Subtracts each component's mean in place.
  void center(Eigen::VectorXd& v) const;
  // Largest absolute per-component sum.
  double max_abs_component_sum(const Eigen::VectorXd& v) const;

 private:
  SparseSymmetricMatrix k_;
  std::vector<int> component_label_;
  int n_components_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;

  struct LazyLogdet {
    std::once_flag once;
    double value = 0.0;
  };
  std::shared_ptr<LazyLogdet> logdet_ = std::make_shared<LazyLogdet>();
};

// Throws ValidationError when the network has fewer than two segments or an
// isolated segment (whose ICAR marginal is improper; prune it first).
IcarStructure icar_structure(const SegmentNetwork& network);
IcarStructure icar_structure(std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> edges);

struct IcarDensityOptions {
  double constraint_tolerance = 1e-8;
};

// ICAR log density under the positive-eigenvalue convention:
//   (r/2) log tau + logdet_plus/2 - tau/2 theta'K theta - (r/2) log(2 pi),
// with r = n - k. Throws ValidationError if theta violates a component
// sum-to-zero constraint or tau <= 0.
double icar_logdensity(const Eigen::VectorXd& theta, double tau, const IcarStructure& structure,
                       const IcarDensityOptions& options = {});

using Rng = std::mt19937_64;

Eigen::VectorXd standard_normal_vector(std::size_t n, Rng& rng);

// Draw from the ICAR law with precision tau*K restricted to the
// sum-to-zero subspace of every component.
Eigen::VectorXd sample_constrained(const IcarStructure& structure, double tau, Rng& rng);
Eigen::VectorXd sample_constrained(const IcarStructure& structure, double tau, std::uint64_t seed);

// Sparse LDL' factorisation of a symmetric positive definite matrix. The
// symbolic analysis is kept so matrices with the same pattern refactorise
// cheaply.
class SpdFactorization {
 public:
  SpdFactorization() = default;
  explicit SpdFactorization(const SparseSymmetricMatrix& q) { factorize(q); }

  // Throws NumericalError naming the first non-positive pivot (in original
  // index order) when q is not positive definite.
  void factorize(const SparseSymmetricMatrix& q);
  void factorize(const Eigen::SparseMatrix<double>& upper);

  std::size_t dimension() const { return n_; }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  // Given z ~ N(0, I), returns a draw from N(0, Q^-1).
  Eigen::VectorXd sample(const Eigen::VectorXd& z) const;
  double logdet() const;

 private:
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Upper> ldlt_;
  bool analyzed_ = false;
  std::size_t n_ = 0;
  std::vector<int> pattern_outer_;
  std::vector<int> pattern_inner_;
};

struct SolveOptions {
  double jitter = 0.0;  // added to the diagonal before factorising
};

Eigen::VectorXd solve_spd(const SparseSymmetricMatrix& q, const Eigen::VectorXd& b,
                          const SolveOptions& options = {});

// Gaussian with precision Q and linear term b (density ∝ exp(-x'Qx/2 + b'x))
// conditioned on per-component sum-to-zero. Used for MAP steps and for the
// blocked field updates of the sampler.
class ConstrainedGaussian {
 public:
  // `components` lists the index sets whose sums are constrained to zero.
  ConstrainedGaussian(const std::vector<std::vector<std::size_t>>& components);

  void set_precision(const Eigen::SparseMatrix<double>& upper);
  // Constrained mean for the linear term b.
  Eigen::VectorXd mean(const Eigen::VectorXd& b) const;
  // mean + draw from the constrained zero-mean law, scaled by `scale`.
  Eigen::VectorXd sample(const Eigen::VectorXd& mean, Rng& rng, double scale = 1.0) const;
  // Log density on the constraint subspace up to a constant shared by all
  // points: -(x-m)'Q(x-m) / (2 scale^2).
  double log_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, double scale = 1.0) const;

  // log det Q + log det(C Q^-1 C'). Together with log_kernel this gives the
  // log density on the constraint subspace up to a constant that depends on
  // the components only: (log_normalizer + 2 log_kernel) / 2.
  double log_normalizer() const;

  const SpdFactorization& factorization() const { return factor_; }

 private:
  Eigen::VectorXd krige(const Eigen::VectorXd& x) const;

  std::vector<std::vector<std::size_t>> components_;
  Eigen::SparseMatrix<double> upper_;
  SpdFactorization factor_;
  Eigen::MatrixXd qinv_ct_;           // Q^-1 C'
  Eigen::LLT<Eigen::MatrixXd> schur_;  // C Q^-1 C'
};

// MatrixMarket coordinate export of the upper triangle (symmetric header).
std::string to_matrix_market(const SparseSymmetricMatrix& m);

}  // namespace netme
