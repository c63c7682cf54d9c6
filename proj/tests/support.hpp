#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <random>
#include <utility>
#include <vector>

#include "netme/gmrf.hpp"
#include "netme/lattice.hpp"

namespace netme::oracle {

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

// Erdos-Renyi graph on n vertices, each vertex touching at least one edge.
inline Edges random_graph(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  Edges edges;
  std::vector<int> degree(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin(rng)) {
        edges.emplace_back(i, j);
        ++degree[i];
        ++degree[j];
      }
  for (std::size_t i = 0; i < n; ++i)
    if (degree[i] == 0) {
      const std::size_t j = i + 1 < n ? i + 1 : i - 1;
      edges.emplace_back(std::min(i, j), std::max(i, j));
      ++degree[i];
      ++degree[j];
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

inline Eigen::MatrixXd dense_laplacian(std::size_t n, const Edges& edges) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (auto [i, j] : edges) {
    const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
    k(a, a) += 1;
    k(b, b) += 1;
    k(a, b) -= 1;
    k(b, a) -= 1;
  }
  return k;
}

// Union-find component count.
inline int count_components(std::size_t n, const Edges& edges) {
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  int k = static_cast<int>(n);
  for (auto [i, j] : edges) {
    const auto a = find(i), b = find(j);
    if (a != b) {
      parent[a] = b;
      --k;
    }
  }
  return k;
}

// Moore-Penrose inverse from the symmetric eigendecomposition.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a, double tol = 1e-9) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  Eigen::VectorXd inv = eig.eigenvalues();
  for (Eigen::Index i = 0; i < inv.size(); ++i) inv(i) = std::abs(inv(i)) > tol ? 1.0 / inv(i) : 0.0;
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace netme::oracle
