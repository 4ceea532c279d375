#pragma once

// Starting configurations for the solver.

#include <cmds/core.hpp>
#include <cmds/metrics.hpp>

#include <optional>
#include <random>

namespace cmds {

/// Torgerson scaling: top-d eigenpairs of -1/2 J D^2 J, negative
/// eigenvalues clamped to zero.
inline Matrix classical_scaling(const Matrix& D, std::size_t dim) {
  const Eigen::Index n = D.rows();
  if (D.cols() != n) throw Error(ErrorCode::ShapeMismatch, "distance matrix must be square");
  if (dim < 1 || static_cast<Eigen::Index>(dim) > std::max<Eigen::Index>(n - 1, 1))
    throw Error(ErrorCode::InvalidArgument,
                "classical scaling needs 1 <= d <= N-1 (d=" + std::to_string(dim) + ", N=" + std::to_string(n) + ")");
  const Matrix J = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  const Matrix B = -0.5 * J * D.array().square().matrix() * J;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(B);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigendecomposition did not converge");
  // Eigenvalues come back ascending.
  const auto d = static_cast<Eigen::Index>(dim);
  Matrix X(n, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    const Eigen::Index col = n - 1 - a;
    X.col(a) = eig.eigenvectors().col(col) * std::sqrt(std::max(eig.eigenvalues()(col), 0.0));
  }
  return X;
}

/// Classical scaling per slice, each slice rigidly aligned onto the previous one.
inline EmbeddingCurves init_per_slice(const DistanceTensor& D, std::size_t dim) {
  EmbeddingCurves out(D.grid, D.N(), dim);
  for (std::size_t k = 0; k < D.T(); ++k) {
    Matrix X = classical_scaling(D.slices[k], dim);
    if (k > 0) X = procrustes_align(out.slices[k - 1], X).aligned;
    out.slices[k] = std::move(X);
  }
  return out;
}

/// sqrt of the slice-mean of squared distances.
inline Matrix aggregate_distances(const DistanceTensor& D) {
  Matrix acc = Matrix::Zero(static_cast<Eigen::Index>(D.N()), static_cast<Eigen::Index>(D.N()));
  for (const auto& s : D.slices) acc += s.array().square().matrix();
  acc /= static_cast<double>(D.T());
  return acc.array().sqrt().matrix();
}

/// One classical scaling of the aggregated distances, replicated over slices.
inline EmbeddingCurves init_aggregated(const DistanceTensor& D, std::size_t dim) {
  const Matrix X = classical_scaling(aggregate_distances(D), dim);
  EmbeddingCurves out(D.grid, D.N(), dim);
  for (auto& s : out.slices) s = X;
  return out;
}

inline double default_random_scale(const DistanceTensor& D, std::size_t dim) {
  const auto n = static_cast<double>(D.N());
  if (D.N() < 2) return 0.0;
  const double mean = D.slices.front().sum() / (n * (n - 1.0));
  return mean / std::sqrt(2.0 * static_cast<double>(dim));
}

/// i.i.d. normal(0, scale^2) coordinates.
inline EmbeddingCurves init_random(const HyperparameterGrid& grid, std::size_t n, std::size_t dim, std::uint64_t seed,
                                   double scale) {
  EmbeddingCurves out(grid, n, dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& s : out.slices)
    for (Eigen::Index i = 0; i < s.rows(); ++i)
      for (Eigen::Index a = 0; a < s.cols(); ++a) s(i, a) = scale * normal(rng);
  return out;
}

inline EmbeddingCurves init_random(const DistanceTensor& D, std::size_t dim, std::uint64_t seed,
                                   std::optional<double> scale = std::nullopt) {
  return init_random(D.grid, D.N(), dim, seed, scale.value_or(default_random_scale(D, dim)));
}

inline EmbeddingCurves initialize(const DistanceTensor& D, std::size_t dim, InitStrategy strategy,
                                  std::uint64_t seed) {
  switch (strategy) {
    case InitStrategy::per_slice: return init_per_slice(D, dim);
    case InitStrategy::aggregated: return init_aggregated(D, dim);
    case InitStrategy::random: return init_random(D, dim, seed);
  }
  return init_aggregated(D, dim);
}

}  // namespace cmds
