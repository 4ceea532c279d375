#pragma once

// Diagnostics for reading an embedding: distortion per slice, total cost,
// curve stability, cluster quality, a k-means baseline and Procrustes fits.
//
// Stress sums over the full N x N matrix, so every pair is counted twice.

#include <cmds/core.hpp>
#include <cmds/penalty.hpp>

#include <algorithm>
#include <map>
#include <random>

namespace cmds {

namespace detail {

inline void check_shapes(const EmbeddingCurves& curves, const std::vector<Matrix>& targets) {
  if (curves.T() != targets.size())
    throw Error(ErrorCode::ShapeMismatch, "embedding has " + std::to_string(curves.T()) + " slices, distances have " +
                                              std::to_string(targets.size()));
  if (!targets.empty() && curves.N() != static_cast<std::size_t>(targets.front().rows()))
    throw Error(ErrorCode::ShapeMismatch, "embedding has " + std::to_string(curves.N()) + " items, distances have " +
                                              std::to_string(targets.front().rows()));
}

inline double slice_stress(const Matrix& X, const Matrix& target, const Matrix* weights) {
  const Eigen::Index n = X.rows();
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = (X.row(i) - X.row(j)).norm() - target(i, j);
      s += weights ? (*weights)(i, j) * r * r : r * r;
    }
  return s;
}

}  // namespace detail

/// Per-slice sum over all ordered pairs of (||x_i - x_j|| - d_ij)^2.
inline Vector stress_per_slice(const EmbeddingCurves& curves, const DistanceTensor& D) {
  detail::check_shapes(curves, D.slices);
  Vector out(static_cast<Eigen::Index>(curves.T()));
  for (std::size_t k = 0; k < curves.T(); ++k)
    out(static_cast<Eigen::Index>(k)) = detail::slice_stress(curves.slices[k], D.slices[k], nullptr);
  return out;
}

/// Weighted per-slice stress against the variant's effective targets.
inline Vector weighted_stress_per_slice(const EmbeddingCurves& curves, const DistanceTensor& D, const WeightTensor& W) {
  detail::check_shapes(curves, D.slices);
  if (W.T() != D.T() || W.N() != D.N()) throw Error(ErrorCode::ShapeMismatch, "weights do not match distances");
  const auto targets = effective_targets(D, W);
  Vector out(static_cast<Eigen::Index>(curves.T()));
  for (std::size_t k = 0; k < curves.T(); ++k)
    out(static_cast<Eigen::Index>(k)) = detail::slice_stress(curves.slices[k], targets[k], &W.weights[k]);
  return out;
}

inline Vector roughness_per_curve(const EmbeddingCurves& curves, const Matrix& M) {
  Vector out(static_cast<Eigen::Index>(curves.N()));
  for (std::size_t i = 0; i < curves.N(); ++i) out(static_cast<Eigen::Index>(i)) = roughness(curves.curve(i), M);
  return out;
}

/// Stress summed over slices plus lambda times the summed curve roughness.
/// Without weights this is the raw Kruskal-Shepard stress.
inline double total_cost(const EmbeddingCurves& curves, const DistanceTensor& D, const WeightTensor* W, double lambda,
                         const Matrix& M) {
  const Vector stress = W ? weighted_stress_per_slice(curves, D, *W) : stress_per_slice(curves, D);
  double cost = stress.sum();
  if (lambda != 0.0) cost += lambda * roughness_per_curve(curves, M).sum();
  return cost;
}

struct StabilityReport {
  // displacements[i] is a (T-1) x d matrix of x_i^{k+1} - x_i^k.
  std::vector<Matrix> displacements;
  Vector instability;  // path length per curve
  Vector roughness;    // per curve, for penalty colouring
};

inline StabilityReport stability_vectors(const EmbeddingCurves& curves) {
  if (curves.T() < 2) throw Error(ErrorCode::SingleSliceInput, "stability needs at least two slices");
  const Matrix M = roughness_for_grid(curves.grid).M;
  StabilityReport r;
  r.instability = Vector::Zero(static_cast<Eigen::Index>(curves.N()));
  r.roughness = roughness_per_curve(curves, M);
  for (std::size_t i = 0; i < curves.N(); ++i) {
    const Matrix c = curves.curve(i);
    Matrix disp = c.bottomRows(c.rows() - 1) - c.topRows(c.rows() - 1);
    r.instability(static_cast<Eigen::Index>(i)) = disp.rowwise().norm().sum();
    r.displacements.push_back(std::move(disp));
  }
  return r;
}

/// Ratio of between-cluster to within-cluster variance. Returns +inf when
/// every cluster is a single location.
inline double cluster_quality(const Matrix& points, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(points.rows()) != labels.size())
    throw Error(ErrorCode::ShapeMismatch, "one label per point required");
  std::map<int, std::vector<Eigen::Index>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<Eigen::Index>(i));
  if (members.size() < 2) throw Error(ErrorCode::InvalidArgument, "cluster quality needs at least two clusters");

  const Eigen::RowVectorXd grand = points.colwise().mean();
  double between = 0.0;
  double within = 0.0;
  for (const auto& [label, idx] : members) {
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(points.cols());
    for (auto i : idx) mu += points.row(i);
    mu /= static_cast<double>(idx.size());
    between += static_cast<double>(idx.size()) * (mu - grand).squaredNorm();
    for (auto i : idx) within += (points.row(i) - mu).squaredNorm();
  }
  if (within == 0.0) return std::numeric_limits<double>::infinity();
  return between / within;
}

namespace detail {

inline double assign_labels(const Matrix& points, const Matrix& centers, std::vector<int>& labels) {
  double wcss = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (points.row(i) - centers.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    wcss += best_d;
  }
  return wcss;
}

inline Matrix kmeanspp_seed(const Matrix& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  Matrix centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = points.row(first(rng));
  Vector d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    Eigen::Index pick = 0;
    const double total = d2.sum();
    if (total > 0.0) {
      std::discrete_distribution<Eigen::Index> dist(d2.data(), d2.data() + n);
      pick = dist(rng);
    } else {
      pick = first(rng);
    }
    centers.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace detail

struct KMeansResult {
  std::vector<int> labels;
  Matrix centers;
  double within_ss = 0.0;
};

/// Lloyd's algorithm from k-means++ seeds, best of `restarts` by within-cluster
/// sum of squares. Deterministic in `seed`.
inline KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts = 20, int max_iter = 300) {
  const Eigen::Index n = points.rows();
  if (k < 1 || k > n) throw Error(ErrorCode::InvalidArgument, "k must lie in [1, N]");
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.within_ss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Matrix centers = detail::kmeanspp_seed(points, k, rng);
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    std::vector<int> previous;
    double wcss = 0.0;
    for (int it = 0; it < max_iter; ++it) {
      wcss = detail::assign_labels(points, centers, labels);
      if (labels == previous) break;
      previous = labels;
      Matrix sums = Matrix::Zero(k, points.cols());
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
          centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        } else {
          // Empty cluster: move it to the point farthest from its center.
          Eigen::Index far = 0;
          double far_d = -1.0;
          for (Eigen::Index i = 0; i < n; ++i) {
            const double d = (points.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
            if (d > far_d) {
              far_d = d;
              far = i;
            }
          }
          centers.row(c) = points.row(far);
        }
      }
    }
    if (wcss < best.within_ss) {
      best.within_ss = wcss;
      best.labels = labels;
      best.centers = centers;
    }
  }
  return best;
}

inline std::vector<int> kmeans_baseline(const Matrix& points, int k, std::uint64_t seed) {
  return kmeans(points, k, seed).labels;
}

struct ProcrustesResult {
  Matrix aligned;      // B after the optimal rigid motion
  Matrix rotation;     // d x d orthogonal, applied as (B - mean_B) * rotation + mean_A
  double residual = 0; // ||A - aligned||_F
};

/// Orthogonal Procrustes with translation: rotation or reflection of B that
/// best matches A in Frobenius norm.
inline ProcrustesResult procrustes_align(const Matrix& A, const Matrix& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw Error(ErrorCode::ShapeMismatch, "Procrustes needs equal shapes");
  const Eigen::RowVectorXd ma = A.colwise().mean();
  const Eigen::RowVectorXd mb = B.colwise().mean();
  const Matrix Ac = A.rowwise() - ma;
  const Matrix Bc = B.rowwise() - mb;
  Eigen::JacobiSVD<Matrix> svd(Bc.transpose() * Ac, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ProcrustesResult r;
  r.rotation = svd.matrixU() * svd.matrixV().transpose();
  r.aligned = (Bc * r.rotation).rowwise() + ma;
  r.residual = (A - r.aligned).norm();
  return r;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::ShapeMismatch, "spearman needs two equal series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t s = 0; s < idx.size();) {
      std::size_t e = s;
      while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[s]]) ++e;
      const double avg = 0.5 * static_cast<double>(s + e) + 1.0;
      for (std::size_t q = s; q <= e; ++q) r[idx[q]] = avg;
      s = e + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const Eigen::Map<const Vector> a(rx.data(), static_cast<Eigen::Index>(rx.size()));
  const Eigen::Map<const Vector> b(ry.data(), static_cast<Eigen::Index>(ry.size()));
  const Vector ac = a.array() - a.mean();
  const Vector bc = b.array() - b.mean();
  const double denom = ac.norm() * bc.norm();
  return denom == 0.0 ? 0.0 : ac.dot(bc) / denom;
}

}  // namespace cmds
