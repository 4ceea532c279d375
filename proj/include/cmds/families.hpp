#pragma once

// Distance tensors built from hyperparameter families: feature-weight
// mixtures, collapsing clusters, hierarchical-clustering levels and graph
// thresholding rules.

#include <cmds/core.hpp>

#include <algorithm>
#include <deque>
#include <random>

namespace cmds {

inline Matrix euclidean_distances(const Matrix& points) {
  const Eigen::Index n = points.rows();
  Matrix D = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (points.row(i) - points.row(j)).norm();
      D(i, j) = d;
      D(j, i) = d;
    }
  return D;
}

/// Slice k is sqrt(alpha_k * D1^2 + (1 - alpha_k) * D2^2).
inline DistanceTensor weighted_mixture(const Matrix& D1, const Matrix& D2, const HyperparameterGrid& alphas,
                                       std::vector<std::string> labels = {}) {
  if (D1.rows() != D2.rows() || D1.cols() != D2.cols() || D1.rows() != D1.cols())
    throw Error(ErrorCode::ShapeMismatch, "mixture needs two square matrices of equal size");
  alphas.validate();
  if (alphas.two_axis()) throw Error(ErrorCode::InvalidGrid, "mixture takes a single alpha axis");
  std::vector<Matrix> slices;
  slices.reserve(alphas.alpha.size());
  const Matrix S1 = D1.array().square().matrix();
  const Matrix S2 = D2.array().square().matrix();
  for (std::size_t k = 0; k < alphas.alpha.size(); ++k) {
    const double a = alphas.alpha[k];
    if (a < 0.0 || a > 1.0)
      throw Error(ErrorCode::AlphaOutOfRange, "alpha[" + std::to_string(k) + "] = " + std::to_string(a));
    if (a == 0.0) {
      slices.push_back(D2);
    } else if (a == 1.0) {
      slices.push_back(D1);
    } else {
      slices.push_back((a * S1 + (1.0 - a) * S2).array().sqrt().matrix());
    }
  }
  return validate_distance_tensor(std::move(slices), alphas, std::move(labels));
}

struct ClusterToyConfig {
  int n_clusters = 5;
  int points_per_cluster = 10;
  int ambient_dim = 5;
  int T = 11;
  double noise_sd = 0.25;
  std::uint64_t seed = 0;
};

struct ClusterToyFamily {
  DistanceTensor distances;
  std::vector<int> labels;
  std::vector<Matrix> centers;  // per slice, n_clusters x ambient_dim
  std::vector<Matrix> points;   // per slice, N x ambient_dim
};

/// Standard-normal cluster centers scaled by (1 - alpha) on alpha in [0, 1],
/// with Gaussian points redrawn around them at every slice.
inline ClusterToyFamily collapsing_clusters_toy(const ClusterToyConfig& cfg) {
  if (cfg.n_clusters < 1 || cfg.points_per_cluster < 1 || cfg.ambient_dim < 1 || cfg.T < 1 || cfg.noise_sd < 0.0)
    throw Error(ErrorCode::InvalidArgument, "toy configuration fields must be positive");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix base(cfg.n_clusters, cfg.ambient_dim);
  for (Eigen::Index c = 0; c < base.rows(); ++c)
    for (Eigen::Index a = 0; a < base.cols(); ++a) base(c, a) = normal(rng);

  const auto grid = HyperparameterGrid::linspace(static_cast<std::size_t>(cfg.T));
  const int n = cfg.n_clusters * cfg.points_per_cluster;
  ClusterToyFamily out;
  out.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.labels[static_cast<std::size_t>(i)] = i / cfg.points_per_cluster;

  std::vector<Matrix> slices;
  for (double alpha : grid.alpha) {
    Matrix centers = (1.0 - alpha) * base;
    Matrix pts(n, cfg.ambient_dim);
    for (int i = 0; i < n; ++i)
      for (Eigen::Index a = 0; a < pts.cols(); ++a)
        pts(i, a) = centers(out.labels[static_cast<std::size_t>(i)], a) + cfg.noise_sd * normal(rng);
    slices.push_back(euclidean_distances(pts));
    out.centers.push_back(std::move(centers));
    out.points.push_back(std::move(pts));
  }
  std::vector<std::string> names(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    names[static_cast<std::size_t>(i)] =
        "c" + std::to_string(out.labels[static_cast<std::size_t>(i)]) + "_" + std::to_string(i % cfg.points_per_cluster);
  out.distances = validate_distance_tensor(std::move(slices), grid, std::move(names));
  return out;
}

struct HclustFamily {
  DistanceTensor distances;
  // membership[k][i] is the cluster id (smallest member index) of item i at level k.
  std::vector<std::vector<int>> membership;
  double eps = 0.0;
  bool duplicate_points = false;
};

/// Agglomerative clustering with centroid linkage. Level 0 holds singletons,
/// level N-1 a single cluster. At each level, items in the same cluster sit
/// `eps` apart; otherwise the distance is that between the cluster centroids.
/// Without `eps`, it defaults to 1e-3 times the smallest positive pairwise distance.
inline HclustFamily hclust_distance_family(const Matrix& points, std::optional<double> eps = std::nullopt,
                                           std::vector<std::string> labels = {}) {
  const Eigen::Index n = points.rows();
  if (n < 2) throw Error(ErrorCode::TooFewItems, "hierarchical clustering needs N >= 2");
  if (eps && !(*eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be > 0");

  HclustFamily out;
  const Matrix raw = euclidean_distances(points);
  double min_pos = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (raw(i, j) > 0.0) min_pos = std::min(min_pos, raw(i, j));
      if (raw(i, j) == 0.0) out.duplicate_points = true;
    }
  out.eps = eps.value_or(std::isfinite(min_pos) ? 1e-3 * min_pos : 1e-3);

  std::vector<int> cluster(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) cluster[static_cast<std::size_t>(i)] = static_cast<int>(i);

  auto centroid = [&](int id) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(points.cols());
    int count = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (cluster[static_cast<std::size_t>(i)] == id) {
        c += points.row(i);
        ++count;
      }
    return Eigen::RowVectorXd(c / count);
  };

  std::vector<Matrix> slices;
  for (Eigen::Index level = 0; level < n; ++level) {
    std::vector<int> ids = cluster;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<Eigen::RowVectorXd> cents;
    for (int id : ids) cents.push_back(centroid(id));
    auto pos = [&](int id) { return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin()); };

    Matrix S = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const int ci = cluster[static_cast<std::size_t>(i)];
        const int cj = cluster[static_cast<std::size_t>(j)];
        const double v = ci == cj ? out.eps : (cents[pos(ci)] - cents[pos(cj)]).norm();
        S(i, j) = v;
        S(j, i) = v;
      }
    slices.push_back(std::move(S));
    out.membership.push_back(cluster);

    if (ids.size() == 1) break;
    // Merge the closest pair of centroids; ties go to the smallest (id, id) pair.
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < ids.size(); ++a)
      for (std::size_t b = a + 1; b < ids.size(); ++b) {
        const double d = (cents[a] - cents[b]).norm();
        if (d < best) {
          best = d;
          bi = a;
          bj = b;
        }
      }
    const int keep = ids[bi];
    const int gone = ids[bj];
    for (auto& c : cluster)
      if (c == gone) c = keep;
  }
  out.distances = validate_distance_tensor(std::move(slices), HyperparameterGrid::indices(static_cast<std::size_t>(n)),
                                           std::move(labels));
  return out;
}

/// Per subject, removes the weakest `alpha` fraction of its positive
/// off-diagonal weights (all weights tied with the cut-off go too),
/// binarizes, and compares subjects by the number of differing edges.
inline DistanceTensor threshold_hamming_family(const std::vector<Matrix>& adjacencies, const HyperparameterGrid& quantiles,
                                               std::vector<std::string> labels = {}) {
  const std::size_t S = adjacencies.size();
  if (S < 2) throw Error(ErrorCode::TooFewItems, "need at least two subjects");
  quantiles.validate();
  const Eigen::Index n = adjacencies.front().rows();
  std::vector<std::vector<double>> sorted_weights(S);
  for (std::size_t s = 0; s < S; ++s) {
    const Matrix& A = adjacencies[s];
    if (A.rows() != n || A.cols() != n)
      throw Error(ErrorCode::ShapeMismatch, "subject " + std::to_string(s) + " adjacency has the wrong shape");
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (!std::isfinite(A(i, j)) || A(i, j) < 0.0 || A(i, j) != A(j, i))
          throw Error(ErrorCode::InvalidArgument, "subject " + std::to_string(s) +
                                                      " adjacency must be symmetric, finite and nonnegative");
        if (A(i, j) > 0.0) sorted_weights[s].push_back(A(i, j));
      }
    if (sorted_weights[s].empty()) throw Error(ErrorCode::EmptyGraph, "subject " + std::to_string(s) + " has no edges");
    std::sort(sorted_weights[s].begin(), sorted_weights[s].end());
  }

  std::vector<Matrix> slices;
  for (double q : quantiles.alpha) {
    if (q < 0.0 || q >= 1.0) throw Error(ErrorCode::AlphaOutOfRange, "quantile must lie in [0, 1)");
    std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>> bin(S);
    for (std::size_t s = 0; s < S; ++s) {
      const auto& w = sorted_weights[s];
      const auto removed = static_cast<std::size_t>(std::ceil(q * static_cast<double>(w.size())));
      const double cut = removed == 0 ? 0.0 : w[std::min(removed, w.size()) - 1];
      bin[s] = (adjacencies[s].array() > cut).matrix();
    }
    Matrix H = Matrix::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t t = s + 1; t < S; ++t) {
        double diff = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = i + 1; j < n; ++j)
            if (bin[s](i, j) != bin[t](i, j)) diff += 1.0;
        H(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = diff;
        H(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) = diff;
      }
    slices.push_back(std::move(H));
  }
  return validate_distance_tensor(std::move(slices), quantiles, std::move(labels));
}

/// Hop distances on the consensus graph with edges where the fraction of
/// subjects having the edge exceeds the threshold. Disconnected pairs get N.
inline DistanceTensor consensus_shortest_path_family(const std::vector<Matrix>& adjacencies,
                                                     const HyperparameterGrid& thresholds,
                                                     std::vector<std::string> labels = {}) {
  if (adjacencies.empty()) throw Error(ErrorCode::TooFewItems, "need at least one subject");
  thresholds.validate();
  const Eigen::Index n = adjacencies.front().rows();
  Matrix mean = Matrix::Zero(n, n);
  for (std::size_t s = 0; s < adjacencies.size(); ++s) {
    const Matrix& A = adjacencies[s];
    if (A.rows() != n || A.cols() != n)
      throw Error(ErrorCode::ShapeMismatch, "subject " + std::to_string(s) + " adjacency has the wrong shape");
    if (A != A.transpose())
      throw Error(ErrorCode::InvalidArgument, "subject " + std::to_string(s) + " adjacency is not symmetric");
    mean += (A.array() > 0.0).cast<double>().matrix();
  }
  mean /= static_cast<double>(adjacencies.size());

  std::vector<Matrix> slices;
  for (double alpha : thresholds.alpha) {
    Matrix P = Matrix::Constant(n, n, static_cast<double>(n));
    for (Eigen::Index src = 0; src < n; ++src) {
      std::vector<int> hops(static_cast<std::size_t>(n), -1);
      std::deque<Eigen::Index> queue{src};
      hops[static_cast<std::size_t>(src)] = 0;
      while (!queue.empty()) {
        const Eigen::Index u = queue.front();
        queue.pop_front();
        for (Eigen::Index v = 0; v < n; ++v)
          if (v != u && mean(u, v) > alpha && hops[static_cast<std::size_t>(v)] < 0) {
            hops[static_cast<std::size_t>(v)] = hops[static_cast<std::size_t>(u)] + 1;
            queue.push_back(v);
          }
      }
      for (Eigen::Index v = 0; v < n; ++v)
        if (hops[static_cast<std::size_t>(v)] >= 0) P(src, v) = hops[static_cast<std::size_t>(v)];
    }
    slices.push_back(std::move(P));
  }
  return validate_distance_tensor(std::move(slices), thresholds, std::move(labels));
}

/// Mixture of a 2-D and a 12-D standard-normal point cloud; alpha = 0 is the
/// 2-D distance matrix.
inline DistanceTensor mixed_dimensionality_family(std::uint64_t seed, int n, int T) {
  if (n < 3) throw Error(ErrorCode::TooFewItems, "mixed dimensionality needs n >= 3");
  if (T < 1) throw Error(ErrorCode::InvalidArgument, "T must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix low(n, 2), high(n, 12);
  for (Eigen::Index i = 0; i < low.size(); ++i) low(i) = normal(rng);
  for (Eigen::Index i = 0; i < high.size(); ++i) high(i) = normal(rng);
  return weighted_mixture(euclidean_distances(high), euclidean_distances(low),
                          HyperparameterGrid::linspace(static_cast<std::size_t>(T)));
}

}  // namespace cmds
