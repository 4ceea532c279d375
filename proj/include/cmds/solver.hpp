#pragma once

// Continuous MDS by curve-wise concave-convex iterations.
//
// The total cost is
//     C(X) = sum_k sum_{i != j} w_ij^k (||x_i^k - x_j^k|| - d_ij^k)^2 + lambda * sum_i x_i^T M x_i,
// with every pair counted twice. The part of C that depends on curve i is
// 2 * f_i, where
//     f_i(x) = sum_k sum_{j != i} w_ij^k (||x^k - x_j^k|| - d_ij^k)^2 + (lambda / 2) * x^T M x.
// The inner loop minimizes f_i by majorization: the concave term
// -2 w d ||x^k - x_j^k|| is linearized at the current iterate, which turns
// the bound into a penalized least-squares fit of x to the surrogate points
//     xhat_j^k = x_j^k + d_ij^k * (x^k - x_j^k) / ||x^k - x_j^k||,
// or x_j^k + d_ij^k * t with a random unit t when x^k and x_j^k coincide.
// Each bound minimizer solves (diag(c) + (lambda / 2) M) x = sum_j w_ij xhat_j
// per embedding dimension, c_k = sum_{j != i} w_ij^k (N - 1 when unweighted).

#include <cmds/core.hpp>
#include <cmds/init.hpp>
#include <cmds/metrics.hpp>
#include <cmds/penalty.hpp>

#include <map>
#include <random>

namespace cmds {

/// Weights selecting the stress variant. Raw stress uses unit weights.
inline WeightTensor build_weights(const DistanceTensor& D, const VariantSpec& spec) {
  const auto n = static_cast<Eigen::Index>(D.N());
  WeightTensor W;
  W.variant = spec.tag;
  W.weights.reserve(D.T());
  const Matrix offdiag = Matrix::Ones(n, n) - Matrix::Identity(n, n);

  switch (spec.tag) {
    case Variant::raw:
      W.weights.assign(D.T(), offdiag);
      break;
    case Variant::sammon:
    case Variant::elastic: {
      const double power = spec.tag == Variant::sammon ? 1.0 : 2.0;
      for (std::size_t k = 0; k < D.T(); ++k) {
        Matrix w = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = D.slices[k](i, j);
            if (d == 0.0)
              throw Error(ErrorCode::ZeroDistanceWithReciprocalWeight,
                          "slice " + std::to_string(k) + ", (" + std::to_string(i) + ", " + std::to_string(j) + ")");
            w(i, j) = power == 1.0 ? 1.0 / d : 1.0 / (d * d);
          }
        W.weights.push_back(std::move(w));
      }
      break;
    }
    case Variant::unfolding: {
      if (spec.groups.size() != D.N())
        throw Error(ErrorCode::ShapeMismatch, "unfolding needs one group label per item (" +
                                                  std::to_string(spec.groups.size()) + " for " +
                                                  std::to_string(D.N()) + ")");
      Matrix w = Matrix::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          if (i != j && spec.groups[static_cast<std::size_t>(i)] == spec.groups[static_cast<std::size_t>(j)]) w(i, j) = 1.0;
      W.weights.assign(D.T(), w);
      break;
    }
    case Variant::lmds: {
      if (spec.lmds_k < 1 || spec.lmds_k > n - 1)
        throw Error(ErrorCode::InvalidArgument, "lmds k must lie in [1, N-1]");
      const double max_d = D.max_entry();
      W.d_inf = spec.lmds_d_inf.value_or(2.0 * max_d);
      W.off_weight = spec.lmds_w.value_or(1.0 / static_cast<double>(n));
      if (!(W.d_inf > max_d)) throw Error(ErrorCode::InvalidArgument, "lmds D_inf must exceed the largest distance");
      if (!(W.off_weight > 0.0)) throw Error(ErrorCode::InvalidArgument, "lmds off-neighbourhood weight must be > 0");
      for (std::size_t k = 0; k < D.T(); ++k) {
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> nb =
            Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
        for (Eigen::Index i = 0; i < n; ++i) {
          std::vector<Eigen::Index> order;
          for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) order.push_back(j);
          std::stable_sort(order.begin(), order.end(),
                           [&](Eigen::Index a, Eigen::Index b) { return D.slices[k](i, a) < D.slices[k](i, b); });
          for (int q = 0; q < spec.lmds_k; ++q) {
            nb(i, order[static_cast<std::size_t>(q)]) = true;
            nb(order[static_cast<std::size_t>(q)], i) = true;
          }
        }
        Matrix w(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j) w(i, j) = i == j ? 0.0 : (nb(i, j) ? 1.0 : W.off_weight);
        W.weights.push_back(std::move(w));
        W.neighbors.push_back(std::move(nb));
      }
      break;
    }
  }
  return W;
}

/// Fixed data of one solve: fit targets, optional weights and the penalty.
/// A null `weights` means unit weights on every pair.
struct CurveProblem {
  std::vector<Matrix> targets;
  const WeightTensor* weights = nullptr;
  Matrix M;
  double lambda = 0.0;
  // Distances at or below this count as coincident points.
  double coincidence_tol = 0.0;

  std::size_t T() const { return targets.size(); }
  std::size_t N() const { return targets.empty() ? 0 : static_cast<std::size_t>(targets.front().rows()); }
  double w(std::size_t k, Eigen::Index i, Eigen::Index j) const {
    return weights ? weights->weights[k](i, j) : (i == j ? 0.0 : 1.0);
  }
};

inline CurveProblem make_problem(const DistanceTensor& D, const WeightTensor* W, double lambda) {
  CurveProblem p;
  p.targets = W ? effective_targets(D, *W) : D.slices;
  p.weights = W;
  p.M = roughness_for_grid(D.grid).M;
  p.lambda = lambda;
  double scale = 0.0;
  for (const auto& t : p.targets) scale = std::max(scale, t.maxCoeff());
  p.coincidence_tol = 1e-12 * scale;
  return p;
}

inline double objective(const EmbeddingCurves& curves, const CurveProblem& p) {
  double cost = 0.0;
  for (std::size_t k = 0; k < p.T(); ++k)
    cost += detail::slice_stress(curves.slices[k], p.targets[k], p.weights ? &p.weights->weights[k] : nullptr);
  if (p.lambda != 0.0) cost += p.lambda * roughness_per_curve(curves, p.M).sum();
  return cost;
}

/// f_i evaluated at `x` (T x d), all other curves taken from `curves`.
inline double single_curve_cost(const EmbeddingCurves& curves, const CurveProblem& p, std::size_t i, const Matrix& x) {
  const auto ii = static_cast<Eigen::Index>(i);
  double cost = 0.0;
  for (std::size_t k = 0; k < p.T(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Matrix& S = curves.slices[k];
    for (Eigen::Index j = 0; j < S.rows(); ++j) {
      if (j == ii) continue;
      const double r = (x.row(kk) - S.row(j)).norm() - p.targets[k](ii, j);
      cost += p.w(k, ii, j) * r * r;
    }
  }
  if (p.lambda != 0.0) cost += 0.5 * p.lambda * roughness(x, p.M);
  return cost;
}

/// Surrogate points for curve i at the current configuration. Slice k of the
/// result is N x d; row i is left at x_i^k and carries no meaning.
template <typename Rng>
std::vector<Matrix> surrogate_points(const EmbeddingCurves& curves, const CurveProblem& p, std::size_t i, Rng& rng) {
  if (i >= curves.N()) throw Error(ErrorCode::IndexOutOfRange, "item " + std::to_string(i));
  const auto ii = static_cast<Eigen::Index>(i);
  const auto d = static_cast<Eigen::Index>(curves.dim());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Matrix> out(curves.T());
  Eigen::RowVectorXd t(d);
  for (std::size_t k = 0; k < curves.T(); ++k) {
    const Matrix& S = curves.slices[k];
    Matrix& H = out[k];
    H = S;
    for (Eigen::Index j = 0; j < S.rows(); ++j) {
      if (j == ii) continue;
      const double target = p.targets[k](ii, j);
      if (target == 0.0 || p.w(k, ii, j) == 0.0) continue;  // xhat_j = x_j
      const Eigen::RowVectorXd diff = S.row(ii) - S.row(j);
      const double len = diff.norm();
      if (len > p.coincidence_tol) {
        H.row(j) += (target / len) * diff;
      } else {
        double norm = 0.0;
        while (norm == 0.0) {
          for (Eigen::Index a = 0; a < d; ++a) t(a) = normal(rng);
          norm = t.norm();
        }
        H.row(j) += (target / norm) * t;
      }
    }
  }
  return out;
}

/// Convex upper bound u(x, z) of f_i, tight at x = z, built from the
/// surrogate points computed at z.
inline double single_curve_upper_bound(const EmbeddingCurves& curves, const CurveProblem& p, std::size_t i,
                                       const Matrix& x, const Matrix& z, const std::vector<Matrix>& surrogates_at_z) {
  const auto ii = static_cast<Eigen::Index>(i);
  double u = 0.0;
  for (std::size_t k = 0; k < p.T(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Matrix& S = curves.slices[k];
    for (Eigen::Index j = 0; j < S.rows(); ++j) {
      if (j == ii) continue;
      const double w = p.w(k, ii, j);
      const double target = p.targets[k](ii, j);
      const double convex = (x.row(kk) - S.row(j)).squaredNorm();
      const double concave_at_z = -2.0 * target * (z.row(kk) - S.row(j)).norm();
      const double linear = -2.0 * (x.row(kk) - z.row(kk)).dot(surrogates_at_z[k].row(j) - S.row(j));
      u += w * (convex + concave_at_z + linear + target * target);
    }
  }
  if (p.lambda != 0.0) u += 0.5 * p.lambda * roughness(x, p.M);
  return u;
}

/// Per-slice diagonal coefficients c_k = sum_{j != i} w_ij^k.
inline Vector curve_coefficients(const CurveProblem& p, std::size_t i) {
  Vector c(static_cast<Eigen::Index>(p.T()));
  const auto ii = static_cast<Eigen::Index>(i);
  for (std::size_t k = 0; k < p.T(); ++k) {
    if (!p.weights) {
      c(static_cast<Eigen::Index>(k)) = static_cast<double>(p.N() - 1);
      continue;
    }
    double s = 0.0;
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(p.N()); ++j)
      if (j != ii) s += p.weights->weights[k](ii, j);
    c(static_cast<Eigen::Index>(k)) = s;
  }
  return c;
}

/// Factorized update systems keyed by their coefficient pattern.
class UpdateSystemCache {
 public:
  const UpdateSystem& get(const Vector& coefficients, double lambda, const Matrix& M, std::size_t dim) {
    std::vector<double> key(coefficients.data(), coefficients.data() + coefficients.size());
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    check_solvable(coefficients, lambda, M);
    return cache_.emplace(std::move(key), UpdateSystem(coefficients, lambda, M, dim)).first->second;
  }

  std::size_t size() const { return cache_.size(); }

 private:
  static void check_solvable(const Vector& c, double lambda, const Matrix& M) {
    const auto active = (c.array() > 0.0).count();
    const bool penalized = lambda > 0.0 && M.rows() >= 3;
    // The penalty's null space is the affine sequences, pinned down by any two slices.
    const bool ok = penalized ? active >= 2 : active == c.size();
    if (!ok) throw Error(ErrorCode::SingularSystem, "curve has too few weighted pairs to determine an update");
  }

  std::map<std::vector<double>, UpdateSystem> cache_;
};

/// Minimizer of the upper bound for curve i given its surrogate points.
inline Matrix update_curve(const std::vector<Matrix>& surrogates, const CurveProblem& p, std::size_t i,
                           const UpdateSystem& system) {
  const auto ii = static_cast<Eigen::Index>(i);
  const auto d = surrogates.front().cols();
  Matrix rhs = Matrix::Zero(static_cast<Eigen::Index>(p.T()), d);
  for (std::size_t k = 0; k < p.T(); ++k) {
    const Matrix& H = surrogates[k];
    auto row = rhs.row(static_cast<Eigen::Index>(k));
    for (Eigen::Index j = 0; j < H.rows(); ++j) {
      if (j == ii) continue;
      if (p.weights) {
        const double w = p.weights->weights[k](ii, j);
        if (w != 0.0) row += w * H.row(j);
      } else {
        row += H.row(j);
      }
    }
  }
  return system.solve_curve(rhs);
}

struct InnerResult {
  int iterations = 0;
  bool converged = false;
  std::vector<double> curve_costs;  // f_i after each iteration, when traced
};

/// Majorize/minimize on curve i until the relative change of the curve drops
/// to `tol` or `max_inner` iterations ran. Updates `curves` in place.
template <typename Rng>
InnerResult mm_inner_loop(EmbeddingCurves& curves, const CurveProblem& p, std::size_t i, double tol, int max_inner,
                          Rng& rng, UpdateSystemCache& cache, bool trace = false,
                          std::vector<double>* total_trace = nullptr) {
  const UpdateSystem& system = cache.get(curve_coefficients(p, i), 0.5 * p.lambda, p.M, curves.dim());
  InnerResult r;
  for (int it = 1; it <= max_inner; ++it) {
    const Matrix old = curves.curve(i);
    const auto surrogates = surrogate_points(curves, p, i, rng);
    const Matrix next = update_curve(surrogates, p, i, system);
    curves.set_curve(i, next);
    r.iterations = it;
    if (trace) r.curve_costs.push_back(single_curve_cost(curves, p, i, next));
    if (total_trace) total_trace->push_back(objective(curves, p));
    const double change = (next - old).norm() / std::max(old.norm(), 1e-12);
    if (change <= tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

struct ResidualResult {
  double norm = 0.0;
  bool coincident = false;
};

/// Norm of the gradient of f_i at the current curve, on the branch where f_i
/// is differentiable. Flags coincident points, where it is undefined.
inline ResidualResult subgradient_residual(const EmbeddingCurves& curves, const CurveProblem& p, std::size_t i) {
  const auto ii = static_cast<Eigen::Index>(i);
  const Matrix x = curves.curve(i);
  Matrix grad = Matrix::Zero(x.rows(), x.cols());
  ResidualResult r;
  for (std::size_t k = 0; k < p.T(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Matrix& S = curves.slices[k];
    for (Eigen::Index j = 0; j < S.rows(); ++j) {
      if (j == ii) continue;
      const double w = p.w(k, ii, j);
      if (w == 0.0) continue;
      const Eigen::RowVectorXd diff = x.row(kk) - S.row(j);
      const double len = diff.norm();
      const double target = p.targets[k](ii, j);
      if (len <= p.coincidence_tol) {
        if (target != 0.0) r.coincident = true;
        continue;
      }
      grad.row(kk) += 2.0 * w * (1.0 - target / len) * diff;
    }
  }
  if (p.lambda != 0.0) grad += p.lambda * p.M * x;
  r.norm = grad.norm();
  return r;
}

struct SolveResult {
  EmbeddingCurves curves;
  std::vector<double> cost_trace;        // initial cost, then one entry per sweep
  std::vector<double> inner_cost_trace;  // total cost after every inner step (trace_inner)
  std::vector<int> inner_iterations;     // sweeps x N, row-major
  bool converged = false;
  int sweeps = 0;
  Vector final_residuals;  // NaN where points coincide
  double final_cost() const { return cost_trace.back(); }
};

inline void check_solvable_input(const DistanceTensor& D, const SolverSettings& settings) {
  settings.validate();
  if (D.N() < 2) throw Error(ErrorCode::TooFewItems, "a solve needs at least two items");
}

/// Runs the solver from the given starting curves with explicit weights
/// (null for unit weights).
inline SolveResult cmds(const DistanceTensor& D, const SolverSettings& settings, EmbeddingCurves init,
                        const WeightTensor* W) {
  check_solvable_input(D, settings);
  if (init.T() != D.T() || init.N() != D.N() || init.dim() != static_cast<std::size_t>(settings.dim))
    throw Error(ErrorCode::ShapeMismatch, "initial curves do not match the distance tensor and dimension");
  if (W && (W->T() != D.T() || W->N() != D.N())) throw Error(ErrorCode::ShapeMismatch, "weights do not match");

  const CurveProblem p = make_problem(D, W, settings.lambda);
  std::seed_seq seq{static_cast<std::uint32_t>(settings.seed), static_cast<std::uint32_t>(settings.seed >> 32), 0x5eedu};
  std::mt19937_64 rng(seq);
  UpdateSystemCache cache;

  SolveResult r;
  r.curves = std::move(init);
  double cost = objective(r.curves, p);
  r.cost_trace.push_back(cost);
  if (settings.trace_inner) r.inner_cost_trace.push_back(cost);

  for (int sweep = 1; sweep <= settings.max_outer; ++sweep) {
    for (std::size_t i = 0; i < D.N(); ++i) {
      const auto inner = mm_inner_loop(r.curves, p, i, settings.tol, settings.max_inner, rng, cache, false,
                                       settings.trace_inner ? &r.inner_cost_trace : nullptr);
      r.inner_iterations.push_back(inner.iterations);
    }
    const double next = objective(r.curves, p);
    r.cost_trace.push_back(next);
    r.sweeps = sweep;
    const bool done = std::abs(cost - next) <= settings.tol * std::max(next, 1.0);
    cost = next;
    if (done) {
      r.converged = true;
      break;
    }
  }

  r.final_residuals.resize(static_cast<Eigen::Index>(D.N()));
  for (std::size_t i = 0; i < D.N(); ++i) {
    const auto res = subgradient_residual(r.curves, p, i);
    r.final_residuals(static_cast<Eigen::Index>(i)) = res.coincident ? std::numeric_limits<double>::quiet_NaN() : res.norm;
  }
  return r;
}

/// Full solve: builds variant weights and the starting configuration from
/// `settings`.
inline SolveResult cmds(const DistanceTensor& D, const SolverSettings& settings) {
  check_solvable_input(D, settings);
  EmbeddingCurves init = initialize(D, static_cast<std::size_t>(settings.dim), settings.init, settings.seed);
  if (settings.variant.tag == Variant::raw) return cmds(D, settings, std::move(init), nullptr);
  const WeightTensor W = build_weights(D, settings.variant);
  return cmds(D, settings, std::move(init), &W);
}

inline SolveResult cmds(const DistanceTensor& D, const SolverSettings& settings, EmbeddingCurves init) {
  check_solvable_input(D, settings);
  if (settings.variant.tag == Variant::raw) return cmds(D, settings, std::move(init), nullptr);
  const WeightTensor W = build_weights(D, settings.variant);
  return cmds(D, settings, std::move(init), &W);
}

}  // namespace cmds
