#pragma once

// Domain types shared by every part of the library: hyperparameter grids,
// distance tensors, embedding curves, weights and solver settings.
//
// Index conventions
//   slice k   : position on the hyperparameter grid, 0 <= k < T
//   item i, j : datapoint, 0 <= i, j < N
//   dimension : embedding axis, 0 <= a < d
//
// For two-axis grids the slices are flattened alpha-fastest:
//   k = k_alpha + T_alpha * k_beta

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cmds {

enum class ErrorCode {
  ShapeMismatch,
  NonFiniteEntry,
  NegativeDistance,
  AsymmetryTooLarge,
  NonZeroDiagonal,
  InvalidGrid,
  IndexOutOfRange,
  InvalidArgument,
  GridTooShort,
  FactorizationFailure,
  SingularSystem,
  EigenFailure,
  ZeroDistanceWithReciprocalWeight,
  EmptyGraph,
  AlphaOutOfRange,
  TooFewItems,
  SingleSliceInput,
  ParseError,
  SchemaVersionMismatch,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteEntry: return "NonFiniteEntry";
    case ErrorCode::NegativeDistance: return "NegativeDistance";
    case ErrorCode::AsymmetryTooLarge: return "AsymmetryTooLarge";
    case ErrorCode::NonZeroDiagonal: return "NonZeroDiagonal";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::GridTooShort: return "GridTooShort";
    case ErrorCode::FactorizationFailure: return "FactorizationFailure";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::ZeroDistanceWithReciprocalWeight: return "ZeroDistanceWithReciprocalWeight";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::AlphaOutOfRange: return "AlphaOutOfRange";
    case ErrorCode::TooFewItems: return "TooFewItems";
    case ErrorCode::SingleSliceInput: return "SingleSliceInput";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Ordered grid of hyperparameter values. `beta` is empty for one axis.
struct HyperparameterGrid {
  std::vector<double> alpha;
  std::vector<double> beta;

  HyperparameterGrid() = default;
  explicit HyperparameterGrid(std::vector<double> a, std::vector<double> b = {})
      : alpha(std::move(a)), beta(std::move(b)) {}

  /// Uniform grid of `steps` points on [lo, hi]; a single step sits at `lo`.
  static HyperparameterGrid linspace(std::size_t steps, double lo = 0.0, double hi = 1.0) {
    std::vector<double> a(steps);
    for (std::size_t k = 0; k < steps; ++k)
      a[k] = steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(steps - 1);
    return HyperparameterGrid(std::move(a));
  }

  static HyperparameterGrid indices(std::size_t steps) {
    std::vector<double> a(steps);
    for (std::size_t k = 0; k < steps; ++k) a[k] = static_cast<double>(k);
    return HyperparameterGrid(std::move(a));
  }

  bool two_axis() const { return !beta.empty(); }
  std::size_t size_alpha() const { return alpha.size(); }
  std::size_t size_beta() const { return beta.empty() ? 1 : beta.size(); }
  std::size_t slices() const { return size_alpha() * size_beta(); }

  void validate() const {
    auto check_axis = [](const std::vector<double>& axis, const char* name) {
      for (std::size_t k = 0; k < axis.size(); ++k) {
        if (!std::isfinite(axis[k]))
          throw Error(ErrorCode::InvalidGrid, std::string(name) + "[" + std::to_string(k) + "] is not finite");
        if (k > 0 && !(axis[k] > axis[k - 1]))
          throw Error(ErrorCode::InvalidGrid,
                      std::string(name) + " is not strictly increasing at index " + std::to_string(k));
      }
    };
    if (alpha.empty()) throw Error(ErrorCode::InvalidGrid, "alpha axis is empty");
    check_axis(alpha, "alpha");
    check_axis(beta, "beta");
  }

  bool operator==(const HyperparameterGrid&) const = default;
};

/// T slices of symmetric, zero-diagonal, nonnegative N x N dissimilarities.
/// Construct through validate_distance_tensor().
struct DistanceTensor {
  HyperparameterGrid grid;
  std::vector<Matrix> slices;
  std::vector<std::string> labels;

  std::size_t T() const { return slices.size(); }
  std::size_t N() const { return slices.empty() ? 0 : static_cast<std::size_t>(slices.front().rows()); }
  double operator()(std::size_t k, std::size_t i, std::size_t j) const {
    return slices[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  double max_entry() const {
    double m = 0.0;
    for (const auto& s : slices) m = std::max(m, s.size() ? s.maxCoeff() : 0.0);
    return m;
  }
};

inline std::vector<std::string> default_labels(std::size_t n) {
  std::vector<std::string> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = "item" + std::to_string(i);
  return out;
}

/// Relative threshold below which asymmetry and diagonal entries count as noise.
inline constexpr double kDistanceNoiseTolerance = 1e-9;

inline DistanceTensor validate_distance_tensor(std::vector<Matrix> raw, HyperparameterGrid grid,
                                               std::vector<std::string> labels = {}) {
  grid.validate();
  if (raw.size() != grid.slices())
    throw Error(ErrorCode::ShapeMismatch, "tensor has " + std::to_string(raw.size()) +
                                              " slices but grid has " + std::to_string(grid.slices()));
  const Eigen::Index n = raw.front().rows();
  if (n < 1) throw Error(ErrorCode::ShapeMismatch, "slices are empty");
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (raw[k].rows() != n || raw[k].cols() != n)
      throw Error(ErrorCode::ShapeMismatch, "slice " + std::to_string(k) + " is " + std::to_string(raw[k].rows()) +
                                                "x" + std::to_string(raw[k].cols()) + ", expected " +
                                                std::to_string(n) + "x" + std::to_string(n));
  }
  if (labels.empty()) labels = default_labels(static_cast<std::size_t>(n));
  if (labels.size() != static_cast<std::size_t>(n))
    throw Error(ErrorCode::ShapeMismatch,
                std::to_string(labels.size()) + " labels for " + std::to_string(n) + " items");

  auto where = [](std::size_t k, Eigen::Index i, Eigen::Index j) {
    return "slice " + std::to_string(k) + ", (" + std::to_string(i) + ", " + std::to_string(j) + ")";
  };

  double max_abs = 0.0;
  for (std::size_t k = 0; k < raw.size(); ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const double v = raw[k](i, j);
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteEntry, where(k, i, j));
        max_abs = std::max(max_abs, std::abs(v));
      }
  const double tol = kDistanceNoiseTolerance * max_abs;

  for (std::size_t k = 0; k < raw.size(); ++k) {
    Matrix& s = raw[k];
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j && s(i, j) < 0.0)
          throw Error(ErrorCode::NegativeDistance, where(k, i, j) + " = " + std::to_string(s(i, j)));
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(s(i, i)) > tol)
        throw Error(ErrorCode::NonZeroDiagonal, where(k, i, i) + " = " + std::to_string(s(i, i)));
      s(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (std::abs(s(i, j) - s(j, i)) > tol)
          throw Error(ErrorCode::AsymmetryTooLarge,
                      where(k, i, j) + " differs from its transpose by " + std::to_string(std::abs(s(i, j) - s(j, i))));
        const double avg = 0.5 * (s(i, j) + s(j, i));
        s(i, j) = avg;
        s(j, i) = avg;
      }
    }
  }
  return DistanceTensor{std::move(grid), std::move(raw), std::move(labels)};
}

/// Curves x_i over the grid. Slice k is an N x d matrix whose row i is x_i^k.
struct EmbeddingCurves {
  HyperparameterGrid grid;
  std::vector<Matrix> slices;

  EmbeddingCurves() = default;
  EmbeddingCurves(HyperparameterGrid g, std::size_t n, std::size_t dim) : grid(std::move(g)) {
    slices.assign(grid.slices(), Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim)));
  }

  std::size_t T() const { return slices.size(); }
  std::size_t N() const { return slices.empty() ? 0 : static_cast<std::size_t>(slices.front().rows()); }
  std::size_t dim() const { return slices.empty() ? 0 : static_cast<std::size_t>(slices.front().cols()); }

  /// T x d trajectory of item i.
  Matrix curve(std::size_t i) const {
    Matrix c(static_cast<Eigen::Index>(T()), static_cast<Eigen::Index>(dim()));
    for (std::size_t k = 0; k < T(); ++k) c.row(static_cast<Eigen::Index>(k)) = slices[k].row(static_cast<Eigen::Index>(i));
    return c;
  }

  void set_curve(std::size_t i, const Matrix& c) {
    for (std::size_t k = 0; k < T(); ++k) slices[k].row(static_cast<Eigen::Index>(i)) = c.row(static_cast<Eigen::Index>(k));
  }

  bool all_finite() const {
    for (const auto& s : slices)
      if (!s.allFinite()) return false;
    return true;
  }
};

/// Stacks curve i slice by slice: (x^1_1..x^1_d, x^2_1..x^2_d, ...), length T*d.
inline Vector vectorize_curve(const EmbeddingCurves& curves, std::size_t i) {
  if (i >= curves.N())
    throw Error(ErrorCode::IndexOutOfRange, "item " + std::to_string(i) + " of " + std::to_string(curves.N()));
  const auto d = static_cast<Eigen::Index>(curves.dim());
  Vector v(static_cast<Eigen::Index>(curves.T()) * d);
  for (std::size_t k = 0; k < curves.T(); ++k)
    v.segment(static_cast<Eigen::Index>(k) * d, d) = curves.slices[k].row(static_cast<Eigen::Index>(i)).transpose();
  return v;
}

inline void devectorize_curve(EmbeddingCurves& curves, std::size_t i, const Vector& v) {
  if (i >= curves.N())
    throw Error(ErrorCode::IndexOutOfRange, "item " + std::to_string(i) + " of " + std::to_string(curves.N()));
  const auto d = static_cast<Eigen::Index>(curves.dim());
  if (v.size() != static_cast<Eigen::Index>(curves.T()) * d)
    throw Error(ErrorCode::ShapeMismatch, "vector length " + std::to_string(v.size()));
  for (std::size_t k = 0; k < curves.T(); ++k)
    curves.slices[k].row(static_cast<Eigen::Index>(i)) = v.segment(static_cast<Eigen::Index>(k) * d, d).transpose();
}

enum class Variant { raw, sammon, elastic, unfolding, lmds };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::raw: return "raw";
    case Variant::sammon: return "sammon";
    case Variant::elastic: return "elastic";
    case Variant::unfolding: return "unfolding";
    case Variant::lmds: return "lmds";
  }
  return "raw";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "raw") return Variant::raw;
  if (s == "sammon") return Variant::sammon;
  if (s == "elastic") return Variant::elastic;
  if (s == "unfolding") return Variant::unfolding;
  if (s == "lmds") return Variant::lmds;
  throw Error(ErrorCode::InvalidArgument, "unknown variant '" + s + "'");
}

/// Per-slice pair weights. For local MDS, pairs outside the neighbourhood
/// graph are fitted to `d_inf` instead of their observed distance.
struct WeightTensor {
  Variant variant = Variant::raw;
  std::vector<Matrix> weights;
  std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>> neighbors;  // lmds only
  double d_inf = 0.0;
  double off_weight = 0.0;

  std::size_t T() const { return weights.size(); }
  std::size_t N() const { return weights.empty() ? 0 : static_cast<std::size_t>(weights.front().rows()); }
};

/// Distances the weighted stress actually fits: D itself, or D with
/// off-neighbourhood pairs replaced by d_inf for local MDS.
inline std::vector<Matrix> effective_targets(const DistanceTensor& D, const WeightTensor& W) {
  if (W.variant != Variant::lmds) return D.slices;
  std::vector<Matrix> out = D.slices;
  for (std::size_t k = 0; k < out.size(); ++k)
    for (Eigen::Index i = 0; i < out[k].rows(); ++i)
      for (Eigen::Index j = 0; j < out[k].cols(); ++j)
        if (i != j && !W.neighbors[k](i, j)) out[k](i, j) = W.d_inf;
  return out;
}

enum class InitStrategy { per_slice, aggregated, random };

inline const char* to_string(InitStrategy s) {
  switch (s) {
    case InitStrategy::per_slice: return "per-slice";
    case InitStrategy::aggregated: return "aggregated";
    case InitStrategy::random: return "random";
  }
  return "aggregated";
}

inline InitStrategy parse_init(const std::string& s) {
  if (s == "per-slice") return InitStrategy::per_slice;
  if (s == "aggregated") return InitStrategy::aggregated;
  if (s == "random") return InitStrategy::random;
  throw Error(ErrorCode::InvalidArgument, "unknown init strategy '" + s + "'");
}

/// Extra parameters for the weighted variants.
struct VariantSpec {
  Variant tag = Variant::raw;
  std::vector<int> groups;           // unfolding: group label per item
  int lmds_k = 3;                    // lmds: neighbourhood size
  std::optional<double> lmds_w;      // lmds: off-neighbourhood weight, default 1/N
  std::optional<double> lmds_d_inf;  // lmds: substitute distance, default 2 * max distance
};

struct SolverSettings {
  double lambda = 1.0;
  int dim = 2;
  double tol = 1e-6;
  int max_outer = 200;
  int max_inner = 100;
  InitStrategy init = InitStrategy::aggregated;
  std::uint64_t seed = 0;
  VariantSpec variant;
  // Records the total cost after every inner iteration (costly; for diagnostics).
  bool trace_inner = false;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw Error(ErrorCode::InvalidArgument, "lambda must be finite and >= 0");
    if (dim < 1) throw Error(ErrorCode::InvalidArgument, "dim must be >= 1");
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be > 0");
    if (max_outer < 1) throw Error(ErrorCode::InvalidArgument, "max_outer must be >= 1");
    if (max_inner < 1) throw Error(ErrorCode::InvalidArgument, "max_inner must be >= 1");
    if (variant.tag == Variant::lmds) {
      if (variant.lmds_k < 1) throw Error(ErrorCode::InvalidArgument, "lmds k must be >= 1");
      if (variant.lmds_w && !(*variant.lmds_w > 0.0))
        throw Error(ErrorCode::InvalidArgument, "lmds off-neighbourhood weight must be > 0");
    }
  }
};

}  // namespace cmds
