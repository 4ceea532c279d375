#pragma once

// Roughness penalties on curves sampled over a uniform grid, and the linear
// system solved by every curve update.

#include <cmds/core.hpp>

#include <unsupported/Eigen/KroneckerProduct>

namespace cmds {

/// (T-2) x T second-difference operator, rows (1, -2, 1).
inline Matrix second_difference_operator(std::size_t T) {
  if (T < 3) throw Error(ErrorCode::GridTooShort, "second differences need T >= 3, got " + std::to_string(T));
  const auto n = static_cast<Eigen::Index>(T);
  Matrix D2 = Matrix::Zero(n - 2, n);
  for (Eigen::Index r = 0; r < n - 2; ++r) {
    D2(r, r) = 1.0;
    D2(r, r + 1) = -2.0;
    D2(r, r + 2) = 1.0;
  }
  return D2;
}

struct RoughnessOperator {
  enum class Kind { single_axis, composite };
  Matrix M;
  Kind kind = Kind::single_axis;

  std::size_t size() const { return static_cast<std::size_t>(M.rows()); }
};

/// M = D2^T D2; the zero matrix when T < 3.
inline RoughnessOperator roughness_matrix(std::size_t T) {
  const auto n = static_cast<Eigen::Index>(T);
  if (T < 3) return {Matrix::Zero(n, n), RoughnessOperator::Kind::single_axis};
  const Matrix D2 = second_difference_operator(T);
  return {D2.transpose() * D2, RoughnessOperator::Kind::single_axis};
}

/// Separable penalty on a T_alpha x T_beta grid flattened alpha-fastest:
/// M = M_beta (x) I_{T_alpha} + I_{T_beta} (x) M_alpha.
inline RoughnessOperator composite_roughness_matrix(std::size_t T_alpha, std::size_t T_beta) {
  const Matrix Ma = roughness_matrix(T_alpha).M;
  const Matrix Mb = roughness_matrix(T_beta).M;
  const auto na = static_cast<Eigen::Index>(T_alpha);
  const auto nb = static_cast<Eigen::Index>(T_beta);
  Matrix M = Eigen::kroneckerProduct(Mb, Matrix::Identity(na, na)).eval();
  M += Eigen::kroneckerProduct(Matrix::Identity(nb, nb), Ma).eval();
  return {std::move(M), RoughnessOperator::Kind::composite};
}

inline RoughnessOperator roughness_for_grid(const HyperparameterGrid& grid) {
  if (grid.two_axis()) return composite_roughness_matrix(grid.size_alpha(), grid.size_beta());
  return roughness_matrix(grid.size_alpha());
}

/// Sum over dimensions of x_a^T M x_a for a T x d curve.
inline double roughness(const Matrix& curve, const Matrix& M) {
  if (curve.rows() != M.rows())
    throw Error(ErrorCode::ShapeMismatch, "curve has " + std::to_string(curve.rows()) + " samples, penalty is " +
                                              std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
  return (curve.transpose() * M * curve).trace();
}

/// Factorization of (diag(c) (x) I_d + lambda * M (x) I_d) in the stacked curve
/// order of vectorize_curve(). The system is block diagonal across embedding
/// dimensions, so only the T x T block diag(c) + lambda * M is factorized and
/// each dimension is solved against it.
class UpdateSystem {
 public:
  UpdateSystem() = default;

  UpdateSystem(const Vector& coefficients, double lambda, const Matrix& M, std::size_t dim)
      : dim_(dim), block_(lambda * M) {
    if (coefficients.size() != M.rows())
      throw Error(ErrorCode::ShapeMismatch, "coefficient vector does not match penalty size");
    if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
    block_.diagonal() += coefficients;
    llt_.compute(block_);
    if (llt_.info() != Eigen::Success)
      throw Error(ErrorCode::FactorizationFailure, "update matrix is not positive definite");
  }

  std::size_t T() const { return static_cast<std::size_t>(block_.rows()); }
  std::size_t dim() const { return dim_; }

  /// Solves for a T x d right-hand side (one column per dimension).
  Matrix solve_curve(const Matrix& rhs) const { return llt_.solve(rhs); }

  /// Solves in stacked vector form.
  Vector solve(const Vector& rhs) const {
    const auto T = static_cast<Eigen::Index>(this->T());
    const auto d = static_cast<Eigen::Index>(dim_);
    if (rhs.size() != T * d) throw Error(ErrorCode::ShapeMismatch, "rhs length does not match system");
    // Stacked order is slice-major, i.e. a row-major T x d layout.
    const Matrix R = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        rhs.data(), T, d);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> X = llt_.solve(R);
    return Eigen::Map<const Vector>(X.data(), T * d);
  }

  /// The full (T*d) x (T*d) matrix in stacked order.
  Matrix matrix() const { return Eigen::kroneckerProduct(block_, Matrix::Identity(dim_, dim_)).eval(); }

  /// The factorized T x T block and its reconstruction from the factor.
  const Matrix& block() const { return block_; }
  Matrix reconstructed_block() const {
    const Matrix L = llt_.matrixL();
    return L * L.transpose();
  }

 private:
  std::size_t dim_ = 1;
  Matrix block_;
  Eigen::LLT<Matrix> llt_;
};

inline UpdateSystem build_update_system(double c, double lambda, const Matrix& M, std::size_t dim) {
  if (!(c > 0.0)) throw Error(ErrorCode::InvalidArgument, "diagonal coefficient must be > 0");
  return UpdateSystem(Vector::Constant(M.rows(), c), lambda, M, dim);
}

}  // namespace cmds
