#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace grw {

/// Dense real vector. The solvers and eigenvalue routines reject non-finite
/// input; the elementwise helpers do not check.
using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
///
/// Datasets are stored as d x n matrices whose columns are samples, so the
/// class offers both row spans (contiguous) and column copies.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);
  /// Builds a matrix whose j-th column is columns[j].
  static Matrix from_columns(const std::vector<Vector>& columns);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Vector column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transpose() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, std::span<const double> v);
/// a^T v without forming the transpose.
Vector transpose_times(const Matrix& a, std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
Vector subtract(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
/// Cosine of the angle between a and b; 0 when either is the zero vector.
double cosine(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> v);

/// Gram matrix F^T F of the columns of F.
Matrix gram(const Matrix& f);

struct EigenRange {
  double max;
  double min;
};

/// Largest and smallest eigenvalue of a symmetric matrix. Uses a full cyclic
/// Jacobi sweep for n <= 64; above that, Householder tridiagonalization and
/// Sturm-sequence bisection to relative accuracy tol.
EigenRange extreme_eigenvalues(const Matrix& s, double tol = 1e-12);

/// All eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
Vector symmetric_eigenvalues(const Matrix& s);

/// Cholesky solve of A x = b for symmetric positive definite A.
Vector solve_spd(const Matrix& a, std::span<const double> b);

/// Gaussian elimination with partial pivoting for a general square system.
/// Throws rank-deficient on a (numerically) zero pivot.
Vector solve_lu(const Matrix& a, std::span<const double> b);

/// The unique element of span{columns of X} whose inner products with the
/// columns equal r, computed as X * solve(X^T X, r).
Vector min_norm_span_solve(const Matrix& x, std::span<const double> r);

/// Distance from v to span{columns of X}.
double span_residual(std::span<const double> v, const Matrix& x);

/// Relative threshold below which a Gram matrix counts as singular.
inline constexpr double kRankDeficiencyRatio = 1e-12;

/// Throws rank-deficient when lambda_min(g) < kRankDeficiencyRatio * lambda_max(g).
void require_full_rank_gram(const Matrix& g);

}  // namespace grw
