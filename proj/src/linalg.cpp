#include "grw/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "grw/error.hpp"

namespace grw {

namespace {

constexpr std::size_t kJacobiMaxDim = 64;
constexpr std::size_t kJacobiMaxSweeps = 100;
constexpr std::size_t kBisectionCap = 200;

void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) fail(ErrorKind::InvalidArgument, std::string(what) + " has non-finite entries");
}

void require_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) fail(ErrorKind::InvalidArgument, std::string(what) + " has non-finite entries");
}

void require_symmetric(const Matrix& s) {
  if (s.rows() != s.cols()) fail(ErrorKind::InvalidArgument, "matrix is not square");
  double scale = 1.0;
  for (double v : s.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = i + 1; j < s.cols(); ++j) {
      if (std::abs(s(i, j) - s(j, i)) > 1e-10 * scale) {
        fail(ErrorKind::InvalidArgument, "matrix is not symmetric");
      }
    }
  }
}

// Cyclic Jacobi rotations until the off-diagonal mass vanishes; returns the
// diagonal (unsorted).
Vector jacobi_diagonalize(Matrix a) {
  const std::size_t n = a.rows();
  double total = 0.0;
  for (double v : a.data()) total += v * v;
  for (std::size_t sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
    }
    if (off <= 1e-30 * total || off == 0.0) {
      Vector diag(n);
      for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
      return diag;
    }
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
      }
    }
  }
  fail(ErrorKind::NoConvergence, "Jacobi sweep cap reached");
}

// Householder reduction of a symmetric matrix to tridiagonal form; returns
// the diagonal d and the subdiagonal e (e[0] unused).
void tridiagonalize(Matrix a, Vector& d, Vector& e) {
  const std::size_t n = a.rows();
  d.assign(n, 0.0);
  e.assign(n, 0.0);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double alpha = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) alpha += a(i, k) * a(i, k);
    alpha = std::sqrt(alpha);
    if (alpha == 0.0) continue;
    if (a(k + 1, k) > 0.0) alpha = -alpha;
    Vector v(n, 0.0);
    v[k + 1] = a(k + 1, k) - alpha;
    for (std::size_t i = k + 2; i < n; ++i) v[i] = a(i, k);
    const double vv = dot(v, v);
    if (vv == 0.0) continue;
    // a <- H a H with H = I - 2 v v^T / (v^T v)
    Vector p = a * v;
    for (double& x : p) x *= 2.0 / vv;
    const double kappa = dot(v, p) / vv;
    Vector w = p;
    axpy(-kappa, v, w);
    for (std::size_t i = k; i < n; ++i) {
      for (std::size_t j = k; j < n; ++j) a(i, j) -= v[i] * w[j] + w[i] * v[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) d[i] = a(i, i);
  for (std::size_t i = 1; i < n; ++i) e[i] = a(i, i - 1);
}

// Number of eigenvalues of the tridiagonal (d, e) strictly below x.
std::size_t sturm_count(const Vector& d, const Vector& e, double x) {
  std::size_t count = 0;
  double q = 1.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double off = i == 0 ? 0.0 : e[i] * e[i] / q;
    q = d[i] - x - off;
    if (q == 0.0) q = -1e-300;
    if (q < 0.0) ++count;
  }
  return count;
}

// k-th smallest eigenvalue (0-based) of the tridiagonal by bisection.
double bisect_eigenvalue(const Vector& d, const Vector& e, std::size_t k, double tol) {
  double lo = INFINITY;
  double hi = -INFINITY;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = (i > 0 ? std::abs(e[i]) : 0.0) + (i + 1 < d.size() ? std::abs(e[i + 1]) : 0.0);
    lo = std::min(lo, d[i] - r);
    hi = std::max(hi, d[i] + r);
  }
  const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
  for (std::size_t it = 0; it < kBisectionCap && hi - lo > tol * scale; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (sturm_count(d, e, mid) > k) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) fail(ErrorKind::InvalidArgument, "matrix data length != rows*cols");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) fail(ErrorKind::InvalidArgument, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::from_columns(const std::vector<Vector>& columns) {
  if (columns.empty()) return {};
  Matrix m(columns.front().size(), columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].size() != m.rows()) fail(ErrorKind::InvalidArgument, "columns differ in length");
    m.set_column(j, columns[j]);
  }
  return m;
}

Vector Matrix::column(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::set_column(std::size_t c, std::span<const double> values) {
  if (values.size() != rows_) fail(ErrorKind::InvalidArgument, "column length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

bool Matrix::all_finite() const { return grw::all_finite(data_); }

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) fail(ErrorKind::InvalidArgument, "matrix product dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      axpy(aik, b.row(k), out_row);
    }
  }
  return out;
}

Vector operator*(const Matrix& a, std::span<const double> v) {
  if (a.cols() != v.size()) fail(ErrorKind::InvalidArgument, "matrix-vector dimension mismatch");
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), v);
  return out;
}

Vector transpose_times(const Matrix& a, std::span<const double> v) {
  if (a.rows() != v.size()) fail(ErrorKind::InvalidArgument, "transpose product dimension mismatch");
  Vector out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) axpy(v[i], a.row(i), out);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::InvalidArgument, "dot product length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vector subtract(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::InvalidArgument, "subtract length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) fail(ErrorKind::InvalidArgument, "axpy length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Matrix gram(const Matrix& f) {
  if (f.rows() == 0 || f.cols() == 0) fail(ErrorKind::InvalidArgument, "gram of an empty matrix");
  require_finite(f, "gram input");
  const std::size_t n = f.cols();
  Matrix g(n, n);
  // Accumulate row by row so the inner loop stays contiguous.
  for (std::size_t r = 0; r < f.rows(); ++r) {
    auto row = f.row(r);
    for (std::size_t i = 0; i < n; ++i) {
      const double fi = row[i];
      if (fi == 0.0) continue;
      for (std::size_t j = i; j < n; ++j) g(i, j) += fi * row[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  }
  return g;
}

Vector symmetric_eigenvalues(const Matrix& s) {
  require_finite(s, "eigenvalue input");
  require_symmetric(s);
  Vector eig = jacobi_diagonalize(s);
  std::sort(eig.begin(), eig.end());
  return eig;
}

EigenRange extreme_eigenvalues(const Matrix& s, double tol) {
  require_finite(s, "eigenvalue input");
  require_symmetric(s);
  if (s.rows() == 0) fail(ErrorKind::InvalidArgument, "empty matrix");
  if (s.rows() <= kJacobiMaxDim) {
    Vector eig = jacobi_diagonalize(s);
    auto [lo, hi] = std::minmax_element(eig.begin(), eig.end());
    return {*hi, *lo};
  }
  Vector d;
  Vector e;
  tridiagonalize(s, d, e);
  return {bisect_eigenvalue(d, e, s.rows() - 1, tol), bisect_eigenvalue(d, e, 0, tol)};
}

Vector solve_spd(const Matrix& a, std::span<const double> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) fail(ErrorKind::InvalidArgument, "solve_spd dimension mismatch");
  require_finite(a, "solve_spd matrix");
  require_finite(b, "solve_spd right-hand side");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) fail(ErrorKind::NotPositiveDefinite, "non-positive Cholesky pivot at column " + std::to_string(j));
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / ljj;
    }
  }
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * y[k];
    y[i] = v / l(i, i);
  }
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double v = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) v -= l(k, ii) * x[k];
    x[ii] = v / l(ii, ii);
  }
  return x;
}

Vector solve_lu(const Matrix& a, std::span<const double> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) fail(ErrorKind::InvalidArgument, "solve_lu dimension mismatch");
  require_finite(a, "solve_lu matrix");
  require_finite(b, "solve_lu right-hand side");
  Matrix m = a;
  Vector x(b.begin(), b.end());
  double scale = 0.0;
  for (double v : m.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(m(r, col)) > std::abs(m(pivot, col))) pivot = r;
    }
    if (!(std::abs(m(pivot, col)) > 1e-14 * scale)) fail(ErrorKind::RankDeficient, "singular matrix in solve_lu");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m(pivot, c), m(col, c));
      std::swap(x[pivot], x[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = m(r, col) / m(col, col);
      if (factor == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) m(r, c) -= factor * m(col, c);
      x[r] -= factor * x[col];
    }
  }
  for (std::size_t r = n; r-- > 0;) {
    double v = x[r];
    for (std::size_t c = r + 1; c < n; ++c) v -= m(r, c) * x[c];
    x[r] = v / m(r, r);
  }
  return x;
}

void require_full_rank_gram(const Matrix& g) {
  const EigenRange range = extreme_eigenvalues(g);
  if (!(range.max > 0.0) || range.min < kRankDeficiencyRatio * range.max) {
    fail(ErrorKind::RankDeficient, "Gram matrix is singular (lambda_min=" + std::to_string(range.min) +
                                       ", lambda_max=" + std::to_string(range.max) + ")");
  }
}

Vector min_norm_span_solve(const Matrix& x, std::span<const double> r) {
  if (x.cols() != r.size()) fail(ErrorKind::InvalidArgument, "min_norm_span_solve dimension mismatch");
  const Matrix g = gram(x);
  require_full_rank_gram(g);
  return x * solve_spd(g, r);
}

double span_residual(std::span<const double> v, const Matrix& x) {
  if (x.rows() != v.size()) fail(ErrorKind::InvalidArgument, "span_residual dimension mismatch");
  const Matrix g = gram(x);
  require_full_rank_gram(g);
  const Vector coeffs = solve_spd(g, transpose_times(x, v));
  const Vector projection = x * coeffs;
  return norm2(subtract(v, projection));
}

}  // namespace grw
