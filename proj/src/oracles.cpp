#include "grw/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "grw/error.hpp"

namespace grw {

namespace {

constexpr std::size_t kDualIterationCap = 100'000;
constexpr std::size_t kEnumerateMaxSamples = 12;
constexpr double kDegenerateMargin = 1e-12;

void require_labels(std::span<const double> y, std::size_t n) {
  if (y.size() != n) fail(ErrorKind::InvalidArgument, "one label per sample expected");
  for (double v : y) {
    if (v != 1.0 && v != -1.0) fail(ErrorKind::InvalidArgument, "labels must be -1 or +1");
  }
}

// Columns y_i x_i.
Matrix signed_samples(const Matrix& x, std::span<const double> y) {
  Matrix z = x;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t i = 0; i < row.size(); ++i) row[i] *= y[i];
  }
  return z;
}

Matrix submatrix(const Matrix& k, const std::vector<std::size_t>& idx) {
  Matrix s(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = 0; b < idx.size(); ++b) s(a, b) = k(idx[a], idx[b]);
  }
  return s;
}

// Solves K_SS a = 1 and scatters a into a length-n vector. nullopt when the
// subsystem is singular or the solution is not (numerically) nonnegative.
std::optional<Vector> equal_margin_alphas(const Matrix& k, const std::vector<std::size_t>& support) {
  if (support.empty()) return std::nullopt;
  const Matrix sub = submatrix(k, support);
  const EigenRange range = extreme_eigenvalues(sub);
  if (!(range.max > 0.0) || range.min < kRankDeficiencyRatio * range.max) return std::nullopt;
  const Vector a = solve_spd(sub, Vector(support.size(), 1.0));
  const double scale = *std::max_element(a.begin(), a.end());
  Vector alphas(k.rows(), 0.0);
  for (std::size_t s = 0; s < support.size(); ++s) {
    if (a[s] < -1e-12 * std::abs(scale)) return std::nullopt;
    alphas[support[s]] = std::max(a[s], 0.0);
  }
  return alphas;
}

// Every constraint y_i <w, x_i> = (K alpha)_i >= 1 holds up to tol.
bool primal_feasible(const Matrix& k, const Vector& alphas, double tol) {
  const Vector margins = k * alphas;
  return std::all_of(margins.begin(), margins.end(), [&](double m) { return m >= 1.0 - tol; });
}

double dual_sum(const Vector& alphas) {
  double s = 0.0;
  for (double a : alphas) s += a;
  return s;
}

MarginSolution finish(const Matrix& x, std::span<const double> y, Vector alphas) {
  const Matrix z = signed_samples(x, y);
  Vector w = z * alphas;
  const double norm = norm2(w);
  if (!(norm > 0.0)) fail(ErrorKind::NotSeparable, "max-margin solution collapsed to zero");
  for (double& v : w) v /= norm;
  MarginSolution sol;
  sol.margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.cols(); ++i) sol.margin = std::min(sol.margin, y[i] * dot(w, x.column(i)));
  if (sol.margin < kDegenerateMargin) fail(ErrorKind::NotSeparable, "max margin is degenerate");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (alphas[i] > 0.0) sol.support_set.push_back(i);
  }
  sol.direction = std::move(w);
  sol.alphas = std::move(alphas);
  return sol;
}

// Accelerated projected gradient on min 1/2 a^T K a - 1^T a, a >= 0, with
// adaptive restart.
Vector dual_projected_gradient(const Matrix& k) {
  const std::size_t n = k.rows();
  const double lipschitz = extreme_eigenvalues(k).max;
  Vector alpha(n, 0.0);
  Vector look = alpha;
  double t = 1.0;
  for (std::size_t it = 0; it < kDualIterationCap; ++it) {
    const Vector grad = k * look;
    Vector next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = std::max(0.0, look[i] - (grad[i] - 1.0) / lipschitz);
    double change = 0.0;
    double size = 0.0;
    double direction = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      change = std::max(change, std::abs(next[i] - alpha[i]));
      size = std::max(size, std::abs(next[i]));
      direction += (grad[i] - 1.0) * (next[i] - alpha[i]);
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if (direction > 0.0) {
      look = next;
      t = 1.0;
    } else {
      for (std::size_t i = 0; i < n; ++i) look[i] = next[i] + (t - 1.0) / t_next * (next[i] - alpha[i]);
      t = t_next;
    }
    alpha = std::move(next);
    if (change <= 1e-15 * std::max(1.0, size)) break;
  }
  return alpha;
}

}  // namespace

Vector min_norm_interpolator(const Matrix& x, std::span<const double> y, std::span<const double> theta0,
                             std::span<const double> f0_at_x) {
  if (y.size() != x.cols() || f0_at_x.size() != x.cols() || theta0.size() != x.rows()) {
    fail(ErrorKind::InvalidArgument, "min_norm_interpolator dimension mismatch");
  }
  Vector theta(theta0.begin(), theta0.end());
  axpy(1.0, min_norm_span_solve(x, subtract(y, f0_at_x)), theta);
  return theta;
}

Vector ridge_closed_form(const Matrix& x, std::span<const double> y, std::span<const double> q, double mu,
                         std::span<const double> theta0, std::span<const double> f0_at_x) {
  if (!(mu > 0.0) || !std::isfinite(mu)) fail(ErrorKind::InvalidArgument, "ridge mu must be > 0");
  const std::size_t n = x.cols();
  if (y.size() != n || q.size() != n || f0_at_x.size() != n || theta0.size() != x.rows()) {
    fail(ErrorKind::InvalidArgument, "ridge_closed_form dimension mismatch");
  }
  Matrix system = gram(x);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) system(i, j) *= q[j];
    system(i, i) += mu;
  }
  Vector s = solve_lu(system, subtract(y, f0_at_x));
  for (std::size_t i = 0; i < n; ++i) s[i] *= q[i];
  Vector theta(theta0.begin(), theta0.end());
  axpy(1.0, x * s, theta);
  return theta;
}

std::optional<Vector> perceptron_separator(const Matrix& x, std::span<const double> y, std::size_t max_updates) {
  require_labels(y, x.cols());
  const std::size_t n = x.cols();
  std::vector<Vector> columns;
  for (std::size_t i = 0; i < n; ++i) columns.push_back(x.column(i));
  Vector w(x.rows(), 0.0);
  std::size_t updates = 0;
  while (true) {
    bool clean = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] * dot(w, columns[i]) > 0.0) continue;
      if (updates == max_updates) return std::nullopt;
      axpy(y[i], columns[i], w);
      ++updates;
      clean = false;
    }
    if (clean) return w;
  }
}

MarginSolution max_margin_direction(const Matrix& x, std::span<const double> y) {
  require_labels(y, x.cols());
  if (!x.all_finite()) fail(ErrorKind::InvalidArgument, "non-finite sample");
  if (!perceptron_separator(x, y)) fail(ErrorKind::NotSeparable, "perceptron found no separating direction");
  const Matrix k = gram(signed_samples(x, y));
  Vector alpha = dual_projected_gradient(k);

  // Polish: re-solve the equal-margin system on the support the iterative
  // solution points at and keep it if it satisfies the KKT conditions.
  const double top = *std::max_element(alpha.begin(), alpha.end());
  const Vector margins = k * alpha;
  std::vector<std::size_t> by_alpha;
  std::vector<std::size_t> by_margin;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] > 1e-8 * top) by_alpha.push_back(i);
    if (margins[i] <= 1.0 + 1e-6) by_margin.push_back(i);
  }
  std::optional<Vector> best;
  for (const auto* support : {&by_alpha, &by_margin}) {
    auto candidate = equal_margin_alphas(k, *support);
    if (!candidate || !primal_feasible(k, *candidate, 1e-10)) continue;
    if (!best || dual_sum(*candidate) < dual_sum(*best)) best = std::move(candidate);
  }
  if (best) return finish(x, y, std::move(*best));
  for (double& a : alpha) {
    if (a <= 1e-10 * top) a = 0.0;
  }
  return finish(x, y, std::move(alpha));
}

MarginSolution max_margin_enumerate(const Matrix& x, std::span<const double> y) {
  require_labels(y, x.cols());
  const std::size_t n = x.cols();
  if (n == 0 || n > kEnumerateMaxSamples) {
    fail(ErrorKind::InvalidArgument, "subset enumeration supports 1..12 samples");
  }
  const Matrix k = gram(signed_samples(x, y));
  std::optional<Vector> best;
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) support.push_back(i);
    }
    auto candidate = equal_margin_alphas(k, support);
    if (!candidate || !primal_feasible(k, *candidate, 1e-9)) continue;
    if (!best || dual_sum(*candidate) < dual_sum(*best)) best = std::move(candidate);
  }
  if (!best) fail(ErrorKind::NotSeparable, "no KKT-feasible support set");
  return finish(x, y, std::move(*best));
}

KernelSpec KernelSpec::for_architecture(const Architecture& arch) {
  return KernelSpec{arch.depth(), arch.beta, arch.activation};
}

double erf_pair_expectation(double s11, double s12, double s22) {
  const double denom = std::sqrt((1.0 + 2.0 * s11) * (1.0 + 2.0 * s22));
  const double arg = std::clamp(2.0 * s12 / denom, -1.0, 1.0);
  return 2.0 / std::numbers::pi * std::asin(arg);
}

double ntk_limiting_kernel(const KernelSpec& spec, std::span<const double> x, std::span<const double> xp) {
  if (spec.activation != Activation::Erf) {
    fail(ErrorKind::Unsupported, "closed-form limiting kernel exists only for erf; use the Monte-Carlo estimate");
  }
  if (spec.depth == 0) fail(ErrorKind::InvalidArgument, "limiting kernel needs depth >= 1");
  if (x.empty() || x.size() != xp.size()) fail(ErrorKind::InvalidArgument, "kernel inputs must share a dimension");
  const double d0 = static_cast<double>(x.size());
  const double b2 = spec.beta * spec.beta;
  double s11 = dot(x, x) / d0 + b2;
  double s22 = dot(xp, xp) / d0 + b2;
  double s12 = dot(x, xp) / d0 + b2;
  for (std::size_t l = 1; l < spec.depth; ++l) {
    const double n11 = erf_pair_expectation(s11, s11, s11) + b2;
    const double n22 = erf_pair_expectation(s22, s22, s22) + b2;
    const double n12 = erf_pair_expectation(s11, s12, s22) + b2;
    s11 = n11;
    s22 = n22;
    s12 = n12;
  }
  return erf_pair_expectation(s11, s12, s22) + b2;
}

Matrix ntk_limiting_gram(const KernelSpec& spec, const Matrix& x) {
  const std::size_t n = x.cols();
  Matrix g(n, n);
  std::vector<Vector> columns;
  for (std::size_t i = 0; i < n; ++i) columns.push_back(x.column(i));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      g(i, j) = ntk_limiting_kernel(spec, columns[i], columns[j]);
      g(j, i) = g(i, j);
    }
  }
  return g;
}

double ntk_limiting_kernel_mc(const KernelSpec& spec, std::span<const double> x, std::span<const double> xp,
                              std::size_t samples, std::uint64_t seed) {
  if (spec.depth == 0) fail(ErrorKind::InvalidArgument, "limiting kernel needs depth >= 1");
  if (samples == 0) fail(ErrorKind::InvalidArgument, "Monte-Carlo estimate needs samples >= 1");
  if (x.empty() || x.size() != xp.size()) fail(ErrorKind::InvalidArgument, "kernel inputs must share a dimension");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d0 = static_cast<double>(x.size());
  const double b2 = spec.beta * spec.beta;
  double s11 = dot(x, x) / d0 + b2;
  double s22 = dot(xp, xp) / d0 + b2;
  double s12 = dot(x, xp) / d0 + b2;
  for (std::size_t l = 1; l <= spec.depth; ++l) {
    const double a = std::sqrt(std::max(s11, 0.0));
    const double c = a > 0.0 ? s12 / a : 0.0;
    const double e = std::sqrt(std::max(s22 - c * c, 0.0));
    double m11 = 0.0;
    double m22 = 0.0;
    double m12 = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
      const double z1 = normal(rng);
      const double z2 = normal(rng);
      const double su = activate(spec.activation, a * z1);
      const double sv = activate(spec.activation, c * z1 + e * z2);
      m11 += su * su;
      m22 += sv * sv;
      m12 += su * sv;
    }
    const double inv = 1.0 / static_cast<double>(samples);
    s11 = m11 * inv + b2;
    s22 = m22 * inv + b2;
    s12 = m12 * inv + b2;
  }
  return s12;
}

double empirical_ntk(const LinearizedModel& lin, std::span<const double> x, std::span<const double> xp) {
  return dot(lin.features(x), lin.features(xp));
}

Matrix empirical_ntk_gram(const LinearizedModel& lin, const Matrix& x) { return gram(feature_matrix(lin, x)); }

RobustRisks robust_risks(std::span<const double> per_sample_losses, const GroupInfo& groups, double alpha) {
  const Vector means = group_risks(per_sample_losses, groups);
  RobustRisks out;
  out.worst_group = *std::max_element(means.begin(), means.end());
  double total = 0.0;
  for (double m : means) total += m;
  out.balanced = total / static_cast<double>(means.size());
  out.cvar = dot(cvar_weights(per_sample_losses, alpha).q, per_sample_losses);
  return out;
}

}  // namespace grw
