#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "grw/linalg.hpp"
#include "grw/models.hpp"
#include "grw/reweighting.hpp"

namespace grw {

/// theta0 + the span element that fits Y - f0 exactly. For a plain linear
/// model pass f0_at_X = X^T theta0.
Vector min_norm_interpolator(const Matrix& x, std::span<const double> y, std::span<const double> theta0,
                             std::span<const double> f0_at_x);

/// Minimizer of sum_i q_i ell_sq(f_i, y_i) + mu/2 ||theta - theta0||^2 for a
/// model linear in theta, via the n x n dual system
///   theta* = theta0 + X Q solve(X^T X Q + mu I, Y - f0).
Vector ridge_closed_form(const Matrix& x, std::span<const double> y, std::span<const double> q, double mu,
                         std::span<const double> theta0, std::span<const double> f0_at_x);

struct MarginSolution {
  Vector direction;  // unit norm
  double margin = 0.0;
  std::vector<std::size_t> support_set;
  /// Dual variables of min ||w||^2 / 2 s.t. y_i <w, x_i> >= 1; w = sum_i alpha_i y_i x_i.
  Vector alphas;
};

/// A separating direction found by the perceptron (no bias), or nullopt when
/// none was found within max_updates.
std::optional<Vector> perceptron_separator(const Matrix& x, std::span<const double> y,
                                           std::size_t max_updates = 1'000'000);

/// Hard-margin direction argmax_{||u|| = 1} min_i y_i <u, x_i>. Checks
/// separability first, solves the dual by accelerated projected gradient and
/// polishes the result on the detected active set.
MarginSolution max_margin_direction(const Matrix& x, std::span<const double> y);

/// Exact solver for n <= 12: enumerates candidate support sets and keeps the
/// KKT-feasible one.
MarginSolution max_margin_enumerate(const Matrix& x, std::span<const double> y);

/// Limiting NTK of the zero-output-initialized network.
struct KernelSpec {
  std::size_t depth = 1;
  double beta = 0.0;
  Activation activation = Activation::Erf;

  static KernelSpec for_architecture(const Architecture& arch);
};

/// Closed form through the arcsine expectation of erf; Tanh throws unsupported.
double ntk_limiting_kernel(const KernelSpec& spec, std::span<const double> x, std::span<const double> xp);
Matrix ntk_limiting_gram(const KernelSpec& spec, const Matrix& x);

/// Monte-Carlo estimate of the same kernel. Works for any activation; every
/// Gaussian expectation uses `samples` draws from a generator seeded by seed.
double ntk_limiting_kernel_mc(const KernelSpec& spec, std::span<const double> x, std::span<const double> xp,
                              std::size_t samples, std::uint64_t seed);

/// E[erf(u) erf(v)] for (u, v) ~ N(0, [[s11, s12], [s12, s22]]).
double erf_pair_expectation(double s11, double s12, double s22);

/// <grad f(x; theta0), grad f(x'; theta0)>.
double empirical_ntk(const LinearizedModel& lin, std::span<const double> x, std::span<const double> xp);
Matrix empirical_ntk_gram(const LinearizedModel& lin, const Matrix& x);

struct RobustRisks {
  double worst_group = 0.0;
  double cvar = 0.0;
  double balanced = 0.0;
};

RobustRisks robust_risks(std::span<const double> per_sample_losses, const GroupInfo& groups, double alpha);

}  // namespace grw
