#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "grw/linalg.hpp"

namespace grw {

/// Group membership of every sample. Labels are 0-based here (group k of the
/// text is label k-1).
struct GroupInfo {
  std::vector<std::size_t> labels;
  std::vector<std::size_t> sizes;

  std::size_t num_groups() const noexcept { return sizes.size(); }
  std::size_t num_samples() const noexcept { return labels.size(); }

  /// Builds sizes from labels; every group in [0, K) must be nonempty.
  static GroupInfo from_labels(std::vector<std::size_t> labels);
  /// Contiguous blocks: sizes (5, 1) gives labels 0,0,0,0,0,1.
  static GroupInfo from_sizes(const std::vector<std::size_t>& sizes);

  void validate() const;
};

struct WeightState {
  Vector q;
  std::optional<Vector> gdro_g;
  std::size_t step = 0;
};

/// Largest deviation of q (and g, when present) from the simplex: the maximum of
/// |sum - 1| and the most negative entry.
double simplex_violation(const WeightState& state);

WeightState erm_weights(std::size_t n);
/// q_i = 1 / (K n_k) for sample i in group k.
WeightState iw_weights(const GroupInfo& groups);

/// Group DRO starting point: uniform group weights, q_i = g_k / n_k.
WeightState gdro_init(const GroupInfo& groups);
/// g_k <- g_k exp(nu R_k) renormalized, then q_i = g_k / n_k.
WeightState gdro_step(const WeightState& state, std::span<const double> group_risks, double nu,
                      const GroupInfo& groups);

/// Uniform weight on the ceil(alpha n) largest losses; ties go to the lowest index.
WeightState cvar_weights(std::span<const double> per_sample_losses, double alpha);

/// Mean loss within each group.
Vector group_risks(std::span<const double> per_sample_losses, const GroupInfo& groups);

struct Assumption1Report {
  bool satisfied = false;
  double q_star = 0.0;
  std::size_t t_eps = 0;
};

inline constexpr std::size_t kAssumption1Window = 1000;
inline constexpr double kAssumption1Tol = 1e-4;

/// Checks that a weight history settles: over the last `window` entries every
/// coordinate stays within tol of the trailing mean and that mean is strictly
/// positive. t_eps is the first index from which all later entries stay within
/// tol of the trailing mean.
Assumption1Report check_assumption1(const std::vector<Vector>& weight_history,
                                    std::size_t window = kAssumption1Window, double tol = kAssumption1Tol);

struct ErmScheme {
  friend bool operator==(const ErmScheme&, const ErmScheme&) = default;
};
struct IwScheme {
  friend bool operator==(const IwScheme&, const IwScheme&) = default;
};
struct GdroScheme {
  double nu = 0.01;
  friend bool operator==(const GdroScheme&, const GdroScheme&) = default;
};
struct CvarScheme {
  double alpha = 0.5;
  friend bool operator==(const CvarScheme&, const CvarScheme&) = default;
};

using Scheme = std::variant<ErmScheme, IwScheme, GdroScheme, CvarScheme>;

bool is_dynamic(const Scheme& scheme);

/// "erm", "iw", "gdro:<nu>" or "cvar:<alpha>".
Scheme parse_scheme(std::string_view text);
std::string to_string(const Scheme& scheme);

/// Weights before the first step.
WeightState initial_weights(const Scheme& scheme, const GroupInfo& groups);

/// Weights to use for the step from the current iterate, given its per-sample
/// losses. Static schemes return `state` unchanged apart from the step counter.
WeightState next_weights(const Scheme& scheme, const WeightState& state, std::span<const double> per_sample_losses,
                         const GroupInfo& groups);

}  // namespace grw
