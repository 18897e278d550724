#include "grw/reweighting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grw/error.hpp"
#include "parse_util.hpp"

namespace grw {

namespace {

// ceil(alpha * n) with a little slack so alpha = 2/3, n = 3 gives 2, not 3.
std::size_t cvar_support_size(double alpha, std::size_t n) {
  const double raw = std::ceil(alpha * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
}

Vector q_from_group_weights(const Vector& g, const GroupInfo& groups) {
  Vector q(groups.num_samples());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const std::size_t k = groups.labels[i];
    q[i] = g[k] / static_cast<double>(groups.sizes[k]);
  }
  return q;
}

void normalize(Vector& v) {
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x /= total;
}

double vector_violation(const Vector& v) {
  double sum = 0.0;
  double worst = 0.0;
  for (double x : v) {
    sum += x;
    worst = std::max(worst, -x);
  }
  return std::max(worst, std::abs(sum - 1.0));
}

}  // namespace

GroupInfo GroupInfo::from_labels(std::vector<std::size_t> labels) {
  GroupInfo info;
  if (labels.empty()) fail(ErrorKind::InvalidArgument, "group labels are empty");
  const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
  info.sizes.assign(k, 0);
  for (std::size_t label : labels) ++info.sizes[label];
  info.labels = std::move(labels);
  info.validate();
  return info;
}

GroupInfo GroupInfo::from_sizes(const std::vector<std::size_t>& sizes) {
  std::vector<std::size_t> labels;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] == 0) fail(ErrorKind::InvalidArgument, "group " + std::to_string(k) + " is empty");
    labels.insert(labels.end(), sizes[k], k);
  }
  return from_labels(std::move(labels));
}

void GroupInfo::validate() const {
  if (labels.empty() || sizes.empty()) fail(ErrorKind::InvalidArgument, "group info is empty");
  std::vector<std::size_t> counted(sizes.size(), 0);
  for (std::size_t label : labels) {
    if (label >= sizes.size()) fail(ErrorKind::InvalidArgument, "group label out of range");
    ++counted[label];
  }
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] == 0) fail(ErrorKind::InvalidArgument, "group " + std::to_string(k) + " is empty");
    if (counted[k] != sizes[k]) fail(ErrorKind::InvalidArgument, "group sizes do not match labels");
  }
}

double simplex_violation(const WeightState& state) {
  double v = vector_violation(state.q);
  if (state.gdro_g) v = std::max(v, vector_violation(*state.gdro_g));
  return v;
}

WeightState erm_weights(std::size_t n) {
  if (n == 0) fail(ErrorKind::InvalidArgument, "erm_weights needs n >= 1");
  return WeightState{Vector(n, 1.0 / static_cast<double>(n)), std::nullopt, 0};
}

WeightState iw_weights(const GroupInfo& groups) {
  groups.validate();
  const Vector g(groups.num_groups(), 1.0 / static_cast<double>(groups.num_groups()));
  return WeightState{q_from_group_weights(g, groups), std::nullopt, 0};
}

WeightState gdro_init(const GroupInfo& groups) {
  groups.validate();
  Vector g(groups.num_groups(), 1.0 / static_cast<double>(groups.num_groups()));
  Vector q = q_from_group_weights(g, groups);
  return WeightState{std::move(q), std::move(g), 0};
}

WeightState gdro_step(const WeightState& state, std::span<const double> group_risks, double nu,
                      const GroupInfo& groups) {
  if (!(nu > 0.0) || !std::isfinite(nu)) fail(ErrorKind::InvalidArgument, "Group DRO step size must be > 0");
  if (!state.gdro_g) fail(ErrorKind::InvalidArgument, "weight state carries no group weights");
  const Vector& g = *state.gdro_g;
  if (group_risks.size() != g.size() || g.size() != groups.num_groups()) {
    fail(ErrorKind::InvalidArgument, "group risk count does not match the number of groups");
  }
  // Work in the log domain so long runs with large cumulative risks cannot overflow.
  Vector logits(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!std::isfinite(group_risks[k])) fail(ErrorKind::InvalidArgument, "non-finite group risk");
    logits[k] = std::log(g[k]) + nu * group_risks[k];
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  Vector next(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) next[k] = std::exp(logits[k] - top);
  normalize(next);
  Vector q = q_from_group_weights(next, groups);
  normalize(q);
  return WeightState{std::move(q), std::move(next), state.step + 1};
}

WeightState cvar_weights(std::span<const double> per_sample_losses, double alpha) {
  const std::size_t n = per_sample_losses.size();
  if (n == 0) fail(ErrorKind::InvalidArgument, "cvar_weights needs at least one loss");
  if (!(alpha > 0.0 && alpha <= 1.0)) fail(ErrorKind::InvalidArgument, "CVaR alpha must lie in (0, 1]");
  if (!all_finite(per_sample_losses)) fail(ErrorKind::InvalidArgument, "non-finite sample loss");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return per_sample_losses[a] > per_sample_losses[b]; });
  const std::size_t m = cvar_support_size(alpha, n);
  Vector q(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) q[order[r]] = 1.0 / static_cast<double>(m);
  return WeightState{std::move(q), std::nullopt, 0};
}

Vector group_risks(std::span<const double> per_sample_losses, const GroupInfo& groups) {
  if (per_sample_losses.size() != groups.num_samples()) {
    fail(ErrorKind::InvalidArgument, "one loss per sample expected");
  }
  Vector risks(groups.num_groups(), 0.0);
  for (std::size_t i = 0; i < per_sample_losses.size(); ++i) risks[groups.labels[i]] += per_sample_losses[i];
  for (std::size_t k = 0; k < risks.size(); ++k) risks[k] /= static_cast<double>(groups.sizes[k]);
  return risks;
}

Assumption1Report check_assumption1(const std::vector<Vector>& weight_history, std::size_t window, double tol) {
  Assumption1Report report;
  if (weight_history.empty()) return report;
  const std::size_t len = weight_history.size();
  const std::size_t dim = weight_history.front().size();
  window = std::clamp<std::size_t>(window, 1, len);

  Vector mean(dim, 0.0);
  for (std::size_t t = len - window; t < len; ++t) {
    if (weight_history[t].size() != dim) fail(ErrorKind::InvalidArgument, "weight history has ragged entries");
    axpy(1.0 / static_cast<double>(window), weight_history[t], mean);
  }
  auto deviation = [&](std::size_t t) {
    double worst = 0.0;
    for (std::size_t i = 0; i < dim; ++i) worst = std::max(worst, std::abs(weight_history[t][i] - mean[i]));
    return worst;
  };

  bool settled = true;
  for (std::size_t t = len - window; t < len; ++t) settled = settled && deviation(t) <= tol;

  std::size_t start = len;
  while (start > 0 && deviation(start - 1) <= tol) --start;
  report.t_eps = start;

  const double min_mean = *std::min_element(mean.begin(), mean.end());
  report.q_star = min_mean > tol ? min_mean : 0.0;
  report.satisfied = settled && report.q_star > 0.0;
  return report;
}

bool is_dynamic(const Scheme& scheme) {
  return std::holds_alternative<GdroScheme>(scheme) || std::holds_alternative<CvarScheme>(scheme);
}

Scheme parse_scheme(std::string_view text) {
  const auto parts = detail::split(text, ':');
  if (parts.size() == 1 && parts[0] == "erm") return ErmScheme{};
  if (parts.size() == 1 && parts[0] == "iw") return IwScheme{};
  if (parts.size() == 2 && parts[0] == "gdro") {
    const double nu = detail::parse_double(parts[1]);
    if (!(nu > 0.0) || !std::isfinite(nu)) fail(ErrorKind::InvalidArgument, "gdro step size must be > 0");
    return GdroScheme{nu};
  }
  if (parts.size() == 2 && parts[0] == "cvar") {
    const double alpha = detail::parse_double(parts[1]);
    if (!(alpha > 0.0 && alpha <= 1.0)) fail(ErrorKind::InvalidArgument, "cvar alpha must lie in (0, 1]");
    return CvarScheme{alpha};
  }
  fail(ErrorKind::InvalidArgument, "unknown scheme '" + std::string(text) + "'");
}

std::string to_string(const Scheme& scheme) {
  if (std::holds_alternative<ErmScheme>(scheme)) return "erm";
  if (std::holds_alternative<IwScheme>(scheme)) return "iw";
  if (const auto* g = std::get_if<GdroScheme>(&scheme)) return "gdro:" + detail::format_short(g->nu);
  return "cvar:" + detail::format_short(std::get<CvarScheme>(scheme).alpha);
}

WeightState initial_weights(const Scheme& scheme, const GroupInfo& groups) {
  if (std::holds_alternative<ErmScheme>(scheme)) return erm_weights(groups.num_samples());
  if (std::holds_alternative<IwScheme>(scheme)) return iw_weights(groups);
  if (std::holds_alternative<GdroScheme>(scheme)) return gdro_init(groups);
  // CVaR has no state of its own; start from uniform weights.
  return erm_weights(groups.num_samples());
}

WeightState next_weights(const Scheme& scheme, const WeightState& state, std::span<const double> per_sample_losses,
                         const GroupInfo& groups) {
  if (const auto* g = std::get_if<GdroScheme>(&scheme)) {
    return gdro_step(state, group_risks(per_sample_losses, groups), g->nu, groups);
  }
  if (const auto* c = std::get_if<CvarScheme>(&scheme)) {
    WeightState next = cvar_weights(per_sample_losses, c->alpha);
    next.step = state.step + 1;
    return next;
  }
  WeightState next = state;
  ++next.step;
  return next;
}

}  // namespace grw
