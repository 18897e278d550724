#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "grw/dataset.hpp"
#include "grw/linalg.hpp"
#include "grw/losses.hpp"
#include "grw/models.hpp"
#include "grw/reweighting.hpp"

namespace grw {

struct TrainConfig {
  double eta = 0.1;
  double mu = 0.0;
  std::size_t epochs = 1000;
  LossKind loss = SquaredLoss{};
  Scheme scheme = ErmScheme{};
  double stop_risk = 1e-12;
  std::size_t record_every = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceRow {
  std::size_t epoch = 0;
  double weighted_risk = 0.0;
  double risk = 0.0;
  Vector group_risks;
  /// ||theta - theta_ref||, NaN without a reference point.
  double theta_gap_ref = 0.0;
  /// ||theta - theta0||.
  double theta_norm = 0.0;
  /// cos(theta - theta0, reference direction), NaN without a reference direction.
  double cos_ref = 0.0;
  /// Total sample weight per group.
  Vector q_group;
  /// Full per-sample weights (kept in memory only).
  Vector weights;
};

struct TrainTrace {
  std::size_t num_groups = 0;
  std::vector<TraceRow> rows;
};

enum class TrainStatus { Completed, StoppedEarly, Diverged };

std::string to_string(TrainStatus status);

struct TrainResult {
  Vector params;
  TrainTrace trace;
  TrainStatus status = TrainStatus::Completed;
  /// Gradient steps taken.
  std::size_t epochs_run = 0;
  /// Largest simplex_violation seen over all weight states of the run.
  double max_simplex_violation = 0.0;
  WeightState final_weights;
};

using TrainObserver = std::function<void(std::size_t epoch, const Vector& theta, const WeightState& weights)>;

struct TrainOptions {
  std::optional<Vector> reference_params;
  std::optional<Vector> reference_direction;
  /// Called once per epoch with the iterate and the weights used for its step.
  TrainObserver observer;
  /// When set, epoch t uses (*weight_sequence)[min(t, size-1)] instead of the
  /// scheme's weights; lets two models train under the same q^(t).
  const std::vector<Vector>* weight_sequence = nullptr;
};

/// Full-batch GRW gradient descent:
///   theta <- theta - eta (sum_i q_i ell'(f_i, y_i) grad f_i + mu (theta - theta0)).
/// Dynamic weights are computed from the losses at the current iterate before
/// each step. Stops early once the unweighted risk is <= stop_risk, and returns
/// status Diverged (with the trace so far) on a non-finite risk.
TrainResult train(const Model& model, const Dataset& data, const TrainConfig& cfg, const TrainOptions& options = {});

/// q* lambda_min(X^T X) / (4 A^2) with A = sum_i ||x_i||^2.
double safe_learning_rate(const Matrix& x, double q_star);

struct CompareReport {
  /// gaps(i, j) = ||theta_i - theta_j||.
  Matrix gaps;
  /// cosines(i, j) = cos(theta_i - theta0, theta_j - theta0).
  Matrix cosines;
  Vector final_risks;
};

CompareReport compare_runs(const std::vector<TrainTrace>& traces, const std::vector<Vector>& finals,
                           const Vector& theta0);

}  // namespace grw
