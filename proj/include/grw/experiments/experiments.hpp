#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "grw/dataset.hpp"
#include "grw/experiments/config.hpp"
#include "grw/experiments/report.hpp"
#include "grw/models.hpp"
#include "grw/oracles.hpp"
#include "grw/reweighting.hpp"
#include "grw/trainer.hpp"

namespace grw::experiments {

struct RunContext {
  std::filesystem::path out_dir;
  std::size_t jobs = 1;
  /// Use the synthetic fallback data even when MNIST files are present.
  bool synthetic = false;
  bool write_outputs = true;
};

/// Runs fn(0) .. fn(count - 1) on up to `jobs` threads. The first exception
/// thrown by any cell is rethrown after all threads finish.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// count points in R^d, Gaussian directions with radii uniform in [0.5, 1].
Matrix random_unit_ball_points(std::size_t d, std::size_t count, std::uint64_t seed);

/// Unit-norm Gaussian columns. Regression targets 0.5 N(0, 1) with groups
/// (n - 1, 1); classification labels sign<u, x> for a random u, grouped by label.
Dataset random_dataset(std::size_t d, std::size_t n, std::uint64_t seed, bool classification);

/// Resolves the dataset spec of cfg (see ExperimentConfig::dataset).
Dataset resolve_dataset(const ExperimentConfig& cfg, const RunContext& ctx, bool classification);

/// Linear model with theta0 = 0, or the network initialized from seed.
std::shared_ptr<const Model> build_model(const ModelSpec& spec, std::size_t input_dim, std::uint64_t seed);

/// File-name friendly scheme / loss labels ("gdro_0.001", "polytailed_1_0").
std::string file_label(const std::string& text);

struct SchemeRun {
  std::string label;
  Scheme scheme;
  LossKind loss;
  double mu = 0.0;
  TrainResult result;
  /// Largest span_residual(theta - theta0, X) / ||theta - theta0|| over the
  /// recorded epochs (linear models only).
  double max_span_residual = 0.0;
  std::vector<std::size_t> snapshot_epochs;
  std::vector<Vector> snapshots;
  /// Per-epoch weights (only when requested).
  std::vector<Vector> weight_history;
};

struct RunRequest {
  std::string label;
  Scheme scheme;
  LossKind loss;
  double eta = 0.0;
  double mu = 0.0;
  bool track_span = false;
  bool keep_snapshots = false;
  bool keep_weight_history = false;
};

/// Trains one cell of an experiment on (model, data) with the shared options.
SchemeRun run_scheme(const Model& model, const Dataset& data, const ExperimentConfig& cfg, const RunRequest& req,
                     const TrainOptions& base_options);

struct Fig1Outcome {
  Dataset data;
  double eta = 0.0;
  Vector oracle;
  std::vector<SchemeRun> runs;
  std::optional<Assumption1Report> gdro_assumption1;
};

struct Fig2Regime {
  double mu = 0.0;
  std::vector<SchemeRun> runs;
  /// Closed-form limit for static schemes; nullopt for dynamic ones.
  std::vector<std::optional<Vector>> ridge;
};

struct Fig2Outcome {
  Dataset data;
  double eta = 0.0;
  std::vector<Fig2Regime> regimes;
};

struct Fig3Outcome {
  Dataset data;
  MarginSolution max_margin;
  std::vector<SchemeRun> runs;
};

struct NtkOutcome {
  std::vector<std::size_t> widths;
  /// errors[w][s]: relative Frobenius error for width index w and seed index s.
  std::vector<std::vector<double>> errors;
  std::vector<double> medians;
  /// Smallest lambda_min / max(1, lambda_max) over all empirical Gram matrices.
  double min_relative_eigenvalue = 0.0;
  double max_asymmetry = 0.0;
};

struct ApproxOutcome {
  std::vector<std::size_t> widths;
  /// gaps[w][s]: sup over epochs of max_x |f(x) - f_lin(x)| at the test points.
  std::vector<std::vector<double>> gaps;
  std::vector<double> medians;
  double slope = 0.0;
  double max_initial_gap = 0.0;
  /// Regularized-vs-ERM check: stopping thresholds and the test-point gaps.
  std::vector<double> reg_check_eps;
  std::vector<double> reg_check_gaps;
  std::size_t reg_check_width = 0;
};

struct SignAgreement {
  double threshold = 0.0;
  std::size_t considered = 0;
  std::size_t agreeing = 0;
};

struct CompareOutcome {
  Dataset data;
  std::vector<SchemeRun> runs;
  CompareReport comparison;
  std::optional<SignAgreement> sign_agreement;
};

Fig1Outcome compute_fig1(const ExperimentConfig& cfg, const RunContext& ctx);
Fig2Outcome compute_fig2(const ExperimentConfig& cfg, const RunContext& ctx);
Fig3Outcome compute_fig3(const ExperimentConfig& cfg, const RunContext& ctx);
NtkOutcome compute_ntk_convergence(const ExperimentConfig& cfg, const RunContext& ctx);
ApproxOutcome compute_approx_scaling(const ExperimentConfig& cfg, const RunContext& ctx);
CompareOutcome compute_compare(const ExperimentConfig& cfg, const RunContext& ctx);

/// Each run_* computes the outcome, writes traces, charts and report.json to
/// ctx.out_dir (when ctx.write_outputs) and returns the report.
ExperimentReport run_fig1(const ExperimentConfig& cfg, const RunContext& ctx);
ExperimentReport run_fig2(const ExperimentConfig& cfg, const RunContext& ctx);
ExperimentReport run_fig3(const ExperimentConfig& cfg, const RunContext& ctx);
ExperimentReport run_ntk_convergence(const ExperimentConfig& cfg, const RunContext& ctx);
ExperimentReport run_approx_scaling(const ExperimentConfig& cfg, const RunContext& ctx);
ExperimentReport run_compare(const ExperimentConfig& cfg, const RunContext& ctx);

/// Dispatches on cfg.experiment.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunContext& ctx);

/// || a / ||a|| - b / ||b|| ||.
double direction_gap(const Vector& a, const Vector& b);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace grw::experiments
