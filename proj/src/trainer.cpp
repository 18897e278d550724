#include "grw/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "grw/error.hpp"

namespace grw {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EpochEval {
  Vector losses;
  double risk = 0.0;
  bool finite = true;
};

EpochEval evaluate(const LossKind& loss, const Vector& predictions, const Vector& y) {
  EpochEval ev;
  ev.losses.resize(predictions.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!std::isfinite(predictions[i])) {
      ev.finite = false;
      return ev;
    }
    ev.losses[i] = loss_value(loss, predictions[i], y[i]);
    sum += ev.losses[i];
  }
  ev.risk = sum / static_cast<double>(predictions.size());
  ev.finite = std::isfinite(ev.risk);
  return ev;
}

TraceRow make_row(std::size_t epoch, const EpochEval& ev, const WeightState& state, const Vector& theta,
                  const Vector& theta0, const GroupInfo& groups, const TrainOptions& options) {
  TraceRow row;
  row.epoch = epoch;
  row.weighted_risk = dot(state.q, ev.losses);
  row.risk = ev.risk;
  row.group_risks = group_risks(ev.losses, groups);
  const Vector displacement = subtract(theta, theta0);
  row.theta_norm = norm2(displacement);
  row.theta_gap_ref = options.reference_params ? norm2(subtract(theta, *options.reference_params)) : kNaN;
  row.cos_ref = options.reference_direction ? cosine(displacement, *options.reference_direction) : kNaN;
  row.q_group.assign(groups.num_groups(), 0.0);
  for (std::size_t i = 0; i < state.q.size(); ++i) row.q_group[groups.labels[i]] += state.q[i];
  row.weights = state.q;
  return row;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) fail(ErrorKind::InvalidArgument, "eta must be finite and > 0");
  if (!(mu >= 0.0) || !std::isfinite(mu)) fail(ErrorKind::InvalidArgument, "mu must be finite and >= 0");
  if (epochs == 0) fail(ErrorKind::InvalidArgument, "epochs must be >= 1");
  if (record_every == 0) fail(ErrorKind::InvalidArgument, "record_every must be >= 1");
  if (!(stop_risk >= 0.0)) fail(ErrorKind::InvalidArgument, "stop_risk must be >= 0");
}

std::string to_string(TrainStatus status) {
  switch (status) {
    case TrainStatus::Completed: return "completed";
    case TrainStatus::StoppedEarly: return "stopped-early";
    case TrainStatus::Diverged: return "diverged";
  }
  return "unknown";
}

TrainResult train(const Model& model, const Dataset& data, const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (data.X.rows() != model.input_dim()) fail(ErrorKind::InvalidArgument, "dataset dimension does not match model");
  if (data.Y.size() != data.X.cols() || data.groups.num_samples() != data.X.cols()) {
    fail(ErrorKind::InvalidArgument, "dataset sizes are inconsistent");
  }
  data.groups.validate();
  if (is_classification_loss(cfg.loss) && !data.classification) {
    fail(ErrorKind::InvalidArgument, "classification loss needs a classification dataset");
  }
  for (std::size_t i = 0; i < data.X.cols(); ++i) check_unit_ball(data.X.column(i));
  if (options.weight_sequence && options.weight_sequence->empty()) {
    fail(ErrorKind::InvalidArgument, "forced weight sequence is empty");
  }

  const std::size_t n = data.size();
  const Vector& theta0 = model.initial_params();
  TrainResult result;
  result.trace.num_groups = data.groups.num_groups();
  Vector theta = theta0;
  WeightState state = initial_weights(cfg.scheme, data.groups);
  const bool dynamic = is_dynamic(cfg.scheme);
  Vector coeff(n);
  Vector grad(theta.size());

  for (std::size_t t = 0;; ++t) {
    const Vector predictions = model.predict(theta, data.X);
    const EpochEval ev = evaluate(cfg.loss, predictions, data.Y);
    if (!ev.finite) {
      result.status = TrainStatus::Diverged;
      break;
    }
    if (options.weight_sequence) {
      const auto& seq = *options.weight_sequence;
      state.q = seq[std::min(t, seq.size() - 1)];
      state.gdro_g.reset();
      state.step = t;
      if (state.q.size() != n) fail(ErrorKind::InvalidArgument, "forced weights have the wrong length");
    } else if (dynamic) {
      state = next_weights(cfg.scheme, state, ev.losses, data.groups);
    }
    result.max_simplex_violation = std::max(result.max_simplex_violation, simplex_violation(state));
    if (options.observer) options.observer(t, theta, state);

    const bool stop = ev.risk <= cfg.stop_risk;
    const bool last = t >= cfg.epochs;
    if (t % cfg.record_every == 0 || stop || last) {
      result.trace.rows.push_back(make_row(t, ev, state, theta, theta0, data.groups, options));
    }
    if (stop || last) {
      result.status = stop ? TrainStatus::StoppedEarly : TrainStatus::Completed;
      break;
    }

    for (std::size_t i = 0; i < n; ++i) coeff[i] = state.q[i] * loss_grad(cfg.loss, predictions[i], data.Y[i]);
    std::fill(grad.begin(), grad.end(), 0.0);
    model.accumulate_gradient(theta, data.X, coeff, grad);
    if (cfg.mu > 0.0) {
      for (std::size_t j = 0; j < theta.size(); ++j) grad[j] += cfg.mu * (theta[j] - theta0[j]);
    }
    axpy(-cfg.eta, grad, theta);
    result.epochs_run = t + 1;
  }

  result.params = std::move(theta);
  result.final_weights = std::move(state);
  return result;
}

double safe_learning_rate(const Matrix& x, double q_star) {
  if (!(q_star > 0.0 && q_star <= 1.0)) fail(ErrorKind::InvalidArgument, "q_star must lie in (0, 1]");
  const Matrix g = gram(x);
  require_full_rank_gram(g);
  const EigenRange range = extreme_eigenvalues(g);
  double a = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i) a += g(i, i);
  return q_star * range.min / (4.0 * a * a);
}

CompareReport compare_runs(const std::vector<TrainTrace>& traces, const std::vector<Vector>& finals,
                           const Vector& theta0) {
  if (traces.size() != finals.size()) fail(ErrorKind::InvalidArgument, "one trace per final parameter vector");
  const std::size_t runs = finals.size();
  for (const Vector& f : finals) {
    if (f.size() != theta0.size()) fail(ErrorKind::InvalidArgument, "parameter dimensions differ between runs");
  }
  CompareReport report;
  report.gaps = Matrix(runs, runs);
  report.cosines = Matrix(runs, runs);
  std::vector<Vector> displacements;
  for (const Vector& f : finals) displacements.push_back(subtract(f, theta0));
  for (std::size_t i = 0; i < runs; ++i) {
    for (std::size_t j = 0; j < runs; ++j) {
      report.gaps(i, j) = norm2(subtract(finals[i], finals[j]));
      report.cosines(i, j) = i == j ? 1.0 : cosine(displacements[i], displacements[j]);
    }
  }
  for (const TrainTrace& trace : traces) {
    report.final_risks.push_back(trace.rows.empty() ? kNaN : trace.rows.back().risk);
  }
  return report;
}

}  // namespace grw
