#include "grw/experiments/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include "../parse_util.hpp"
#include "grw/data_io.hpp"
#include "grw/error.hpp"
#include "grw/experiments/svg_plot.hpp"

namespace grw::experiments {

namespace {

constexpr double kSimplexTol = 1e-12;

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double min_initial_weight(const std::vector<Scheme>& schemes, const GroupInfo& groups) {
  double q_star = 1.0;
  for (const Scheme& s : schemes) {
    const Vector q = initial_weights(s, groups).q;
    q_star = std::min(q_star, *std::min_element(q.begin(), q.end()));
  }
  return q_star;
}

const Architecture& require_network(const ModelSpec& spec, const std::string& experiment) {
  if (!std::holds_alternative<Architecture>(spec)) {
    fail(ErrorKind::Unsupported, experiment + " needs a network model (mlp:...), not a linear one");
  }
  return std::get<Architecture>(spec);
}

void require_linear(const ModelSpec& spec, const std::string& experiment) {
  if (!std::holds_alternative<LinearSpec>(spec)) {
    fail(ErrorKind::InvalidArgument, experiment + " trains linear models; set model = linear");
  }
}

Architecture with_width(Architecture arch, std::size_t width) {
  arch.hidden_widths.assign(arch.depth(), width);
  return arch;
}

template <typename T>
const SchemeRun* find_run(const std::vector<SchemeRun>& runs, const LossKind* loss = nullptr) {
  for (const SchemeRun& r : runs) {
    if (std::holds_alternative<T>(r.scheme) && (loss == nullptr || r.loss == *loss)) return &r;
  }
  return nullptr;
}

Matrix append_columns(const Matrix& a, const Matrix& b) {
  std::vector<Vector> cols;
  for (std::size_t i = 0; i < a.cols(); ++i) cols.push_back(a.column(i));
  for (std::size_t i = 0; i < b.cols(); ++i) cols.push_back(b.column(i));
  return Matrix::from_columns(cols);
}

double final_risk(const SchemeRun& run) {
  return run.result.trace.rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : run.result.trace.rows.back().risk;
}

std::vector<double> epochs_of(const TrainTrace& trace) {
  std::vector<double> x;
  for (const auto& row : trace.rows) x.push_back(static_cast<double>(row.epoch));
  return x;
}

void write_runs(const std::filesystem::path& dir, const std::vector<SchemeRun>& runs, const std::string& hash) {
  for (const SchemeRun& run : runs) {
    const std::string name = file_label(run.label);
    export_trace(run.result.trace, dir / (name + ".csv"), TraceFormat::Csv, hash);
    export_trace(run.result.trace, dir / (name + ".json"), TraceFormat::Json, hash);
  }
}

void check_common(ExperimentReport& report, const std::vector<SchemeRun>& runs) {
  for (const SchemeRun& run : runs) {
    report.check_flag("finite_" + run.label, run.result.status != TrainStatus::Diverged,
                      to_string(run.result.status));
    report.check("simplex_" + run.label, run.result.max_simplex_violation, "<=", kSimplexTol);
  }
}

nlohmann::ordered_json run_metrics(const SchemeRun& run) {
  nlohmann::ordered_json j;
  j["label"] = run.label;
  j["status"] = to_string(run.result.status);
  j["epochs_run"] = run.result.epochs_run;
  j["final_risk"] = final_risk(run);
  j["final_weighted_risk"] = run.result.trace.rows.empty() ? 0.0 : run.result.trace.rows.back().weighted_risk;
  j["theta_norm"] = run.result.trace.rows.empty() ? 0.0 : run.result.trace.rows.back().theta_norm;
  j["max_simplex_violation"] = run.result.max_simplex_violation;
  j["max_span_residual"] = run.max_span_residual;
  return j;
}

// Parameters of `run` at `epoch`; a run that stopped earlier stays at its final point.
const Vector& snapshot_at(const SchemeRun& run, std::size_t epoch) {
  auto it = std::upper_bound(run.snapshot_epochs.begin(), run.snapshot_epochs.end(), epoch);
  if (it == run.snapshot_epochs.begin()) return run.snapshots.front();
  return run.snapshots[static_cast<std::size_t>(it - run.snapshot_epochs.begin()) - 1];
}

}  // namespace

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

Matrix random_unit_ball_points(std::size_t d, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> radius(0.5, 1.0);
  Matrix x(d, count);
  for (std::size_t i = 0; i < count; ++i) {
    Vector v(d);
    for (double& e : v) e = normal(rng);
    const double scale = radius(rng) / norm2(v);
    for (double& e : v) e *= scale;
    x.set_column(i, v);
  }
  return x;
}

Dataset random_dataset(std::size_t d, std::size_t n, std::uint64_t seed, bool classification) {
  if (d == 0 || n < 2) fail(ErrorKind::InvalidArgument, "random dataset needs d >= 1 and n >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(d, n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector v(d);
    for (double& e : v) e = normal(rng);
    const double len = norm2(v);
    for (double& e : v) e /= len;
    x.set_column(i, v);
  }
  Dataset data;
  data.X = std::move(x);
  data.classification = classification;
  if (classification) {
    Vector u(d);
    for (double& e : u) e = normal(rng);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = dot(u, data.X.column(i)) >= 0.0 ? 1.0 : -1.0;
      data.Y.push_back(y);
      labels.push_back(y > 0.0 ? 0 : 1);
    }
    // Relabel so the groups are 0..K-1 even when only one class occurs.
    if (std::find(labels.begin(), labels.end(), 0) == labels.end()) std::fill(labels.begin(), labels.end(), 0);
    data.groups = GroupInfo::from_labels(std::move(labels));
  } else {
    for (std::size_t i = 0; i < n; ++i) data.Y.push_back(0.5 * normal(rng));
    data.groups = GroupInfo::from_sizes({n - 1, 1});
  }
  data.provenance = std::string(classification ? "random-cls" : "random") + ": d=" + std::to_string(d) +
                    ", n=" + std::to_string(n) + ", seed=" + std::to_string(seed);
  data.validate();
  return data;
}

Dataset resolve_dataset(const ExperimentConfig& cfg, const RunContext& ctx, bool classification) {
  const auto parts = detail::split(cfg.dataset, ':');
  if ((parts[0] == "random" || parts[0] == "random-cls") && parts.size() == 4) {
    return random_dataset(detail::parse_uint(parts[1]), detail::parse_uint(parts[2]), detail::parse_uint(parts[3]),
                          classification || parts[0] == "random-cls");
  }
  auto fallback = [&] { return classification ? fallback_classification_dataset() : fallback_regression_dataset(); };
  if (cfg.dataset == "fallback") return fallback();
  if (cfg.dataset == "mnist") {
    auto data = try_load_paper_subset(data_dir(), classification);
    if (!data) fail(ErrorKind::IoError, "MNIST training files not found under " + data_dir().string());
    return *data;
  }
  if (cfg.dataset == "auto") {
    if (!ctx.synthetic) {
      if (auto data = try_load_paper_subset(data_dir(), classification)) return *data;
    }
    return fallback();
  }
  fail(ErrorKind::InvalidArgument, "unknown dataset spec '" + cfg.dataset + "'");
}

std::shared_ptr<const Model> build_model(const ModelSpec& spec, std::size_t input_dim, std::uint64_t seed) {
  if (std::holds_alternative<LinearSpec>(spec)) return std::make_shared<LinearModel>(input_dim);
  const auto& arch = std::get<Architecture>(spec);
  if (arch.input_dim != input_dim) {
    fail(ErrorKind::InvalidArgument, "model input_dim " + std::to_string(arch.input_dim) +
                                         " does not match data dimension " + std::to_string(input_dim));
  }
  return std::make_shared<MlpModel>(arch, seed);
}

std::string file_label(const std::string& text) {
  std::string out = text;
  for (char& c : out) {
    if (c == ':' || c == '/' || c == ' ') c = '_';
  }
  return out;
}

SchemeRun run_scheme(const Model& model, const Dataset& data, const ExperimentConfig& cfg, const RunRequest& req,
                     const TrainOptions& base_options) {
  SchemeRun run;
  run.label = req.label;
  run.scheme = req.scheme;
  run.loss = req.loss;
  run.mu = req.mu;
  const Vector& theta0 = model.initial_params();
  auto record_span = [&](const Vector& theta) {
    const Vector disp = subtract(theta, theta0);
    const double len = norm2(disp);
    if (len > 0.0) run.max_span_residual = std::max(run.max_span_residual, span_residual(disp, data.X) / len);
  };
  TrainOptions options = base_options;
  options.observer = [&](std::size_t t, const Vector& theta, const WeightState& w) {
    if (base_options.observer) base_options.observer(t, theta, w);
    if (req.keep_weight_history) run.weight_history.push_back(w.q);
    if (t % cfg.record_every != 0) return;
    if (req.keep_snapshots) {
      run.snapshot_epochs.push_back(t);
      run.snapshots.push_back(theta);
    }
    if (req.track_span) record_span(theta);
  };
  run.result = train(model, data, cfg.train_config(req.scheme, req.eta, req.loss, req.mu), options);
  const std::size_t last = run.result.epochs_run;
  if (req.keep_snapshots && (run.snapshot_epochs.empty() || run.snapshot_epochs.back() != last)) {
    run.snapshot_epochs.push_back(last);
    run.snapshots.push_back(run.result.params);
  }
  if (req.track_span) record_span(run.result.params);
  return run;
}

// --- fig1 ------------------------------------------------------------------

Fig1Outcome compute_fig1(const ExperimentConfig& cfg, const RunContext& ctx) {
  require_linear(cfg.model, "fig1");
  Fig1Outcome out;
  out.data = resolve_dataset(cfg, ctx, false);
  const LinearModel model(out.data.dim());
  const Vector theta0 = model.initial_params();
  out.oracle = min_norm_interpolator(out.data.X, out.data.Y, theta0, transpose_times(out.data.X, theta0));
  out.eta = cfg.eta ? *cfg.eta : safe_learning_rate(out.data.X, min_initial_weight(cfg.schemes, out.data.groups));

  TrainOptions options;
  options.reference_params = out.oracle;
  out.runs.resize(cfg.schemes.size());
  parallel_for(cfg.schemes.size(), ctx.jobs, [&](std::size_t i) {
    const Scheme& s = cfg.schemes[i];
    RunRequest req{to_string(s), s, cfg.loss, out.eta, cfg.mu, true, true, std::holds_alternative<GdroScheme>(s)};
    out.runs[i] = run_scheme(model, out.data, cfg, req, options);
  });
  if (const SchemeRun* gdro = find_run<GdroScheme>(out.runs)) {
    out.gdro_assumption1 = check_assumption1(gdro->weight_history);
  }
  return out;
}

ExperimentReport run_fig1(const ExperimentConfig& cfg, const RunContext& ctx) {
  const std::string hash = config_hash(cfg);
  const Fig1Outcome out = compute_fig1(cfg, ctx);
  ExperimentReport report("fig1", hash);
  auto& m = report.metrics();
  m["provenance"] = out.data.provenance;
  m["eta"] = out.eta;
  m["oracle_norm"] = norm2(out.oracle);
  m["runs"] = nlohmann::ordered_json::array();

  check_common(report, out.runs);
  for (const SchemeRun& run : out.runs) {
    auto j = run_metrics(run);
    const double oracle_gap = norm2(subtract(run.result.params, out.oracle));
    j["oracle_gap"] = oracle_gap;
    m["runs"].push_back(j);
    report.check("risk_" + run.label, final_risk(run), "<", 1e-10);
    report.check("oracle_gap_" + run.label, oracle_gap, "<", 1e-3);
    report.check("span_residual_" + run.label, run.max_span_residual, "<=", 1e-8);
  }
  for (std::size_t a = 0; a < out.runs.size(); ++a) {
    for (std::size_t b = a + 1; b < out.runs.size(); ++b) {
      report.check("gap_" + out.runs[a].label + "_" + out.runs[b].label,
                   norm2(subtract(out.runs[a].result.params, out.runs[b].result.params)), "<", 1e-3);
    }
  }
  const double oracle_norm = norm2(out.oracle);
  report.check_flag("oracle_norm_order_one", oracle_norm > 0.1 && oracle_norm < 10.0,
                    "||theta*|| = " + detail::format_short(oracle_norm));
  if (out.gdro_assumption1) {
    m["gdro_q_star"] = out.gdro_assumption1->q_star;
    m["gdro_t_eps"] = out.gdro_assumption1->t_eps;
    report.check_flag("gdro_assumption1", out.gdro_assumption1->satisfied,
                      "q* = " + detail::format_short(out.gdro_assumption1->q_star));
  }

  if (ctx.write_outputs) {
    write_runs(ctx.out_dir, out.runs, hash);
    // Weight difference against the first run, on a common epoch grid.
    std::size_t horizon = 0;
    for (const auto& r : out.runs) horizon = std::max(horizon, r.result.epochs_run);
    std::string csv = "epoch";
    for (std::size_t i = 1; i < out.runs.size(); ++i) csv += ",gap_" + out.runs[i].label;
    csv += '\n';
    std::vector<Series> gap_series(out.runs.size() > 1 ? out.runs.size() - 1 : 0);
    for (std::size_t i = 1; i < out.runs.size(); ++i) gap_series[i - 1].name = out.runs[i].label + " vs " + out.runs[0].label;
    for (std::size_t e = 0;; e += cfg.record_every) {
      const std::size_t epoch = std::min(e, horizon);
      csv += std::to_string(epoch);
      for (std::size_t i = 1; i < out.runs.size(); ++i) {
        const double gap = norm2(subtract(snapshot_at(out.runs[i], epoch), snapshot_at(out.runs[0], epoch)));
        csv += "," + detail::format_double(gap);
        gap_series[i - 1].x.push_back(static_cast<double>(epoch));
        gap_series[i - 1].y.push_back(gap);
      }
      csv += '\n';
      if (epoch == horizon) break;
    }
    write_text_file(ctx.out_dir / "weight_gap.csv", csv);
    write_line_chart(ctx.out_dir / "weight_gap.svg", gap_series, {"Weight difference", "epoch", "||theta - theta_erm||", true});
    const auto& first = out.runs.front().result.trace;
    std::vector<double> norms;
    for (const auto& row : first.rows) norms.push_back(row.theta_norm);
    write_line_chart(ctx.out_dir / "norm.svg", {{out.runs.front().label, epochs_of(first), norms}},
                     {"Parameter norm", "epoch", "||theta - theta0||", false});
    std::vector<Series> losses;
    for (const auto& run : out.runs) {
      std::vector<double> risk;
      for (const auto& row : run.result.trace.rows) risk.push_back(row.risk);
      losses.push_back({run.label, epochs_of(run.result.trace), risk});
    }
    write_line_chart(ctx.out_dir / "loss.svg", losses, {"Training loss", "epoch", "risk", true});
    if (const SchemeRun* gdro = find_run<GdroScheme>(out.runs)) {
      std::vector<Series> groups(out.data.groups.num_groups());
      for (std::size_t k = 0; k < groups.size(); ++k) {
        groups[k].name = "group " + std::to_string(k + 1);
        for (const auto& row : gdro->result.trace.rows) {
          groups[k].x.push_back(static_cast<double>(row.epoch));
          groups[k].y.push_back(row.q_group[k]);
        }
      }
      write_line_chart(ctx.out_dir / "group_weights.svg", groups, {"Group DRO group weights", "epoch", "weight", false});
    }
    report.write(ctx.out_dir / "report.json");
  }
  return report;
}

// --- fig2 ------------------------------------------------------------------

Fig2Outcome compute_fig2(const ExperimentConfig& cfg, const RunContext& ctx) {
  require_linear(cfg.model, "fig2");
  Fig2Outcome out;
  out.data = resolve_dataset(cfg, ctx, false);
  const LinearModel model(out.data.dim());
  const Vector theta0 = model.initial_params();
  const Vector f0 = transpose_times(out.data.X, theta0);
  out.eta = cfg.eta ? *cfg.eta : safe_learning_rate(out.data.X, min_initial_weight(cfg.schemes, out.data.groups));
  const std::vector<double> mus = cfg.mus.empty() ? std::vector<double>{cfg.mu} : cfg.mus;
  const std::size_t k = cfg.schemes.size();
  out.regimes.resize(mus.size());
  for (std::size_t r = 0; r < mus.size(); ++r) {
    out.regimes[r].mu = mus[r];
    out.regimes[r].runs.resize(k);
    out.regimes[r].ridge.resize(k);
  }
  parallel_for(mus.size() * k, ctx.jobs, [&](std::size_t cell) {
    const std::size_t r = cell / k;
    const std::size_t i = cell % k;
    const Scheme& s = cfg.schemes[i];
    const double mu = mus[r];
    RunRequest req{"mu" + detail::format_short(mu) + "/" + to_string(s), s, cfg.loss, out.eta, mu, true, false, false};
    out.regimes[r].runs[i] = run_scheme(model, out.data, cfg, req, {});
    if (!is_dynamic(s)) {
      const Vector q = initial_weights(s, out.data.groups).q;
      out.regimes[r].ridge[i] = ridge_closed_form(out.data.X, out.data.Y, q, mu, theta0, f0);
    }
  });
  return out;
}

ExperimentReport run_fig2(const ExperimentConfig& cfg, const RunContext& ctx) {
  const std::string hash = config_hash(cfg);
  const Fig2Outcome out = compute_fig2(cfg, ctx);
  ExperimentReport report("fig2", hash);
  auto& m = report.metrics();
  m["provenance"] = out.data.provenance;
  m["eta"] = out.eta;
  m["regimes"] = nlohmann::ordered_json::array();

  auto max_pair_gaps = [](const Fig2Regime& reg) {
    std::vector<double> gaps;
    for (std::size_t a = 0; a < reg.runs.size(); ++a) {
      for (std::size_t b = a + 1; b < reg.runs.size(); ++b) {
        gaps.push_back(norm2(subtract(reg.runs[a].result.params, reg.runs[b].result.params)));
      }
    }
    return gaps;
  };

  for (const Fig2Regime& reg : out.regimes) {
    nlohmann::ordered_json j;
    j["mu"] = reg.mu;
    j["runs"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < reg.runs.size(); ++i) {
      auto rj = run_metrics(reg.runs[i]);
      if (reg.ridge[i]) {
        const double gap = norm2(subtract(reg.runs[i].result.params, *reg.ridge[i]));
        rj["ridge_gap"] = gap;
        report.check("ridge_" + reg.runs[i].label, gap, "<", 1e-6);
      }
      j["runs"].push_back(rj);
    }
    j["pairwise_gaps"] = max_pair_gaps(reg);
    m["regimes"].push_back(j);
    check_common(report, reg.runs);
  }

  if (out.regimes.size() >= 2) {
    auto by_mu = [](const Fig2Regime& a, const Fig2Regime& b) { return a.mu < b.mu; };
    const Fig2Regime& small = *std::min_element(out.regimes.begin(), out.regimes.end(), by_mu);
    const Fig2Regime& large = *std::max_element(out.regimes.begin(), out.regimes.end(), by_mu);
    const auto small_gaps = max_pair_gaps(small);
    const auto large_gaps = max_pair_gaps(large);
    for (const auto& run : small.runs) report.check("small_mu_risk_" + run.label, final_risk(run), "<", 1e-6);
    for (const auto& run : large.runs) report.check("large_mu_risk_" + run.label, final_risk(run), ">", 1e-2);
    for (std::size_t p = 0; p < small_gaps.size(); ++p) {
      report.check("small_mu_gap_" + std::to_string(p), small_gaps[p], "<", 1e-2);
      report.check("large_mu_gap_ratio_" + std::to_string(p), large_gaps[p] / small_gaps[p], ">", 10.0,
                   "gap at mu=" + detail::format_short(large.mu) + " over gap at mu=" + detail::format_short(small.mu));
    }
  }

  if (ctx.write_outputs) {
    for (const Fig2Regime& reg : out.regimes) {
      write_runs(ctx.out_dir, reg.runs, hash);
      std::vector<Series> losses;
      for (const auto& run : reg.runs) {
        std::vector<double> risk;
        for (const auto& row : run.result.trace.rows) risk.push_back(row.risk);
        losses.push_back({run.label, epochs_of(run.result.trace), risk});
      }
      write_line_chart(ctx.out_dir / ("loss_mu" + detail::format_short(reg.mu) + ".svg"), losses,
                       {"Training loss, mu = " + detail::format_short(reg.mu), "epoch", "risk", true});
    }
    report.write(ctx.out_dir / "report.json");
  }
  return report;
}

// --- fig3 ------------------------------------------------------------------

Fig3Outcome compute_fig3(const ExperimentConfig& cfg, const RunContext& ctx) {
  require_linear(cfg.model, "fig3");
  Fig3Outcome out;
  out.data = resolve_dataset(cfg, ctx, true);
  out.max_margin = max_margin_direction(out.data.X, out.data.Y);
  const LinearModel model(out.data.dim());
  const std::vector<LossKind> losses = cfg.losses.empty() ? std::vector<LossKind>{cfg.loss} : cfg.losses;
  const double eta =
      cfg.eta ? *cfg.eta : safe_learning_rate(out.data.X, min_initial_weight(cfg.schemes, out.data.groups));
  TrainOptions options;
  options.reference_direction = out.max_margin.direction;
  const std::size_t k = cfg.schemes.size();
  out.runs.resize(losses.size() * k);
  parallel_for(out.runs.size(), ctx.jobs, [&](std::size_t cell) {
    const LossKind& loss = losses[cell / k];
    const Scheme& s = cfg.schemes[cell % k];
    RunRequest req{to_string(loss) + "/" + to_string(s), s, loss, eta, cfg.mu, true, false, false};
    out.runs[cell] = run_scheme(model, out.data, cfg, req, options);
  });
  return out;
}

ExperimentReport run_fig3(const ExperimentConfig& cfg, const RunContext& ctx) {
  const std::string hash = config_hash(cfg);
  const Fig3Outcome out = compute_fig3(cfg, ctx);
  ExperimentReport report("fig3", hash);
  auto& m = report.metrics();
  m["provenance"] = out.data.provenance;
  m["max_margin"] = out.max_margin.margin;
  m["runs"] = nlohmann::ordered_json::array();
  check_common(report, out.runs);
  const LossKind logistic = LogisticLoss{};
  for (const SchemeRun& run : out.runs) {
    auto j = run_metrics(run);
    const double cos_mm = cosine(run.result.params, out.max_margin.direction);
    j["cos_max_margin"] = cos_mm;
    std::optional<std::size_t> underflow;
    for (const auto& row : run.result.trace.rows) {
      if (row.risk == 0.0) {
        underflow = row.epoch;
        break;
      }
    }
    if (underflow) j["loss_underflow_epoch"] = *underflow;
    m["runs"].push_back(j);
    report.check("span_residual_" + run.label, run.max_span_residual, "<=", 1e-8);
    if (run.loss == logistic) {
      report.check("cos_max_margin_" + run.label, cos_mm, ">", 0.999);
      const auto& rows = run.result.trace.rows;
      const std::size_t start = rows.size() - std::max<std::size_t>(2, rows.size() / 10);
      bool increasing = rows.size() >= 2;
      for (std::size_t r = start + 1; r < rows.size() && increasing; ++r) {
        increasing = rows[r].theta_norm > rows[r - 1].theta_norm;
      }
      report.check_flag("norm_increasing_" + run.label, increasing, "trailing 10% of recorded epochs");
    }
  }
  const SchemeRun* log_erm = find_run<ErmScheme>(out.runs, &logistic);
  const SchemeRun* log_iw = find_run<IwScheme>(out.runs, &logistic);
  std::optional<double> log_gap;
  if (log_erm && log_iw) {
    log_gap = direction_gap(log_erm->result.params, log_iw->result.params);
    m["logistic_erm_iw_gap"] = *log_gap;
  }
  for (const SchemeRun& run : out.runs) {
    if (!std::holds_alternative<PolyTailedLoss>(run.loss) || !std::holds_alternative<ErmScheme>(run.scheme)) continue;
    const SchemeRun* iw = find_run<IwScheme>(out.runs, &run.loss);
    if (!iw || !log_gap) continue;
    const double gap = direction_gap(run.result.params, iw->result.params);
    m["polytailed_erm_iw_gap"] = gap;
    m["gap_ratio"] = gap / *log_gap;
    report.check("polytailed_gap_exceeds_logistic", gap, ">", *log_gap);
  }

  if (ctx.write_outputs) {
    write_runs(ctx.out_dir, out.runs, hash);
    std::vector<Series> cos_series;
    std::vector<Series> loss_series;
    for (const auto& run : out.runs) {
      std::vector<double> cs;
      std::vector<double> risk;
      for (const auto& row : run.result.trace.rows) {
        cs.push_back(row.cos_ref);
        risk.push_back(row.risk);
      }
      cos_series.push_back({run.label, epochs_of(run.result.trace), cs});
      loss_series.push_back({run.label, epochs_of(run.result.trace), risk});
    }
    write_line_chart(ctx.out_dir / "cos_max_margin.svg", cos_series, {"Cosine with max-margin direction", "epoch", "cos", false});
    write_line_chart(ctx.out_dir / "loss.svg", loss_series, {"Training loss", "epoch", "risk", true});
    report.write(ctx.out_dir / "report.json");
  }
  return report;
}

// --- ntk-convergence -------------------------------------------------------

NtkOutcome compute_ntk_convergence(const ExperimentConfig& cfg, const RunContext& ctx) {
  const Architecture& arch = require_network(cfg.model, "ntk-convergence");
  if (cfg.widths.empty() || cfg.seeds.empty()) fail(ErrorKind::InvalidArgument, "widths and seeds are required");
  const KernelSpec spec = KernelSpec::for_architecture(arch);
  const Matrix points = random_unit_ball_points(arch.input_dim, 8, cfg.seed);
  const Matrix limiting = ntk_limiting_gram(spec, points);
  double lim_norm = 0.0;
  for (double v : limiting.data()) lim_norm += v * v;
  lim_norm = std::sqrt(lim_norm);

  NtkOutcome out;
  out.widths = cfg.widths;
  out.errors.assign(cfg.widths.size(), std::vector<double>(cfg.seeds.size()));
  std::vector<double> rel_eig(cfg.widths.size() * cfg.seeds.size());
  std::vector<double> asym(rel_eig.size());
  parallel_for(rel_eig.size(), ctx.jobs, [&](std::size_t cell) {
    const std::size_t w = cell / cfg.seeds.size();
    const std::size_t s = cell % cfg.seeds.size();
    const MlpModel model(with_width(arch, cfg.widths[w]), cfg.seeds[s]);
    std::vector<Vector> grads;
    for (std::size_t i = 0; i < points.cols(); ++i) grads.push_back(model.gradient(model.initial_params(), points.column(i)));
    Matrix g(points.cols(), points.cols());
    double diff = 0.0;
    for (std::size_t i = 0; i < points.cols(); ++i) {
      for (std::size_t j = 0; j < points.cols(); ++j) {
        g(i, j) = dot(grads[i], grads[j]);
        diff += (g(i, j) - limiting(i, j)) * (g(i, j) - limiting(i, j));
      }
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < i; ++j) worst = std::max(worst, std::abs(g(i, j) - g(j, i)));
    }
    asym[cell] = worst;
    const EigenRange range = extreme_eigenvalues(g);
    rel_eig[cell] = range.min / std::max(1.0, range.max);
    out.errors[w][s] = std::sqrt(diff) / lim_norm;
  });
  for (const auto& errs : out.errors) out.medians.push_back(median(errs));
  out.min_relative_eigenvalue = *std::min_element(rel_eig.begin(), rel_eig.end());
  out.max_asymmetry = *std::max_element(asym.begin(), asym.end());
  return out;
}

ExperimentReport run_ntk_convergence(const ExperimentConfig& cfg, const RunContext& ctx) {
  const std::string hash = config_hash(cfg);
  const NtkOutcome out = compute_ntk_convergence(cfg, ctx);
  ExperimentReport report("ntk-convergence", hash);
  auto& m = report.metrics();
  m["widths"] = out.widths;
  m["median_relative_error"] = out.medians;
  m["errors"] = out.errors;
  for (std::size_t w = 1; w < out.medians.size(); ++w) {
    report.check("median_error_w" + std::to_string(out.widths[w]) + "_below_w" + std::to_string(out.widths[w - 1]),
                 out.medians[w], "<", out.medians[w - 1]);
  }
  report.check("empirical_gram_psd", out.min_relative_eigenvalue, ">=", -1e-8);
  report.check("empirical_gram_symmetric", out.max_asymmetry, "<=", 1e-12);
  if (ctx.write_outputs) {
    std::string csv = "width,median_relative_error\n";
    std::vector<double> xs;
    for (std::size_t w = 0; w < out.widths.size(); ++w) {
      csv += std::to_string(out.widths[w]) + "," + detail::format_double(out.medians[w]) + "\n";
      xs.push_back(static_cast<double>(out.widths[w]));
    }
    write_text_file(ctx.out_dir / "ntk_error.csv", csv);
    write_line_chart(ctx.out_dir / "ntk_error.svg", {{"median", xs, out.medians}},
                     {"Empirical vs limiting NTK", "width", "relative Frobenius error", true});
    report.write(ctx.out_dir / "report.json");
  }
  return report;
}

// --- approx-scaling --------------------------------------------------------

ApproxOutcome compute_approx_scaling(const ExperimentConfig& cfg, const RunContext& ctx) {
  const Architecture& arch = require_network(cfg.model, "approx-scaling");
  if (cfg.widths.empty() || cfg.seeds.empty()) fail(ErrorKind::InvalidArgument, "widths and seeds are required");
  const Dataset data = resolve_dataset(cfg, ctx, false);
  if (data.dim() != arch.input_dim) fail(ErrorKind::InvalidArgument, "model input_dim does not match the dataset");
  const Matrix test = random_unit_ball_points(arch.input_dim, 4, cfg.seed + 1000);
  const Matrix anchors = append_columns(data.X, test);
  const Scheme scheme = cfg.schemes.front();

  auto eta_for = [&](const LinearizedModel& lin) {
    if (cfg.eta) return *cfg.eta;
    return safe_learning_rate(feature_matrix(lin, data.X), min_initial_weight({scheme}, data.groups));
  };

  ApproxOutcome out;
  out.widths = cfg.widths;
  out.gaps.assign(cfg.widths.size(), std::vector<double>(cfg.seeds.size()));
  std::vector<double> initial(cfg.widths.size() * cfg.seeds.size());
  parallel_for(initial.size(), ctx.jobs, [&](std::size_t cell) {
    const std::size_t w = cell / cfg.seeds.size();
    const std::size_t s = cell % cfg.seeds.size();
    auto net = std::make_shared<MlpModel>(with_width(arch, cfg.widths[w]), cfg.seeds[s]);
    const LinearizedModel lin(net, anchors);
    const double eta = eta_for(lin);

    std::vector<Vector> weights;
    std::vector<Vector> f_net;
    TrainOptions net_opts;
    net_opts.observer = [&](std::size_t, const Vector& theta, const WeightState& ws) {
      weights.push_back(ws.q);
      f_net.push_back(net->predict(theta, test));
    };
    TrainConfig tc = cfg.train_config(scheme, eta, cfg.loss, 0.0);
    const TrainResult net_run = train(*net, data, tc, net_opts);
    if (net_run.status == TrainStatus::Diverged) fail(ErrorKind::Diverged, "network training diverged");

    std::vector<Vector> f_lin;
    TrainOptions lin_opts;
    lin_opts.weight_sequence = &weights;
    lin_opts.observer = [&](std::size_t, const Vector& theta, const WeightState&) {
      f_lin.push_back(lin.predict(theta, test));
    };
    tc.epochs = std::max<std::size_t>(1, net_run.epochs_run);
    tc.stop_risk = 0.0;
    train(lin, data, tc, lin_opts);

    double sup = 0.0;
    const std::size_t common = std::min(f_net.size(), f_lin.size());
    for (std::size_t t = 0; t < common; ++t) {
      for (std::size_t j = 0; j < test.cols(); ++j) sup = std::max(sup, std::abs(f_net[t][j] - f_lin[t][j]));
    }
    double first = 0.0;
    for (std::size_t j = 0; j < test.cols(); ++j) first = std::max(first, std::abs(f_net[0][j] - f_lin[0][j]));
    out.gaps[w][s] = sup;
    initial[cell] = first;
  });
  for (const auto& g : out.gaps) out.medians.push_back(median(g));
  std::vector<double> widths_d(cfg.widths.begin(), cfg.widths.end());
  out.slope = out.widths.size() >= 2 ? log_log_slope(widths_d, out.medians) : 0.0;
  out.max_initial_gap = *std::max_element(initial.begin(), initial.end());

  // Regularized GRW stopped at training risk eps versus unregularized ERM,
  // compared on the test points at the widest network.
  out.reg_check_width = cfg.widths.back();
  if (cfg.mu > 0.0) {
    auto net = std::make_shared<MlpModel>(with_width(arch, out.reg_check_width), cfg.seeds.front());
    const LinearizedModel lin(net, anchors);
    const double eta = eta_for(lin);
    TrainConfig erm = cfg.train_config(ErmScheme{}, eta, cfg.loss, 0.0);
    erm.stop_risk = std::min(cfg.stop_risk, 1e-10);
    const Vector f_erm = net->predict(train(*net, data, erm).params, test);
    out.reg_check_eps = {1e-3, 1e-4};
    out.reg_check_gaps.resize(out.reg_check_eps.size());
    parallel_for(out.reg_check_eps.size(), ctx.jobs, [&](std::size_t e) {
      TrainConfig reg = cfg.train_config(scheme, eta, cfg.loss, cfg.mu);
      reg.stop_risk = out.reg_check_eps[e];
      const Vector f_reg = net->predict(train(*net, data, reg).params, test);
      double gap = 0.0;
      for (std::size_t j = 0; j < f_reg.size(); ++j) gap = std::max(gap, std::abs(f_reg[j] - f_erm[j]));
      out.reg_check_gaps[e] = gap;
    });
  }
  return out;
}

ExperimentReport run_approx_scaling(const ExperimentConfig& cfg, const RunContext& ctx) {
  const std::string hash = config_hash(cfg);
  const ApproxOutcome out = compute_approx_scaling(cfg, ctx);
  ExperimentReport report("approx-scaling", hash);
  auto& m = report.metrics();
  m["widths"] = out.widths;
  m["median_sup_gap"] = out.medians;
  m["gaps"] = out.gaps;
  m["log_log_slope"] = out.slope;
  for (std::size_t w = 1; w < out.medians.size(); ++w) {
    report.check("median_gap_w" + std::to_string(out.widths[w]) + "_below_w" + std::to_string(out.widths[w - 1]),
                 out.medians[w], "<", out.medians[w - 1]);
  }
  if (out.medians.size() >= 2) report.check("log_log_slope", out.slope, "<=", -0.2);
  report.check("initial_gap", out.max_initial_gap, "<=", 1e-12);
  if (out.reg_check_gaps.size() == 2) {
    m["reg_check_width"] = out.reg_check_width;
    m["reg_check_eps"] = out.reg_check_eps;
    m["reg_check_gaps"] = out.reg_check_gaps;
    report.check("regularized_gap_shrinks_with_eps", out.reg_check_gaps[1], "<", out.reg_check_gaps[0],
                 "test-point gap to unregularized ERM at eps=1e-4 vs eps=1e-3");
  }
  if (ctx.write_outputs) {
    std::string csv = "width,median_sup_gap\n";
    std::vector<double> xs;
    for (std::size_t w = 0; w < out.widths.size(); ++w) {
      csv += std::to_string(out.widths[w]) + "," + detail::format_double(out.medians[w]) + "\n";
      xs.push_back(static_cast<double>(out.widths[w]));
    }
    write_text_file(ctx.out_dir / "approx_gap.csv", csv);
    write_line_chart(ctx.out_dir / "approx_gap.svg", {{"median sup gap", xs, out.medians}},
                     {"Network vs linearization", "width", "sup_t |f - f_lin|", true});
    report.write(ctx.out_dir / "report.json");
  }
  return report;
}

// --- compare ---------------------------------------------------------------

CompareOutcome compute_compare(const ExperimentConfig& cfg, const RunContext& ctx) {
  const bool classification = is_classification_loss(cfg.loss);
  CompareOutcome out;
  out.data = resolve_dataset(cfg, ctx, classification);
  const auto model = build_model(cfg.model, out.data.dim(), cfg.seed);
  const bool linear = std::holds_alternative<LinearSpec>(cfg.model);
  const double eta = cfg.eta ? *cfg.eta
                             : safe_learning_rate(model->jacobian(model->initial_params(), out.data.X),
                                                  min_initial_weight(cfg.schemes, out.data.groups));
  out.runs.resize(cfg.schemes.size());
  parallel_for(cfg.schemes.size(), ctx.jobs, [&](std::size_t i) {
    const Scheme& s = cfg.schemes[i];
    RunRequest req{to_string(s), s, cfg.loss, eta, cfg.mu, linear, false, false};
    out.runs[i] = run_scheme(*model, out.data, cfg, req, {});
  });
  std::vector<TrainTrace> traces;
  std::vector<Vector> finals;
  for (const auto& r : out.runs) {
    traces.push_back(r.result.trace);
    finals.push_back(r.result.params);
  }
  out.comparison = compare_runs(traces, finals, model->initial_params());

  if (classification && !linear && cfg.mu > 0.0) {
    const LinearizedModel lin(model, out.data.X);
    const MarginSolution mm = max_margin_direction(feature_matrix(lin, out.data.X), out.data.Y);
    const Matrix test = random_unit_ball_points(out.data.dim(), 200, cfg.seed + 2000);
    Vector f_mm(test.cols());
    for (std::size_t j = 0; j < test.cols(); ++j) f_mm[j] = dot(mm.direction, lin.features(test.column(j)));
    std::vector<double> magnitude;
    for (double v : f_mm) magnitude.push_back(std::abs(v));
    SignAgreement agreement;
    agreement.threshold = median(magnitude);
    for (const auto& run : out.runs) {
      const Vector f = model->predict(run.result.params, test);
      for (std::size_t j = 0; j < test.cols(); ++j) {
        if (std::abs(f_mm[j]) <= agreement.threshold) continue;
        ++agreement.considered;
        if ((f[j] > 0.0) == (f_mm[j] > 0.0)) ++agreement.agreeing;
      }
    }
    out.sign_agreement = agreement;
  }
  return out;
}

ExperimentReport run_compare(const ExperimentConfig& cfg, const RunContext& ctx) {
  const std::string hash = config_hash(cfg);
  const CompareOutcome out = compute_compare(cfg, ctx);
  ExperimentReport report("compare", hash);
  auto& m = report.metrics();
  m["provenance"] = out.data.provenance;
  m["runs"] = nlohmann::ordered_json::array();
  for (const auto& run : out.runs) m["runs"].push_back(run_metrics(run));
  check_common(report, out.runs);
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (std::size_t a = 0; a < out.runs.size(); ++a) {
    for (std::size_t b = a + 1; b < out.runs.size(); ++b) {
      table.push_back({{"a", out.runs[a].label},
                       {"b", out.runs[b].label},
                       {"gap", out.comparison.gaps(a, b)},
                       {"cosine", out.comparison.cosines(a, b)}});
    }
  }
  m["pairs"] = table;
  m["final_risks"] = out.comparison.final_risks;
  if (std::holds_alternative<LinearSpec>(cfg.model)) {
    for (const auto& run : out.runs) report.check("span_residual_" + run.label, run.max_span_residual, "<=", 1e-8);
  }
  if (out.sign_agreement) {
    const auto& sa = *out.sign_agreement;
    m["sign_threshold"] = sa.threshold;
    m["sign_considered"] = sa.considered;
    m["sign_agreeing"] = sa.agreeing;
    const double rate = sa.considered == 0 ? 0.0 : static_cast<double>(sa.agreeing) / static_cast<double>(sa.considered);
    report.check("max_margin_sign_agreement", rate, ">=", 1.0, "test points with |f_MM| above the median");
  }
  if (ctx.write_outputs) {
    write_runs(ctx.out_dir, out.runs, hash);
    report.write(ctx.out_dir / "report.json");
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunContext& ctx) {
  if (cfg.experiment == "fig1") return run_fig1(cfg, ctx);
  if (cfg.experiment == "fig2") return run_fig2(cfg, ctx);
  if (cfg.experiment == "fig3") return run_fig3(cfg, ctx);
  if (cfg.experiment == "ntk-convergence") return run_ntk_convergence(cfg, ctx);
  if (cfg.experiment == "approx-scaling") return run_approx_scaling(cfg, ctx);
  if (cfg.experiment == "compare") return run_compare(cfg, ctx);
  fail(ErrorKind::InvalidArgument, "unknown experiment '" + cfg.experiment + "'");
}

double direction_gap(const Vector& a, const Vector& b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::InvalidArgument, "direction of a zero vector");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] / na - b[i] / nb;
    s += d * d;
  }
  return std::sqrt(s);
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) fail(ErrorKind::InvalidArgument, "slope needs two or more points");
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

}  // namespace grw::experiments
