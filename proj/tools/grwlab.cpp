#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "grw/data_io.hpp"
#include "grw/error.hpp"
#include "grw/experiments/config.hpp"
#include "grw/experiments/experiments.hpp"
#include "grw/oracles.hpp"
#include "grw/trainer.hpp"

namespace {

using grw::experiments::ExperimentConfig;
using grw::experiments::RunContext;
using json = nlohmann::ordered_json;

struct ExperimentArgs {
  std::string config;
  std::string out;
  std::size_t jobs = 1;
  bool synthetic = false;
};

struct OracleArgs {
  std::string dataset = "auto";
  bool synthetic = false;
  bool classification = false;
  std::string scheme = "erm";
  double mu = 0.1;
  std::string model = "mlp:4:64x2:0.5:erf";
  std::size_t points = 8;
  std::uint64_t seed = 0;
  std::string dir = "data";
  std::size_t count = 16;
};

grw::Dataset oracle_dataset(const OracleArgs& a) {
  ExperimentConfig cfg = grw::experiments::default_config("compare");
  cfg.dataset = a.dataset;
  RunContext ctx;
  ctx.synthetic = a.synthetic;
  return grw::experiments::resolve_dataset(cfg, ctx, a.classification);
}

json vector_json(const grw::Vector& v) { return json(std::vector<double>(v.begin(), v.end())); }

int run_experiment_command(const std::string& id, const ExperimentArgs& a) {
  ExperimentConfig cfg = a.config.empty() ? grw::experiments::default_config(id) : grw::experiments::load_config(a.config);
  if (cfg.experiment != id) {
    grw::fail(grw::ErrorKind::InvalidArgument, "config is for '" + cfg.experiment + "', not '" + id + "'");
  }
  RunContext ctx;
  ctx.jobs = a.jobs;
  ctx.synthetic = a.synthetic;
  if (!a.out.empty()) {
    ctx.out_dir = a.out;
  } else if (!cfg.out.empty()) {
    ctx.out_dir = cfg.out;
  } else {
    ctx.out_dir = std::filesystem::path("results") / id;
  }
  std::filesystem::create_directories(ctx.out_dir);
  const auto report = grw::experiments::run_experiment(cfg, ctx);
  std::cout << report.summary();
  std::cout << (report.all_passed() ? "ALL PASS" : "SOME FAILED") << " (" << id << ", report in "
            << (ctx.out_dir / "report.json").string() << ")\n";
  return report.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grwlab: generalized reweighting experiments"};
  app.require_subcommand(1);

  ExperimentArgs exp_args;
  std::string chosen;
  for (const std::string& id : grw::experiments::kExperimentIds) {
    auto* sub = app.add_subcommand(id, "run the " + id + " experiment");
    sub->add_option("--config", exp_args.config, "key = value config file (defaults when omitted)");
    sub->add_option("--out", exp_args.out, "output directory");
    sub->add_option("--jobs", exp_args.jobs, "parallel cells")->check(CLI::PositiveNumber);
    sub->add_flag("--synthetic", exp_args.synthetic, "use the synthetic fallback data even if MNIST is present");
    sub->callback([&chosen, id] { chosen = id; });
  }

  OracleArgs o;
  auto* oracle = app.add_subcommand("oracle", "closed-form and reference solvers");
  oracle->require_subcommand(1);
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--dataset", o.dataset, "auto | mnist | fallback | random:d:n:seed | random-cls:d:n:seed");
    sub->add_flag("--synthetic", o.synthetic, "prefer the fallback data");
  };
  auto* interp = oracle->add_subcommand("interpolator", "min-norm interpolator of the regression set");
  add_data(interp);
  auto* ridge = oracle->add_subcommand("ridge", "regularized static-weight limit");
  add_data(ridge);
  ridge->add_option("--scheme", o.scheme, "erm | iw");
  ridge->add_option("--mu", o.mu, "regularization strength");
  auto* mm = oracle->add_subcommand("max-margin", "hard-margin direction of the classification set");
  add_data(mm);
  auto* ntk = oracle->add_subcommand("ntk", "limiting NTK Gram on random unit-ball points");
  ntk->add_option("--model", o.model, "mlp:d0:WxL:beta:erf");
  ntk->add_option("--points", o.points, "number of points");
  ntk->add_option("--seed", o.seed, "point seed");
  auto* lr = oracle->add_subcommand("safe-lr", "learning rate bound for a linear model");
  add_data(lr);
  lr->add_option("--scheme", o.scheme, "scheme giving q*");
  auto* fixture = oracle->add_subcommand("make-fixture", "write synthetic MNIST-format IDX files");
  fixture->add_option("--dir", o.dir, "output directory");
  fixture->add_option("--count", o.count, "number of images");
  fixture->add_option("--seed", o.seed, "pixel seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!chosen.empty()) return run_experiment_command(chosen, exp_args);

    json out;
    if (interp->parsed()) {
      const auto data = oracle_dataset(o);
      const grw::Vector theta0(data.dim(), 0.0);
      const auto theta = grw::min_norm_interpolator(data.X, data.Y, theta0, grw::Vector(data.size(), 0.0));
      out["provenance"] = data.provenance;
      out["norm"] = grw::norm2(theta);
      out["theta"] = vector_json(theta);
    } else if (ridge->parsed()) {
      const auto data = oracle_dataset(o);
      const auto scheme = grw::parse_scheme(o.scheme);
      if (grw::is_dynamic(scheme)) grw::fail(grw::ErrorKind::InvalidArgument, "ridge needs a static scheme");
      const auto q = grw::initial_weights(scheme, data.groups).q;
      const grw::Vector theta0(data.dim(), 0.0);
      const auto theta = grw::ridge_closed_form(data.X, data.Y, q, o.mu, theta0, grw::Vector(data.size(), 0.0));
      out["provenance"] = data.provenance;
      out["mu"] = o.mu;
      out["norm"] = grw::norm2(theta);
      const auto f = grw::transpose_times(data.X, theta);
      double risk = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) risk += 0.5 * (f[i] - data.Y[i]) * (f[i] - data.Y[i]);
      out["risk"] = risk / static_cast<double>(f.size());
      out["theta"] = vector_json(theta);
    } else if (mm->parsed()) {
      o.classification = true;
      const auto data = oracle_dataset(o);
      const auto sol = grw::max_margin_direction(data.X, data.Y);
      out["provenance"] = data.provenance;
      out["margin"] = sol.margin;
      out["support_set"] = sol.support_set;
      out["alphas"] = vector_json(sol.alphas);
      out["direction"] = vector_json(sol.direction);
    } else if (ntk->parsed()) {
      const auto spec = grw::parse_model_spec(o.model);
      if (!std::holds_alternative<grw::Architecture>(spec)) {
        grw::fail(grw::ErrorKind::Unsupported, "the NTK needs a network model");
      }
      const auto& arch = std::get<grw::Architecture>(spec);
      const auto x = grw::experiments::random_unit_ball_points(arch.input_dim, o.points, o.seed);
      const auto gram = grw::ntk_limiting_gram(grw::KernelSpec::for_architecture(arch), x);
      json rows = json::array();
      for (std::size_t i = 0; i < gram.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < gram.cols(); ++j) row.push_back(gram(i, j));
        rows.push_back(row);
      }
      out["gram"] = rows;
    } else if (lr->parsed()) {
      const auto data = oracle_dataset(o);
      const auto q = grw::initial_weights(grw::parse_scheme(o.scheme), data.groups).q;
      const double q_star = *std::min_element(q.begin(), q.end());
      out["q_star"] = q_star;
      out["eta"] = grw::safe_learning_rate(data.X, q_star);
    } else if (fixture->parsed()) {
      grw::write_synthetic_idx_fixture(o.dir, o.count, o.seed);
      out["dir"] = o.dir;
      out["count"] = o.count;
    }
    std::cout << out.dump(2) << "\n";
    return 0;
  } catch (const grw::Error& e) {
    std::cerr << "grwlab: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "grwlab: " << e.what() << "\n";
    return 2;
  }
}
