#include "grw/experiments/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "../parse_util.hpp"
#include "grw/data_io.hpp"
#include "grw/error.hpp"

namespace grw::experiments {

namespace {

template <typename T, typename Parse>
std::vector<T> parse_list(std::string_view text, Parse parse) {
  std::vector<T> out;
  for (auto item : detail::split(text, ',')) {
    if (item.empty()) continue;
    out.push_back(parse(item));
  }
  return out;
}

template <typename T, typename Format>
std::string join(const std::vector<T>& items, Format format) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ',';
    out += format(items[i]);
  }
  return out;
}

std::vector<std::uint64_t> seed_range(std::uint64_t count) {
  std::vector<std::uint64_t> out(count);
  for (std::uint64_t i = 0; i < count; ++i) out[i] = i;
  return out;
}

void apply(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  auto as_double = [](std::string_view v) { return detail::parse_double(v); };
  auto as_size = [](std::string_view v) { return static_cast<std::size_t>(detail::parse_uint(v)); };
  auto as_u64 = [](std::string_view v) { return detail::parse_uint(v); };
  if (key == "experiment") {
    cfg.experiment = std::string(value);
  } else if (key == "dataset") {
    cfg.dataset = std::string(value);
  } else if (key == "model") {
    cfg.model = parse_model_spec(value);
  } else if (key == "schemes") {
    cfg.schemes = parse_list<Scheme>(value, [](std::string_view v) { return parse_scheme(v); });
  } else if (key == "eta") {
    if (value == "auto") {
      cfg.eta.reset();
    } else {
      cfg.eta = as_double(value);
    }
  } else if (key == "mu") {
    cfg.mu = as_double(value);
  } else if (key == "mus") {
    cfg.mus = parse_list<double>(value, as_double);
  } else if (key == "epochs") {
    // Accept 1e6-style values.
    const double v = as_double(value);
    if (!(v >= 1.0) || v != std::floor(v)) fail(ErrorKind::InvalidArgument, "epochs must be a positive integer");
    cfg.epochs = static_cast<std::size_t>(v);
  } else if (key == "loss") {
    cfg.loss = parse_loss(value);
  } else if (key == "losses") {
    cfg.losses = parse_list<LossKind>(value, [](std::string_view v) { return parse_loss(v); });
  } else if (key == "stop_risk") {
    cfg.stop_risk = as_double(value);
  } else if (key == "record_every") {
    cfg.record_every = as_size(value);
  } else if (key == "seed") {
    cfg.seed = as_u64(value);
  } else if (key == "seeds") {
    cfg.seeds = parse_list<std::uint64_t>(value, as_u64);
  } else if (key == "out") {
    cfg.out = std::string(value);
  } else if (key == "widths") {
    cfg.widths = parse_list<std::size_t>(value, as_size);
  } else {
    fail(ErrorKind::InvalidArgument, "unknown config key '" + std::string(key) + "'");
  }
}

void validate(const ExperimentConfig& cfg) {
  if (std::find(kExperimentIds.begin(), kExperimentIds.end(), cfg.experiment) == kExperimentIds.end()) {
    fail(ErrorKind::InvalidArgument, "unknown experiment '" + cfg.experiment + "'");
  }
  if (cfg.schemes.empty()) fail(ErrorKind::InvalidArgument, "at least one scheme is required");
  if (cfg.eta && !(*cfg.eta > 0.0)) fail(ErrorKind::InvalidArgument, "eta must be > 0 or auto");
  if (!(cfg.mu >= 0.0)) fail(ErrorKind::InvalidArgument, "mu must be >= 0");
  for (double m : cfg.mus) {
    if (!(m > 0.0)) fail(ErrorKind::InvalidArgument, "every entry of mus must be > 0");
  }
  if (cfg.epochs == 0) fail(ErrorKind::InvalidArgument, "epochs must be >= 1");
  if (cfg.record_every == 0) fail(ErrorKind::InvalidArgument, "record_every must be >= 1");
  if (!(cfg.stop_risk >= 0.0)) fail(ErrorKind::InvalidArgument, "stop_risk must be >= 0");
  for (std::size_t w : cfg.widths) {
    if (w == 0) fail(ErrorKind::InvalidArgument, "widths must be >= 1");
  }
}

}  // namespace

TrainConfig ExperimentConfig::train_config(const Scheme& scheme, double eta_value, LossKind loss_kind,
                                           double mu_value) const {
  TrainConfig tc;
  tc.eta = eta_value;
  tc.mu = mu_value;
  tc.epochs = epochs;
  tc.loss = loss_kind;
  tc.scheme = scheme;
  tc.stop_risk = stop_risk;
  tc.record_every = record_every;
  tc.seed = seed;
  return tc;
}

std::string ExperimentConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["experiment"] = experiment;
  kv["dataset"] = dataset;
  kv["model"] = to_string(model);
  kv["schemes"] = join(schemes, [](const Scheme& s) { return to_string(s); });
  kv["eta"] = eta ? detail::format_double(*eta) : "auto";
  kv["mu"] = detail::format_double(mu);
  kv["mus"] = join(mus, [](double v) { return detail::format_double(v); });
  kv["epochs"] = std::to_string(epochs);
  kv["loss"] = to_string(loss);
  kv["losses"] = join(losses, [](const LossKind& l) { return to_string(l); });
  kv["stop_risk"] = detail::format_double(stop_risk);
  kv["record_every"] = std::to_string(record_every);
  kv["seed"] = std::to_string(seed);
  kv["seeds"] = join(seeds, [](std::uint64_t v) { return std::to_string(v); });
  kv["widths"] = join(widths, [](std::size_t v) { return std::to_string(v); });
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

ExperimentConfig default_config(std::string_view experiment) {
  ExperimentConfig cfg;
  cfg.experiment = std::string(experiment);
  const std::vector<Scheme> three = {ErmScheme{}, IwScheme{}, GdroScheme{1e-3}};
  if (experiment == "fig1") {
    cfg.schemes = three;
    cfg.epochs = 1'000'000;
    cfg.record_every = 1000;
  } else if (experiment == "fig2") {
    cfg.schemes = three;
    cfg.mus = {0.1, 10.0};
    cfg.epochs = 1'000'000;
    cfg.record_every = 1000;
    cfg.stop_risk = 0.0;
  } else if (experiment == "fig3") {
    cfg.schemes = three;
    cfg.eta = 8.0;
    cfg.loss = LogisticLoss{};
    cfg.losses = {LogisticLoss{}, PolyTailedLoss{1.0, 0.0}};
    cfg.epochs = 1'000'000;
    cfg.record_every = 1000;
    cfg.stop_risk = 0.0;
  } else if (experiment == "ntk-convergence") {
    cfg.schemes = {ErmScheme{}};
    cfg.model = parse_model_spec("mlp:4:64x2:0.5:erf");
    cfg.widths = {64, 256, 1024};
    cfg.seeds = seed_range(10);
  } else if (experiment == "approx-scaling") {
    cfg.dataset = "random:4:4:7";
    cfg.schemes = {GdroScheme{0.01}};
    cfg.model = parse_model_spec("mlp:4:64x1:0.5:erf");
    cfg.widths = {64, 256, 1024};
    cfg.seeds = seed_range(5);
    cfg.eta = 1.0;
    cfg.mu = 1e-4;
    cfg.epochs = 100'000;
    cfg.record_every = 100;
  } else if (experiment == "compare") {
    cfg.schemes = {ErmScheme{}};
    cfg.dataset = "fallback";
    cfg.epochs = 100'000;
    cfg.record_every = 100;
  }
  return cfg;
}

ExperimentConfig parse_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string experiment;
  std::size_t line_no = 0;
  for (auto raw : detail::split(text, '\n')) {
    ++line_no;
    const auto hash = raw.find('#');
    const auto line = detail::trim(raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::InvalidArgument, "config line " + std::to_string(line_no) + " has no '='");
    }
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    for (const auto& [k, v] : pairs) {
      if (k == key) fail(ErrorKind::InvalidArgument, "duplicate config key '" + std::string(key) + "'");
    }
    if (key == "experiment") experiment = std::string(value);
    pairs.emplace_back(std::string(key), std::string(value));
  }
  if (experiment.empty()) fail(ErrorKind::InvalidArgument, "config must set 'experiment'");
  ExperimentConfig cfg = default_config(experiment);
  for (const auto& [k, v] : pairs) apply(cfg, k, v);
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : cfg.canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace grw::experiments
