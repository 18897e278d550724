#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "grw/losses.hpp"
#include "grw/models.hpp"
#include "grw/reweighting.hpp"
#include "grw/trainer.hpp"

namespace grw::experiments {

inline const std::vector<std::string> kExperimentIds = {"fig1",           "fig2",           "fig3",
                                                        "ntk-convergence", "approx-scaling", "compare"};

/// Flat key = value experiment description. Keys not present in the file take
/// the per-experiment defaults from default_config().
struct ExperimentConfig {
  std::string experiment;
  /// "auto" (MNIST subset when the IDX files exist, else the fallback set),
  /// "mnist", "fallback", "random:<d>:<n>:<seed>" or "random-cls:<d>:<n>:<seed>".
  std::string dataset = "auto";
  ModelSpec model = LinearSpec{};
  std::vector<Scheme> schemes;
  /// nullopt means "auto": derived from safe_learning_rate.
  std::optional<double> eta;
  double mu = 0.0;
  std::vector<double> mus;
  std::size_t epochs = 1000;
  LossKind loss = SquaredLoss{};
  std::vector<LossKind> losses;
  double stop_risk = 1e-12;
  std::size_t record_every = 1;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::vector<std::size_t> widths;

  /// Training settings for one scheme with a resolved learning rate.
  TrainConfig train_config(const Scheme& scheme, double eta_value, LossKind loss_kind, double mu_value) const;

  /// Sorted key=value lines of every field except `out`; stable input for the hash.
  std::string canonical() const;
};

ExperimentConfig default_config(std::string_view experiment);

/// Parses the text form. '#' starts a comment; blank lines are ignored;
/// unknown keys and malformed values are invalid-argument errors.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a of canonical(), as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace grw::experiments
