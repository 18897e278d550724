#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace grw::experiments {

struct AssertionResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  /// "<", "<=", ">", ">=" or "flag".
  std::string op;
  double threshold = 0.0;
  std::string detail;
};

/// Machine-readable experiment outcome: named assertions plus free-form metrics.
class ExperimentReport {
 public:
  ExperimentReport() = default;
  ExperimentReport(std::string experiment, std::string config_hash)
      : experiment_(std::move(experiment)), config_hash_(std::move(config_hash)) {}

  /// Records value `op` threshold. NaN values fail.
  bool check(std::string name, double value, std::string_view op, double threshold, std::string detail = {});
  bool check_flag(std::string name, bool passed, std::string detail = {});

  const std::vector<AssertionResult>& assertions() const noexcept { return assertions_; }
  const AssertionResult* find(std::string_view name) const;
  bool all_passed() const;

  nlohmann::ordered_json& metrics() noexcept { return metrics_; }
  const nlohmann::ordered_json& metrics() const noexcept { return metrics_; }

  const std::string& experiment() const noexcept { return experiment_; }
  const std::string& config_hash() const noexcept { return config_hash_; }

  std::string to_json() const;
  /// One "PASS|FAIL name: value op threshold" line per assertion.
  std::string summary() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::string experiment_;
  std::string config_hash_;
  std::vector<AssertionResult> assertions_;
  nlohmann::ordered_json metrics_ = nlohmann::ordered_json::object();
};

}  // namespace grw::experiments
