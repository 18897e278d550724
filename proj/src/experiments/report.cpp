#include "grw/experiments/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "../parse_util.hpp"
#include "grw/data_io.hpp"
#include "grw/error.hpp"

namespace grw::experiments {

bool ExperimentReport::check(std::string name, double value, std::string_view op, double threshold,
                             std::string detail) {
  bool passed = false;
  if (op == "<") {
    passed = value < threshold;
  } else if (op == "<=") {
    passed = value <= threshold;
  } else if (op == ">") {
    passed = value > threshold;
  } else if (op == ">=") {
    passed = value >= threshold;
  } else {
    fail(ErrorKind::InvalidArgument, "unknown comparison '" + std::string(op) + "'");
  }
  assertions_.push_back({std::move(name), passed, value, std::string(op), threshold, std::move(detail)});
  return passed;
}

bool ExperimentReport::check_flag(std::string name, bool passed, std::string detail) {
  assertions_.push_back({std::move(name), passed, passed ? 1.0 : 0.0, "flag", 1.0, std::move(detail)});
  return passed;
}

const AssertionResult* ExperimentReport::find(std::string_view name) const {
  for (const auto& a : assertions_) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

bool ExperimentReport::all_passed() const {
  return std::all_of(assertions_.begin(), assertions_.end(), [](const AssertionResult& a) { return a.passed; });
}

std::string ExperimentReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["experiment"] = experiment_;
  doc["config_hash"] = config_hash_;
  doc["passed"] = all_passed();
  doc["assertions"] = nlohmann::ordered_json::array();
  for (const auto& a : assertions_) {
    nlohmann::ordered_json j;
    j["name"] = a.name;
    j["passed"] = a.passed;
    j["value"] = a.value;
    j["op"] = a.op;
    j["threshold"] = a.threshold;
    if (!a.detail.empty()) j["detail"] = a.detail;
    doc["assertions"].push_back(std::move(j));
  }
  doc["metrics"] = metrics_;
  return doc.dump(2) + "\n";
}

std::string ExperimentReport::summary() const {
  std::ostringstream os;
  for (const auto& a : assertions_) {
    os << (a.passed ? "PASS " : "FAIL ") << a.name;
    if (a.op == "flag") {
      if (!a.detail.empty()) os << ": " << a.detail;
    } else {
      os << ": " << detail::format_short(a.value) << ' ' << a.op << ' ' << detail::format_short(a.threshold);
      if (!a.detail.empty()) os << " (" << a.detail << ')';
    }
    os << '\n';
  }
  return os.str();
}

void ExperimentReport::write(const std::filesystem::path& path) const { write_text_file(path, to_json()); }

}  // namespace grw::experiments
