#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace grw::experiments {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label = "epoch";
  std::string y_label;
  bool log_y = false;
};

/// Static 640x400 line chart. Axes span the finite data range (positive values
/// only when log_y is set).
std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& options);
void write_line_chart(const std::filesystem::path& path, const std::vector<Series>& series,
                      const ChartOptions& options);

}  // namespace grw::experiments
