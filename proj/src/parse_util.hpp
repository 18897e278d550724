#pragma once

#include <charconv>
#include <cstdint>
#include <sstream>
#include <iomanip>
#include <string>
#include <string_view>
#include <vector>

#include "grw/error.hpp"

namespace grw::detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view s) {
  s = trim(s);
  // std::from_chars for double is available in libstdc++ 11.
  double value = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) fail(ErrorKind::InvalidArgument, "not a number: '" + std::string(s) + "'");
  return value;
}

inline std::uint64_t parse_uint(std::string_view s) {
  s = trim(s);
  std::uint64_t value = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) fail(ErrorKind::InvalidArgument, "not a non-negative integer: '" + std::string(s) + "'");
  return value;
}

/// 17 significant digits: always parses back to the same double.
inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// Human-friendly text that still round-trips (tries 15, then 16, then 17 digits).
inline std::string format_short(double v) {
  for (int precision = 15; precision < 17; ++precision) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    double back = 0.0;
    const std::string text = os.str();
    std::from_chars(text.data(), text.data() + text.size(), back);
    if (back == v) return text;
  }
  return format_double(v);
}

}  // namespace grw::detail
