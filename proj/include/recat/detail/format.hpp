#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <system_error>

namespace recat::detail {

// Shortest representation that round-trips; byte-stable for a given value.
inline std::string format_double(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw std::invalid_argument("not a number: " + s);
  return v;
}

/// 100 * num / den with one decimal, rounded half up, computed exactly.
inline std::string percent_1dp(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return "0.0";
  // tenths of a percent = floor(1000 * num / den + 1/2)
  unsigned __int128 tenths = (static_cast<unsigned __int128>(num) * 2000 + den) / (2 * static_cast<unsigned __int128>(den));
  auto t = static_cast<std::uint64_t>(tenths);
  return std::to_string(t / 10) + "." + std::to_string(t % 10);
}

/// One-decimal rendering of an already-computed percentage, half up.
inline std::string fixed_1dp(double v) {
  auto tenths = static_cast<std::int64_t>(std::floor(v * 10.0 + 0.5 + 1e-9));
  std::string sign = tenths < 0 ? "-" : "";
  auto a = tenths < 0 ? -tenths : tenths;
  return sign + std::to_string(a / 10) + "." + std::to_string(a % 10);
}

}  // namespace recat::detail
