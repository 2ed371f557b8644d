#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace agemetrics {

/// Shortest round-trip decimal form; locale-independent, so equal values
/// always print as equal bytes.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "NA(nan)";
  if (std::isinf(v)) return v > 0 ? "NA(inf)" : "NA(-inf)";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_or_na(std::optional<double> v, const char* reason) {
  if (!v.has_value()) return std::string("NA(") + reason + ")";
  return fmt_double(*v);
}

inline std::string csv_join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out.push_back(',');
    out += cells[i];
  }
  out.push_back('\n');
  return out;
}

/// Parses "start:stop:step" into an inclusive grid (tolerant of rounding at
/// the stop end).
inline std::vector<double> parse_grid(const std::string& s) {
  const auto p1 = s.find(':');
  const auto p2 = s.find(':', p1 == std::string::npos ? p1 : p1 + 1);
  if (p1 == std::string::npos || p2 == std::string::npos)
    throw std::invalid_argument("grid must be start:stop:step");
  const double start = std::stod(s.substr(0, p1));
  const double stop = std::stod(s.substr(p1 + 1, p2 - p1 - 1));
  const double step = std::stod(s.substr(p2 + 1));
  if (!(step > 0.0) || stop < start) throw std::invalid_argument("bad grid bounds");
  std::vector<double> grid;
  for (double v = start; v <= stop + step * 1e-9; v += step) grid.push_back(v);
  return grid;
}

/// Accepts scientific notation for slot counts ("1e7").
inline std::uint64_t parse_slots(const std::string& s) {
  const double v = std::stod(s);
  if (!(v >= 1.0) || v > 1e12 || v != std::floor(v))
    throw std::invalid_argument("slot count must be a positive integer up to 1e12");
  return static_cast<std::uint64_t>(v);
}

}  // namespace agemetrics
