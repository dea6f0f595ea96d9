#pragma once

// Locale-independent number formatting with round-trip precision.

#include <charconv>
#include <ostream>
#include <string>
#include <system_error>

namespace ntkbias::detail {

/// Shortest decimal with at most 17 significant digits, '.' separator.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  if (res.ec != std::errc()) return "nan";
  return std::string(buf, res.ptr);
}

inline void write_row(std::ostream& os, const double* values, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    if (i) os << ',';
    os << format_double(values[i]);
  }
  os << '\n';
}

}  // namespace ntkbias::detail
