#pragma once

#include <charconv>
#include <string>
#include <system_error>

#include "core/errors.hpp"

namespace mga {

// Shortest round-trip decimal form; the only double formatting used in
// config dumps, CSVs, and reports so that reruns are byte-identical.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw NumericError("cannot format double");
  return std::string(buf, end);
}

inline double parse_double_strict(const std::string& s, const char* where) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw FormatError(std::string(where) + ": expected a number, got '" + s + "'");
  return out;
}

}  // namespace mga
