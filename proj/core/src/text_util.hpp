#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace cpdp::detail {

// Shortest representation that round-trips.
inline void append_number(std::string& out, double v) {
  if (std::isnan(v)) {
    out += "nan";
    return;
  }
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

inline void append_fixed(std::string& out, double v, int precision) {
  if (std::isnan(v)) {
    out += "nan";
    return;
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
  out.append(buf, ptr);
}

}  // namespace cpdp::detail
