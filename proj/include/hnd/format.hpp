#pragma once

#include <charconv>
#include <string>

namespace hnd {

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

}  // namespace hnd
