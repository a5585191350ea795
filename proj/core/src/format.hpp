#pragma once

#include <charconv>
#include <cstdlib>
#include <string>

namespace rfadv::detail {

/// The double closest to the shortest decimal that round-trips `f`, so a
/// float 0.1f serializes as 0.1 rather than 0.10000000149011612.
inline double tidy(float f) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf) - 1, f);
  *res.ptr = '\0';
  return std::strtod(buf, nullptr);
}

inline std::string shortest(float f) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), f);
  return std::string(buf, res.ptr);
}

}  // namespace rfadv::detail
