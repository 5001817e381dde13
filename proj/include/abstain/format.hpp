#pragma once

#include <cstdio>
#include <string>

namespace abstain::detail {

/// Shortest-width decimal with 17 significant digits: round-trips any finite
/// double and keeps text output byte-stable across runs.
inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace abstain::detail
