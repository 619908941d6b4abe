#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>

#include "nkfg/error.hpp"

namespace nkfg {

// All time in the model is integral microseconds. Millisecond parameters
// convert through to_micros.
using Micros = std::chrono::microseconds;

inline double to_ms(Micros d) { return static_cast<double>(d.count()) / 1000.0; }

// Converts a millisecond parameter to microseconds. Negative or non-finite
// values and values off the microsecond grid are rejected.
inline Micros to_micros(double ms, const std::string& what = "duration") {
  if (!std::isfinite(ms) || ms < 0.0) {
    throw ValidationError(what + ": must be a finite value >= 0 ms");
  }
  const double us = ms * 1000.0;
  const double rounded = std::nearbyint(us);
  if (std::fabs(us - rounded) > 1e-6 * std::max(1.0, std::fabs(us))) {
    throw ValidationError(what + ": " + std::to_string(ms) +
                          " ms is not a whole number of microseconds");
  }
  return Micros{static_cast<std::int64_t>(rounded)};
}

// Computed durations (service times) round to the nearest microsecond.
inline Micros round_micros(double ms) {
  return Micros{static_cast<std::int64_t>(std::llround(ms * 1000.0))};
}

// Memory is carried in whole tenths of a megabyte.
struct DeciMB {
  std::int64_t tenths = 0;

  static DeciMB from_mb(double mb) { return DeciMB{std::llround(mb * 10.0)}; }
  double mb() const { return static_cast<double>(tenths) / 10.0; }
  std::string str() const {
    const auto whole = tenths / 10;
    const auto frac = tenths % 10;
    return std::to_string(whole) + "." + std::to_string(frac < 0 ? -frac : frac);
  }

  friend DeciMB operator+(DeciMB a, DeciMB b) { return {a.tenths + b.tenths}; }
  friend DeciMB operator*(std::int64_t k, DeciMB a) { return {k * a.tenths}; }
  friend auto operator<=>(const DeciMB&, const DeciMB&) = default;
};

}  // namespace nkfg
