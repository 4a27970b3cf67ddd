#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

namespace hetsgd {

/// Tolerance used to snap values onto nearby integers before floor/ceil.
inline double snap_tolerance(double x) { return std::max(1e-9, 1e-13 * std::abs(x)); }

/// floor(x), except values within snap_tolerance of an integer land on it.
inline double snap_floor(double x) {
  double r = std::nearbyint(x);
  if (std::abs(x - r) <= snap_tolerance(x)) return r;
  return std::floor(x);
}

inline double snap_ceil(double x) {
  double r = std::nearbyint(x);
  if (std::abs(x - r) <= snap_tolerance(x)) return r;
  return std::ceil(x);
}

inline std::int64_t snap_floor_int(double x) { return static_cast<std::int64_t>(snap_floor(x)); }
inline std::int64_t snap_ceil_int(double x) { return static_cast<std::int64_t>(snap_ceil(x)); }

/// Leftmost t in [lo, hi] with pred(t) true, assuming pred is monotone
/// (false then true) and pred(hi) holds. Runs to machine precision.
double bisect_leftmost(double lo, double hi, const std::function<bool(double)>& pred);

}  // namespace hetsgd
