#pragma once

#include <cmath>
#include <compare>
#include <limits>
#include <string>

#include "hetsgd/error.hpp"

namespace hetsgd {

/// Nonnegative real or +infinity. Addition and max saturate at infinity.
/// Used for both virtual times and accumulated work.
class Extended {
 public:
  constexpr Extended() = default;
  Extended(double v) : v_(v) {  // NOLINT: implicit on purpose
    if (std::isnan(v)) throw DomainError("Extended: NaN");
  }
  static constexpr Extended infinity() {
    Extended e;
    e.v_ = std::numeric_limits<double>::infinity();
    return e;
  }

  bool is_infinite() const { return std::isinf(v_); }
  bool is_finite() const { return !is_infinite(); }
  /// Finite value; throws on infinity.
  double value() const {
    if (is_infinite()) throw DomainError("Extended: value() on infinity");
    return v_;
  }
  /// Value as a double, infinity mapped to +inf. For comparisons and arithmetic.
  double raw() const { return v_; }

  friend Extended operator+(Extended a, Extended b) {
    if (a.is_infinite() || b.is_infinite()) return infinity();
    return Extended(a.v_ + b.v_);
  }
  friend bool operator==(Extended a, Extended b) { return a.v_ == b.v_; }
  friend std::partial_ordering operator<=>(Extended a, Extended b) { return a.v_ <=> b.v_; }

  /// "inf" or the value printed with 12 significant digits.
  std::string to_string() const;

 private:
  double v_ = 0.0;
};

inline Extended max(Extended a, Extended b) { return a < b ? b : a; }
inline Extended min(Extended a, Extended b) { return b < a ? b : a; }

using TimePoint = Extended;
using WorkValue = Extended;

/// 12 significant digits, shared by every CSV writer.
std::string format_number(double v);

}  // namespace hetsgd
