#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "hetsgd/extended.hpp"

namespace hetsgd::power {

/// g(t) = offset + amplitude * sin(t)
struct SineOffset {
  double offset = 1.0;
  double amplitude = 0.0;
};
/// g(t) = (1 + t)^exponent
struct PolyGrowth {
  double exponent = 0.0;
};
/// g(t) = values[j] on [breakpoints[j], breakpoints[j+1])
struct PiecewiseTrend {
  std::vector<double> breakpoints;
  std::vector<double> values;
};
using TrendSpec = std::variant<SineOffset, PolyGrowth, PiecewiseTrend>;

struct Constant {
  double power = 1.0;
};
/// v(t) = power * g(t)
struct ScaledTrend {
  double power = 1.0;
  TrendSpec trend;
};
/// Active on [period*m, period*m + active_len] for m = 0, 1, 2, ...
struct PeriodicOutage {
  double power = 1.0;
  double period = 1.0;
  double active_len = 1.0;
};
/// Right-continuous steps: values[j] on [breakpoints[j], breakpoints[j+1]).
struct PiecewiseConstant {
  std::vector<double> breakpoints;
  std::vector<double> values;
};
/// Left-continuous steps: sample_powers[j] on (sample_times[j], sample_times[j+1]],
/// sample_powers[0] at t = 0, last power held forever.
struct Trace {
  std::vector<double> sample_times;
  std::vector<double> sample_powers;
};

using ProfileSpec = std::variant<Constant, ScaledTrend, PeriodicOutage, PiecewiseConstant, Trace>;

/// A worker's computation power v(t) together with its work V(t) = int_0^t v.
/// Construction validates the parameters and precomputes prefix sums.
class PowerProfile {
 public:
  PowerProfile(ProfileSpec spec);  // NOLINT: implicit from any variant alternative
  PowerProfile(Constant c) : PowerProfile(ProfileSpec(c)) {}
  PowerProfile(ScaledTrend c) : PowerProfile(ProfileSpec(std::move(c))) {}
  PowerProfile(PeriodicOutage c) : PowerProfile(ProfileSpec(c)) {}
  PowerProfile(PiecewiseConstant c) : PowerProfile(ProfileSpec(std::move(c))) {}
  PowerProfile(Trace c) : PowerProfile(ProfileSpec(std::move(c))) {}

  const ProfileSpec& spec() const { return spec_; }
  std::string describe() const;

  double power_at(double t) const;
  /// V(t) for finite t >= 0.
  double cumulative(double t) const;
  /// V(infinity); may be finite (e.g. powers that eventually vanish).
  WorkValue total() const;
  /// Leftmost t >= base with V(t) - V(base) = level, or infinity.
  TimePoint inverse(double level, double base) const;

 private:
  double steps_cumulative(double t) const;
  TimePoint steps_inverse(double target, double base) const;
  double trend_cumulative(double t) const;
  TimePoint trend_inverse(double target, double base) const;

  ProfileSpec spec_;
  // Step data shared by PiecewiseConstant, Trace and PiecewiseTrend.
  std::vector<double> knots_;
  std::vector<double> levels_;
  std::vector<double> prefix_;  // V at each knot (times scale for trends)
  double scale_ = 1.0;
};

double power_at(const PowerProfile& p, double t);
/// V(t1) - V(t0); t1 may be infinite.
WorkValue work(const PowerProfile& p, double t0, TimePoint t1);
/// floor(work) with integer snapping.
std::int64_t grad_count(const PowerProfile& p, double t0, double t1);
TimePoint inverse_work(const PowerProfile& p, double level, double base);

}  // namespace hetsgd::power
