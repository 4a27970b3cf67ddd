#include "hetsgd/power_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hetsgd/error.hpp"
#include "hetsgd/numeric.hpp"

namespace hetsgd::power {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_power(double v, const char* what) {
  if (!std::isfinite(v) || v < 0) throw DomainError(std::string(what) + ": power must be finite and >= 0");
}

void check_steps(const std::vector<double>& knots, const std::vector<double>& vals, const char* what) {
  if (knots.empty()) throw DomainError(std::string(what) + ": needs at least one breakpoint");
  if (knots.size() != vals.size()) throw DomainError(std::string(what) + ": breakpoints and values differ in length");
  if (knots.front() != 0.0) throw DomainError(std::string(what) + ": breakpoints must start at 0");
  for (std::size_t j = 1; j < knots.size(); ++j) {
    if (!(knots[j] > knots[j - 1]) || !std::isfinite(knots[j]))
      throw DomainError(std::string(what) + ": breakpoints must be strictly increasing");
  }
  for (double v : vals) check_power(v, what);
}

double sine_G(const SineOffset& s, double t) { return s.offset * t + s.amplitude * (1.0 - std::cos(t)); }

double poly_G(const PolyGrowth& p, double t) {
  double a1 = p.exponent + 1.0;
  if (a1 == 0.0) return std::log1p(t);
  return std::expm1(a1 * std::log1p(t)) / a1;
}

}  // namespace

PowerProfile::PowerProfile(ProfileSpec spec) : spec_(std::move(spec)) {
  auto set_steps = [this](const std::vector<double>& knots, const std::vector<double>& vals, double scale) {
    knots_ = knots;
    levels_ = vals;
    scale_ = scale;
    prefix_.assign(knots_.size(), 0.0);
    for (std::size_t j = 1; j < knots_.size(); ++j)
      prefix_[j] = prefix_[j - 1] + scale * levels_[j - 1] * (knots_[j] - knots_[j - 1]);
  };
  std::visit(overloaded{
                 [](const Constant& c) { check_power(c.power, "constant"); },
                 [&](const ScaledTrend& s) {
                   check_power(s.power, "scaled_trend");
                   std::visit(overloaded{
                                  [](const SineOffset& g) {
                                    if (!(g.offset > 0) || std::abs(g.amplitude) > g.offset)
                                      throw DomainError("sine_offset: need offset > 0 and |amplitude| <= offset");
                                  },
                                  [](const PolyGrowth& g) {
                                    if (!std::isfinite(g.exponent)) throw DomainError("poly_growth: exponent must be finite");
                                  },
                                  [&](const PiecewiseTrend& g) {
                                    check_steps(g.breakpoints, g.values, "piecewise trend");
                                    set_steps(g.breakpoints, g.values, s.power);
                                  },
                              },
                              s.trend);
                 },
                 [](const PeriodicOutage& o) {
                   check_power(o.power, "periodic_outage");
                   if (!(o.period > 0) || !std::isfinite(o.period)) throw DomainError("periodic_outage: period must be > 0");
                   if (!(o.active_len >= 0) || !std::isfinite(o.active_len))
                     throw DomainError("periodic_outage: active_len must be >= 0");
                 },
                 [&](const PiecewiseConstant& p) {
                   check_steps(p.breakpoints, p.values, "piecewise_constant");
                   set_steps(p.breakpoints, p.values, 1.0);
                 },
                 [&](const Trace& tr) {
                   check_steps(tr.sample_times, tr.sample_powers, "trace");
                   set_steps(tr.sample_times, tr.sample_powers, 1.0);
                 },
             },
             spec_);
}

std::string PowerProfile::describe() const {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const Constant& c) { os << "constant(v=" << c.power << ")"; },
                 [&](const ScaledTrend& s) {
                   os << "scaled_trend(v=" << s.power << ", ";
                   std::visit(overloaded{
                                  [&](const SineOffset& g) { os << "sine " << g.offset << "+" << g.amplitude << "sin t"; },
                                  [&](const PolyGrowth& g) { os << "(1+t)^" << g.exponent; },
                                  [&](const PiecewiseTrend& g) { os << "piecewise, " << g.breakpoints.size() << " pieces"; },
                              },
                              s.trend);
                   os << ")";
                 },
                 [&](const PeriodicOutage& o) {
                   os << "periodic_outage(v=" << o.power << ", period=" << o.period << ", active=" << o.active_len << ")";
                 },
                 [&](const PiecewiseConstant& p) { os << "piecewise_constant(" << p.breakpoints.size() << " pieces)"; },
                 [&](const Trace& t) { os << "trace(" << t.sample_times.size() << " samples)"; },
             },
             spec_);
  return os.str();
}

double PowerProfile::power_at(double t) const {
  if (!(t >= 0)) throw DomainError("power_at: t must be >= 0");
  return std::visit(overloaded{
                        [&](const Constant& c) { return c.power; },
                        [&](const ScaledTrend& s) {
                          return std::visit(overloaded{
                                                [&](const SineOffset& g) { return s.power * (g.offset + g.amplitude * std::sin(t)); },
                                                [&](const PolyGrowth& g) { return s.power * std::pow(1.0 + t, g.exponent); },
                                                [&](const PiecewiseTrend&) {
                                                  auto j = std::upper_bound(knots_.begin(), knots_.end(), t) - knots_.begin() - 1;
                                                  return s.power * levels_[j];
                                                },
                                            },
                                            s.trend);
                        },
                        [&](const PeriodicOutage& o) {
                          double m = std::floor(t / o.period);
                          return (t - m * o.period) <= o.active_len ? o.power : 0.0;
                        },
                        [&](const PiecewiseConstant&) {
                          auto j = std::upper_bound(knots_.begin(), knots_.end(), t) - knots_.begin() - 1;
                          return levels_[j];
                        },
                        [&](const Trace&) {
                          auto j = std::lower_bound(knots_.begin(), knots_.end(), t) - knots_.begin() - 1;
                          return levels_[std::max<std::ptrdiff_t>(j, 0)];
                        },
                    },
                    spec_);
}

double PowerProfile::steps_cumulative(double t) const {
  auto j = std::upper_bound(knots_.begin(), knots_.end(), t) - knots_.begin() - 1;
  return prefix_[j] + scale_ * levels_[j] * (t - knots_[j]);
}

TimePoint PowerProfile::steps_inverse(double target, double base) const {
  auto j0 = std::upper_bound(knots_.begin(), knots_.end(), base) - knots_.begin() - 1;
  auto it = std::lower_bound(prefix_.begin() + j0 + 1, prefix_.end(), target);
  std::size_t seg = static_cast<std::size_t>(it - prefix_.begin()) - 1;
  double rate = scale_ * levels_[seg];
  if (!(rate > 0)) return TimePoint::infinity();  // only reachable on the tail
  double start = std::max(base, knots_[seg]);
  double start_v = seg == static_cast<std::size_t>(j0) ? steps_cumulative(start) : prefix_[seg];
  double t = start + (target - start_v) / rate;
  if (seg + 1 < knots_.size()) t = std::min(t, knots_[seg + 1]);
  return std::max(t, base);
}

double PowerProfile::cumulative(double t) const {
  if (!(t >= 0)) throw DomainError("work: times must be >= 0");
  return std::visit(overloaded{
                        [&](const Constant& c) { return c.power * t; },
                        [&](const ScaledTrend& s) {
                          return std::visit(overloaded{
                                                [&](const SineOffset& g) { return s.power * sine_G(g, t); },
                                                [&](const PolyGrowth& g) { return s.power * poly_G(g, t); },
                                                [&](const PiecewiseTrend&) { return steps_cumulative(t); },
                                            },
                                            s.trend);
                        },
                        [&](const PeriodicOutage& o) {
                          double len = std::min(o.active_len, o.period);
                          double m = std::floor(t / o.period);
                          return o.power * (m * len + std::min(t - m * o.period, len));
                        },
                        [&](const PiecewiseConstant&) { return steps_cumulative(t); },
                        [&](const Trace&) { return steps_cumulative(t); },
                    },
                    spec_);
}

WorkValue PowerProfile::total() const {
  auto steps_total = [&]() -> WorkValue {
    if (scale_ * levels_.back() > 0) return WorkValue::infinity();
    return prefix_.back();
  };
  return std::visit(overloaded{
                        [&](const Constant& c) -> WorkValue { return c.power > 0 ? WorkValue::infinity() : WorkValue(0.0); },
                        [&](const ScaledTrend& s) -> WorkValue {
                          if (s.power == 0) return 0.0;
                          return std::visit(overloaded{
                                                [&](const SineOffset&) -> WorkValue { return WorkValue::infinity(); },
                                                [&](const PolyGrowth& g) -> WorkValue {
                                                  double a1 = g.exponent + 1.0;
                                                  if (a1 >= 0) return WorkValue::infinity();
                                                  return s.power / (-a1);
                                                },
                                                [&](const PiecewiseTrend&) { return steps_total(); },
                                            },
                                            s.trend);
                        },
                        [&](const PeriodicOutage& o) -> WorkValue {
                          return (o.power > 0 && o.active_len > 0) ? WorkValue::infinity() : WorkValue(0.0);
                        },
                        [&](const PiecewiseConstant&) { return steps_total(); },
                        [&](const Trace&) { return steps_total(); },
                    },
                    spec_);
}

TimePoint PowerProfile::trend_inverse(double target, double base) const {
  const auto& s = std::get<ScaledTrend>(spec_);
  if (!(s.power > 0)) return TimePoint::infinity();
  double g = target / s.power;
  return std::visit(overloaded{
                        [&](const SineOffset& tr) -> TimePoint {
                          double lo = (g - std::max(0.0, 2 * tr.amplitude)) / tr.offset;
                          double hi = (g - std::min(0.0, 2 * tr.amplitude)) / tr.offset;
                          lo = std::max(lo, base);
                          hi = std::max(hi, lo);
                          if (sine_G(tr, lo) >= g) return lo;
                          auto above = [&](double t) { return sine_G(tr, t) >= g; };
                          // Safeguarded Newton to shrink the bracket, then bisect the last few ulps.
                          double t = 0.5 * (lo + hi);
                          for (int it = 0; it < 60; ++it) {
                            const double r = sine_G(tr, t) - g;
                            (r >= 0 ? hi : lo) = t;
                            const double slope = tr.offset + tr.amplitude * std::sin(t);
                            double next = slope > 0 ? t - r / slope : lo - 1;
                            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
                            if (std::abs(next - t) <= 1e-13 * std::max(1.0, std::abs(t))) {
                              const double e = 1e-12 * std::max(1.0, std::abs(next));
                              if (next - e > lo && !above(next - e)) lo = next - e;
                              if (next + e < hi && above(next + e)) hi = next + e;
                              break;
                            }
                            t = next;
                          }
                          return bisect_leftmost(lo, hi, above);
                        },
                        [&](const PolyGrowth& tr) -> TimePoint {
                          double a1 = tr.exponent + 1.0;
                          double t;
                          if (a1 == 0.0) {
                            t = std::expm1(g);
                          } else {
                            double inner = 1.0 + a1 * g;
                            if (inner <= 0) return TimePoint::infinity();
                            t = std::expm1(std::log(inner) / a1);
                          }
                          if (!std::isfinite(t)) return TimePoint::infinity();
                          return std::max(t, base);
                        },
                        [&](const PiecewiseTrend&) { return steps_inverse(target, base); },
                    },
                    s.trend);
}

TimePoint PowerProfile::inverse(double level, double base) const {
  if (!(level >= 0)) throw DomainError("inverse_work: level must be >= 0");
  if (!(base >= 0)) throw DomainError("inverse_work: base must be >= 0");
  if (level == 0) return base;
  if (std::isinf(level)) return TimePoint::infinity();
  if (const auto* c = std::get_if<Constant>(&spec_)) {
    if (!(c->power > 0)) return TimePoint::infinity();
    return base + level / c->power;
  }
  double target = cumulative(base) + level;
  if (total() < WorkValue(target)) return TimePoint::infinity();
  return std::visit(overloaded{
                        [&](const Constant&) -> TimePoint { return TimePoint::infinity(); },
                        [&](const ScaledTrend&) { return trend_inverse(target, base); },
                        [&](const PeriodicOutage& o) -> TimePoint {
                          double len = std::min(o.active_len, o.period);
                          double u = target / o.power;
                          double m = snap_floor(u / len);
                          double r = u - m * len;
                          double t;
                          if (r <= 0 && m > 0) {
                            t = (m - 1) * o.period + len;  // level hit at the end of an active window
                          } else {
                            t = m * o.period + std::max(r, 0.0);
                          }
                          return std::max(t, base);
                        },
                        [&](const PiecewiseConstant&) { return steps_inverse(target, base); },
                        [&](const Trace&) { return steps_inverse(target, base); },
                    },
                    spec_);
}

double power_at(const PowerProfile& p, double t) { return p.power_at(t); }

WorkValue work(const PowerProfile& p, double t0, TimePoint t1) {
  if (!(t0 >= 0)) throw DomainError("work: t0 must be >= 0");
  if (t1 < TimePoint(t0)) throw DomainError("work: t1 < t0");
  if (t1.is_infinite()) {
    WorkValue tot = p.total();
    if (tot.is_infinite()) return tot;
    return std::max(0.0, tot.value() - p.cumulative(t0));
  }
  if (const auto* c = std::get_if<Constant>(&p.spec())) return c->power * (t1.value() - t0);
  return std::max(0.0, p.cumulative(t1.value()) - p.cumulative(t0));
}

std::int64_t grad_count(const PowerProfile& p, double t0, double t1) {
  return snap_floor_int(work(p, t0, t1).value());
}

TimePoint inverse_work(const PowerProfile& p, double level, double base) { return p.inverse(level, base); }

}  // namespace hetsgd::power
