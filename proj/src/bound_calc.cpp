#include "hetsgd/bound_calc.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "hetsgd/error.hpp"
#include "hetsgd/numeric.hpp"

namespace hetsgd::bounds {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double rule_scale(const ThresholdRule& rule) {
  if (const auto* h = std::get_if<HarmonicScaled>(&rule)) return h->scale;
  return 1.0;
}

void validate_rule(const ThresholdRule& rule) {
  std::visit(overloaded{
                 [](const SumCount& r) {
                   if (r.batch < 1) throw DomainError("SumCount: batch must be >= 1");
                 },
                 [](const HarmonicCount& r) {
                   if (!(r.target > 0)) throw DomainError("HarmonicCount: target must be > 0");
                 },
                 [](const HarmonicScaled& r) {
                   if (!(r.target > 0) || !(r.scale > 0)) throw DomainError("HarmonicScaled: target and scale must be > 0");
                 },
             },
             rule);
}

// Counts floor(scale * (V_i(t) - V_i(prev))) for every worker.
void counts_at(std::span<const PowerProfile> profiles, double prev, double t, double scale,
               std::vector<std::int64_t>& out) {
  out.resize(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    out[i] = snap_floor_int(scale * power::work(profiles[i], prev, t).value());
  }
}

bool counts_satisfy(const std::vector<std::int64_t>& counts, const ThresholdRule& rule) {
  return std::visit(overloaded{
                        [&](const SumCount& r) {
                          std::int64_t s = 0;
                          for (auto c : counts) s += c;
                          return s >= r.batch;
                        },
                        [&](const auto& r) {
                          double inv = 0;
                          for (auto c : counts) {
                            if (c <= 0) return false;
                            inv += 1.0 / static_cast<double>(c);
                          }
                          double mean = static_cast<double>(counts.size()) / inv;
                          return mean >= r.target * (1 - 1e-12);
                        },
                    },
                    rule);
}

void check_constants(const ProblemConstants& c) {
  if (!(c.L > 0)) throw DomainError("L must be > 0");
  if (!(c.delta > 0)) throw DomainError("delta must be > 0");
  if (!(c.epsilon > 0)) throw DomainError("epsilon must be > 0");
  if (!(c.sigma2 >= 0)) throw DomainError("sigma2 must be >= 0");
  if (c.workers < 1) throw DomainError("workers must be >= 1");
}

bool is_lower(BoundKind k) {
  return k == BoundKind::homog_lower || k == BoundKind::heter_lower || k == BoundKind::heter_lower_log;
}

double log_factor(const ProblemConstants& c) {
  double r = c.L * c.delta / c.epsilon;
  if (!(r > 1)) throw PreconditionError("heter_lower_log needs L*delta/epsilon > 1 for the log factor");
  return std::log(r);
}

std::int64_t homog_batch(const ProblemConstants& c) {
  return std::max<std::int64_t>(snap_ceil_int(c.sigma2 / c.epsilon), 1);
}

}  // namespace

std::string describe(const ThresholdRule& rule) {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const SumCount& r) { os << "sum_count(B=" << r.batch << ")"; },
                 [&](const HarmonicCount& r) { os << "harmonic_count(H=" << format_number(r.target) << ")"; },
                 [&](const HarmonicScaled& r) {
                   os << "harmonic_scaled(H=" << format_number(r.target) << ", scale=" << format_number(r.scale) << ")";
                 },
             },
             rule);
  return os.str();
}

bool rule_holds(std::span<const PowerProfile> profiles, double prev, double t, const ThresholdRule& rule) {
  std::vector<std::int64_t> counts;
  counts_at(profiles, prev, t, rule_scale(rule), counts);
  return counts_satisfy(counts, rule);
}

TimePoint next_time(std::span<const PowerProfile> profiles, double prev, const ThresholdRule& rule,
                    const SearchOptions& opts) {
  if (profiles.empty()) throw DomainError("next_time: empty profile list");
  if (!(prev >= 0)) throw DomainError("next_time: prev must be >= 0");
  validate_rule(rule);
  const double scale = rule_scale(rule);
  std::vector<std::int64_t> counts;
  auto holds = [&](double t) {
    counts_at(profiles, prev, t, scale, counts);
    return counts_satisfy(counts, rule);
  };
  if (holds(prev)) return prev;

  double lo = prev;
  double step = 1.0;
  double hi = prev + step;
  while (!holds(hi)) {
    if (hi > opts.horizon) return TimePoint::infinity();
    lo = hi;
    step *= 2;
    hi = prev + step;
  }
  hi = bisect_leftmost(lo, hi, holds);

  // Land exactly on the jump: the answer is the time the last needed count completes.
  counts_at(profiles, prev, hi, scale, counts);
  double jump = prev;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (counts[i] <= 0) continue;
    TimePoint ti = power::inverse_work(profiles[i], static_cast<double>(counts[i]) / scale, prev);
    if (ti.is_infinite()) return hi;
    jump = std::max(jump, ti.value());
  }
  if (std::abs(jump - hi) <= 1e-9 * std::max(1.0, hi) && holds(jump)) return jump;
  return hi;
}

std::string to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::rennala_upper: return "rennala_upper";
    case BoundKind::malenia_upper: return "malenia_upper";
    case BoundKind::homog_lower: return "homog_lower";
    case BoundKind::heter_lower_log: return "heter_lower_log";
    case BoundKind::heter_lower: return "heter_lower";
    case BoundKind::convex_nonsmooth_homog: return "convex_nonsmooth_homog";
    case BoundKind::convex_smooth_homog: return "convex_smooth_homog";
    case BoundKind::convex_nonsmooth_heter: return "convex_nonsmooth_heter";
    case BoundKind::convex_smooth_heter: return "convex_smooth_heter";
  }
  return "?";
}

BoundKind parse_bound_kind(const std::string& name) {
  for (auto k : {BoundKind::rennala_upper, BoundKind::malenia_upper, BoundKind::homog_lower, BoundKind::heter_lower_log,
                 BoundKind::heter_lower, BoundKind::convex_nonsmooth_homog, BoundKind::convex_smooth_homog,
                 BoundKind::convex_nonsmooth_heter, BoundKind::convex_smooth_heter}) {
    if (to_string(k) == name) return k;
  }
  throw DomainError("unknown bound kind '" + name + "'");
}

ThresholdRule rule_for(BoundKind kind, const ProblemConstants& c, const UniversalConstants& uc) {
  check_constants(c);
  const double n = c.workers;
  switch (kind) {
    case BoundKind::rennala_upper:
    case BoundKind::convex_nonsmooth_homog:
    case BoundKind::convex_smooth_homog:
      return SumCount{homog_batch(c)};
    case BoundKind::malenia_upper:
    case BoundKind::convex_nonsmooth_heter:
    case BoundKind::convex_smooth_heter:
      return HarmonicCount{std::max(2 * c.sigma2 / (n * c.epsilon), 1.0)};
    case BoundKind::homog_lower:
      return SumCount{std::max<std::int64_t>(snap_ceil_int(uc.c2 * static_cast<double>(homog_batch(c))), 1)};
    case BoundKind::heter_lower:
      return HarmonicScaled{std::max(uc.c2 * c.sigma2 / (n * c.epsilon), 1.0), uc.c3};
    case BoundKind::heter_lower_log:
      return HarmonicScaled{std::max(uc.c2 * c.sigma2 / (n * c.epsilon), 1.0), uc.c3 / log_factor(c)};
  }
  throw DomainError("unknown bound kind");
}

std::int64_t iterations_for(BoundKind kind, const ProblemConstants& c, const UniversalConstants& uc) {
  check_constants(c);
  if (is_lower(kind) && !(c.epsilon < uc.c_prime * c.L * c.delta)) {
    throw PreconditionError("lower bounds require epsilon < c' * L * delta");
  }
  const double ratio = c.L * c.delta / c.epsilon;
  switch (kind) {
    case BoundKind::rennala_upper:
    case BoundKind::malenia_upper:
      return iterations_needed(Regime::nonconvex, c);
    case BoundKind::convex_nonsmooth_homog:
    case BoundKind::convex_nonsmooth_heter:
      return iterations_needed(Regime::convex_nonsmooth, c);
    case BoundKind::convex_smooth_homog:
    case BoundKind::convex_smooth_heter:
      return iterations_needed(Regime::convex_smooth, c);
    case BoundKind::homog_lower:
    case BoundKind::heter_lower:
      return snap_floor_int(uc.c1 * ratio);
    case BoundKind::heter_lower_log:
      return snap_floor_int(uc.c1 * ratio / log_factor(c));
  }
  throw DomainError("unknown bound kind");
}

BoundSequence bound_sequence(std::span<const PowerProfile> profiles, const ProblemConstants& c, BoundKind kind,
                             const UniversalConstants& uc, const SearchOptions& opts) {
  if (profiles.empty()) throw DomainError("bound_sequence: empty profile list");
  ProblemConstants cc = c;
  cc.workers = static_cast<int>(profiles.size());
  BoundSequence seq;
  seq.kind = kind;
  seq.iterations = iterations_for(kind, cc, uc);
  seq.rule = rule_for(kind, cc, uc);
  seq.times.reserve(static_cast<std::size_t>(seq.iterations) + 1);
  seq.times.push_back(0.0);
  for (std::int64_t k = 1; k <= seq.iterations; ++k) {
    TimePoint prev = seq.times.back();
    seq.times.push_back(prev.is_infinite() ? prev : next_time(profiles, prev.value(), seq.rule, opts));
  }
  return seq;
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::nonconvex: return "nonconvex";
    case Regime::convex_nonsmooth: return "convex_nonsmooth";
    case Regime::convex_smooth: return "convex_smooth";
  }
  return "?";
}

Regime parse_regime(const std::string& name) {
  for (auto r : {Regime::nonconvex, Regime::convex_nonsmooth, Regime::convex_smooth}) {
    if (to_string(r) == name) return r;
  }
  throw DomainError("unknown regime '" + name + "'");
}

std::int64_t iterations_needed(Regime regime, const ProblemConstants& c) {
  if (!(c.epsilon > 0)) throw DomainError("epsilon must be > 0");
  switch (regime) {
    case Regime::nonconvex:
      return std::max<std::int64_t>(snap_ceil_int(24 * c.L * c.delta / c.epsilon), 1);
    case Regime::convex_nonsmooth: {
      if (!c.lipschitz || !c.radius) throw DomainError("convex_nonsmooth needs M and R");
      double m = *c.lipschitz, r = *c.radius;
      return std::max<std::int64_t>(snap_ceil_int(2 * m * m * r * r / (c.epsilon * c.epsilon)), 1);
    }
    case Regime::convex_smooth: {
      if (!c.radius) throw DomainError("convex_smooth needs R");
      return std::max<std::int64_t>(snap_ceil_int(8 * std::sqrt(c.L) * *c.radius / std::sqrt(c.epsilon)), 1);
    }
  }
  throw DomainError("unknown regime");
}

namespace {
std::vector<double> sorted_desc(std::vector<double> v) {
  if (v.empty()) throw DomainError("need at least one power");
  for (double x : v) {
    if (!(x >= 0) || !std::isfinite(x)) throw DomainError("powers must be finite and >= 0");
  }
  std::sort(v.begin(), v.end(), std::greater<>());
  if (!(v.front() > 0)) throw DomainError("at least one power must be positive");
  return v;
}
}  // namespace

double fixed_homog_time(std::vector<double> powers, double smooth_ratio, double noise_ratio) {
  auto v = sorted_desc(std::move(powers));
  double best = std::numeric_limits<double>::infinity();
  double sum = 0;
  for (std::size_t m = 1; m <= v.size(); ++m) {
    sum += v[m - 1];
    if (!(sum > 0)) continue;
    double md = static_cast<double>(m);
    best = std::min(best, (md / sum) * (smooth_ratio + smooth_ratio * noise_ratio / md));
  }
  return best;
}

double trend_homog_time(const power::TrendSpec& trend, std::vector<double> powers, double smooth_ratio,
                        double noise_ratio) {
  double inner = fixed_homog_time(std::move(powers), smooth_ratio, noise_ratio);
  PowerProfile g(power::ScaledTrend{1.0, trend});
  return g.inverse(inner, 0.0).raw();
}

double outage_homog_time(std::vector<double> powers, const std::vector<double>& periods, double smooth_ratio,
                         double noise_ratio) {
  if (powers.size() != periods.size()) throw DomainError("outage_homog: powers and periods differ in length");
  for (std::size_t i = 0; i < powers.size(); ++i) {
    if (!(periods[i] > 0)) throw DomainError("outage_homog: periods must be > 0");
    powers[i] /= periods[i];
  }
  return fixed_homog_time(std::move(powers), smooth_ratio, noise_ratio);
}

double fixed_heter_time(const std::vector<double>& powers, double noise_ratio) {
  return fixed_heter_delta(powers, noise_ratio, 1.0);
}

double fixed_homog_delta(std::vector<double> powers, double noise_ratio, double c) {
  auto v = sorted_desc(std::move(powers));
  double best = std::numeric_limits<double>::infinity();
  double sum = 0;
  for (std::size_t j = 1; j <= v.size(); ++j) {
    sum += v[j - 1];
    if (!(sum > 0)) continue;
    best = std::min(best, (noise_ratio + static_cast<double>(j)) / sum);
  }
  return c * best;
}

double fixed_heter_delta(const std::vector<double>& powers, double noise_ratio, double c) {
  if (powers.empty()) throw DomainError("fixed_heter: need at least one power");
  double n = static_cast<double>(powers.size());
  double max_inv = 0, sum_inv = 0;
  for (double v : powers) {
    if (!(v > 0) || !std::isfinite(v)) throw DomainError("fixed_heter: every power must be > 0");
    max_inv = std::max(max_inv, 1.0 / v);
    sum_inv += 1.0 / v;
  }
  return c * (max_inv + (sum_inv / n) * noise_ratio / n);
}

PrefixMinimizer prefix_minimizer(const std::vector<double>& v, double S) {
  if (v.empty()) throw DomainError("prefix_minimizer: empty sequence");
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[i - 1]) throw DomainError("prefix_minimizer: powers must be descending");
  }
  if (!(v.back() > 0)) throw DomainError("prefix_minimizer: powers must be positive");
  PrefixMinimizer out;
  double sum = 0;
  for (std::size_t j = 1; j <= v.size(); ++j) {
    sum += v[j - 1];
    out.values.push_back((S + static_cast<double>(j)) / sum);
  }
  out.min_value = *std::min_element(out.values.begin(), out.values.end());
  for (std::size_t j = 0; j < out.values.size(); ++j) {
    if (out.values[j] == out.min_value) {
      if (out.first_argmin == 0) out.first_argmin = static_cast<int>(j) + 1;
      out.last_argmin = static_cast<int>(j) + 1;
    }
  }
  return out;
}

double baseline_time(BaselineKind kind, const std::vector<double>& taus, const ProblemConstants& c) {
  if (taus.empty()) throw DomainError("baseline_time: empty taus");
  for (double t : taus) {
    if (!(t > 0) || !std::isfinite(t)) throw DomainError("baseline_time: every tau must be > 0");
  }
  const double n = static_cast<double>(taus.size());
  const double base = c.L * c.delta / c.epsilon;
  const double noise = c.sigma2 * c.L * c.delta / (c.epsilon * c.epsilon);
  switch (kind) {
    case BaselineKind::minibatch:
      return *std::max_element(taus.begin(), taus.end()) * (base + noise / n);
    case BaselineKind::async: {
      double inv = 0;
      for (double t : taus) inv += 1.0 / t;
      return (n / inv) * (base + noise / n);
    }
    case BaselineKind::rennala_fixed: {
      auto s = taus;
      std::sort(s.begin(), s.end());
      double best = std::numeric_limits<double>::infinity();
      double inv = 0;
      for (std::size_t m = 1; m <= s.size(); ++m) {
        inv += 1.0 / s[m - 1];
        double md = static_cast<double>(m);
        best = std::min(best, (md / inv) * (base + noise / md));
      }
      return best;
    }
  }
  throw DomainError("unknown baseline kind");
}

}  // namespace hetsgd::bounds
