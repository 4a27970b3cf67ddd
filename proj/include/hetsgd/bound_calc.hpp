#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hetsgd/extended.hpp"
#include "hetsgd/power_model.hpp"

namespace hetsgd::bounds {

using power::PowerProfile;

/// sum_i floor(V_i(t) - V_i(prev)) >= batch
struct SumCount {
  std::int64_t batch = 1;
};
/// (1/n sum_i 1/floor(V_i(t) - V_i(prev)))^-1 >= target
struct HarmonicCount {
  double target = 1.0;
};
/// Like HarmonicCount, with counts floor(scale * (V_i(t) - V_i(prev))).
struct HarmonicScaled {
  double target = 1.0;
  double scale = 1.0;
};
using ThresholdRule = std::variant<SumCount, HarmonicCount, HarmonicScaled>;

std::string describe(const ThresholdRule& rule);

struct ProblemConstants {
  double L = 1.0;
  double delta = 1.0;   // f(x0) - f*
  double sigma2 = 0.0;  // variance bound
  double epsilon = 1.0;
  int workers = 1;
  std::optional<double> lipschitz;  // M, convex nonsmooth
  std::optional<double> radius;     // R = |x* - x0|, convex
};

/// Default constants of the lower bounds. Tiny on purpose, not tuned.
struct UniversalConstants {
  double c1 = 1.0 / (4.0 * 152.0 * 12.0);
  double c2 = 1.0 / (8.0 * 23.0 * 23.0);
  double c3 = 1.0 / 16.0;
  double c_prime = 1.0;
};

struct SearchOptions {
  double horizon = 1e12;  // times beyond this are reported as infinity
};

/// True if the rule holds at time t for increments measured from prev.
bool rule_holds(std::span<const PowerProfile> profiles, double prev, double t, const ThresholdRule& rule);

/// Leftmost t >= prev where the rule holds, or infinity.
TimePoint next_time(std::span<const PowerProfile> profiles, double prev, const ThresholdRule& rule,
                    const SearchOptions& opts = {});

enum class BoundKind {
  rennala_upper,
  malenia_upper,
  homog_lower,
  heter_lower_log,
  heter_lower,
  convex_nonsmooth_homog,
  convex_smooth_homog,
  convex_nonsmooth_heter,
  convex_smooth_heter,
};
std::string to_string(BoundKind kind);
BoundKind parse_bound_kind(const std::string& name);

struct BoundSequence {
  BoundKind kind{};
  ThresholdRule rule;
  std::vector<TimePoint> times;  // t_0 = 0, ..., t_K
  std::int64_t iterations = 0;
  TimePoint final_time() const { return times.back(); }
};

/// The rule and iteration count used by a bound kind.
ThresholdRule rule_for(BoundKind kind, const ProblemConstants& c, const UniversalConstants& uc = {});
std::int64_t iterations_for(BoundKind kind, const ProblemConstants& c, const UniversalConstants& uc = {});

BoundSequence bound_sequence(std::span<const PowerProfile> profiles, const ProblemConstants& c, BoundKind kind,
                             const UniversalConstants& uc = {}, const SearchOptions& opts = {});

enum class Regime { nonconvex, convex_nonsmooth, convex_smooth };
std::string to_string(Regime r);
Regime parse_regime(const std::string& name);

std::int64_t iterations_needed(Regime regime, const ProblemConstants& c);

// Closed-form complexities for the fixed-speed examples. Hidden constants are 1.

/// min_m (1/m sum_{i<=m} v_(i))^-1 (LD/eps + LD sigma^2/(m eps^2)), powers sorted descending.
double fixed_homog_time(std::vector<double> powers, double smooth_ratio, double noise_ratio);
/// G^-1 of fixed_homog_time, G the trend's antiderivative.
double trend_homog_time(const power::TrendSpec& trend, std::vector<double> powers, double smooth_ratio,
                        double noise_ratio);
/// fixed_homog_time with effective powers v_i / period_i.
double outage_homog_time(std::vector<double> powers, const std::vector<double>& periods, double smooth_ratio,
                         double noise_ratio);
/// max_i 1/v_i + (1/n sum 1/v_i) sigma^2/(n eps). Per iteration.
double fixed_heter_time(const std::vector<double>& powers, double noise_ratio);

/// c * min_j (sum_{i<=j} v_(i))^-1 (noise_ratio + j).
double fixed_homog_delta(std::vector<double> powers, double noise_ratio, double c);
/// c * (max 1/v_i + (1/n sum 1/v_i) sigma^2/(n eps)), noise_ratio = sigma^2/eps.
double fixed_heter_delta(const std::vector<double>& powers, double noise_ratio, double c);

/// g(j) = (sum_{i<=j} v_i)^-1 (S + j) for descending v; minimizer info.
struct PrefixMinimizer {
  std::vector<double> values;  // g(1..n)
  double min_value = 0;
  int first_argmin = 0;  // 1-based
  int last_argmin = 0;   // 1-based
};
PrefixMinimizer prefix_minimizer(const std::vector<double>& descending_powers, double S);

enum class BaselineKind { minibatch, async, rennala_fixed };
/// taus are seconds per gradient. Uses L, delta, sigma2, epsilon from c; n = taus.size().
double baseline_time(BaselineKind kind, const std::vector<double>& taus, const ProblemConstants& c);

}  // namespace hetsgd::bounds
