#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hetsgd/bound_calc.hpp"
#include "hetsgd/error.hpp"
#include "hetsgd/rng.hpp"

using namespace hetsgd;
using namespace hetsgd::bounds;
using power::Constant;
using power::PowerProfile;

namespace {

// First multiple of 1e-4 where the rule holds for constant powers; exact
// integer arithmetic on the grid index.
double grid_first(const std::vector<double>& v, bool harmonic, double threshold) {
  for (long g = 1; g < 10'000'000; ++g) {
    const double t = g * 1e-4;
    std::vector<long> c;
    for (double x : v) c.push_back(static_cast<long>(std::floor(x * g / 1e4 + 1e-9)));
    if (!harmonic) {
      long s = 0;
      for (long ci : c) s += ci;
      if (s >= threshold) return t;
    } else {
      if (std::any_of(c.begin(), c.end(), [](long ci) { return ci == 0; })) continue;
      double inv = 0;
      for (long ci : c) inv += 1.0 / ci;
      if (v.size() / inv >= threshold - 1e-12) return t;
    }
  }
  return INFINITY;
}

std::vector<PowerProfile> constants(const std::vector<double>& v) {
  std::vector<PowerProfile> out;
  for (double x : v) out.emplace_back(Constant{x});
  return out;
}

ProblemConstants consts(double L, double delta, double sigma2, double eps, int n = 1) {
  ProblemConstants c;
  c.L = L;
  c.delta = delta;
  c.sigma2 = sigma2;
  c.epsilon = eps;
  c.workers = n;
  return c;
}

}  // namespace

TEST(NextTime, Examples) {
  EXPECT_DOUBLE_EQ(next_time(constants({1}), 0, SumCount{3}).value(), 3.0);
  EXPECT_NEAR(next_time(constants({2, 1}), 0, SumCount{3}).value(), grid_first({2, 1}, false, 3), 1e-9);
  EXPECT_NEAR(next_time(constants({2, 1}), 0, SumCount{3}).value(), 1.0, 1e-12);
  EXPECT_NEAR(next_time(constants({2, 1}), 0, HarmonicCount{2}).value(), grid_first({2, 1}, true, 2), 1e-9);
  EXPECT_NEAR(next_time(constants({2, 1}), 0, HarmonicCount{2}).value(), 2.0, 1e-12);
}

TEST(NextTime, EmptyProfilesIsDomainError) {
  std::vector<PowerProfile> none;
  EXPECT_THROW(next_time(none, 0, SumCount{1}), DomainError);
}

TEST(NextTime, UnreachableIsInfinite) {
  EXPECT_TRUE(next_time(constants({0}), 0, SumCount{1}).is_infinite());
  std::vector<PowerProfile> p{power::PiecewiseConstant{{0, 1}, {1, 0}}, Constant{1}};
  EXPECT_TRUE(next_time(p, 0, HarmonicCount{3}).is_infinite());
}

TEST(NextTime, HarmonicZeroCountIsInfiniteReciprocal) {
  // Worker 2 has nothing done before t = 10, so the harmonic mean is zero until then.
  std::vector<PowerProfile> p{Constant{100}, Constant{0.1}};
  EXPECT_NEAR(next_time(p, 0, HarmonicCount{1}).value(), 10.0, 1e-9);
}

TEST(NextTime, LeftmostProperty) {
  Rng rng = make_stream(7, 0);
  std::uniform_real_distribution<double> v(0.2, 5);
  for (int i = 0; i < 200; ++i) {
    std::vector<PowerProfile> p;
    int n = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int j = 0; j < n; ++j) {
      if (j % 2) p.emplace_back(power::PeriodicOutage{v(rng), 2, 1.3});
      else p.emplace_back(Constant{v(rng)});
    }
    const double prev = v(rng);
    ThresholdRule rule = i % 2 ? ThresholdRule(SumCount{std::uniform_int_distribution<std::int64_t>(1, 9)(rng)})
                               : ThresholdRule(HarmonicCount{v(rng)});
    TimePoint t = next_time(p, prev, rule);
    ASSERT_TRUE(t.is_finite());
    EXPECT_TRUE(rule_holds(p, prev, t.value(), rule));
    const double before = t.value() - 1e-6 * std::max(1.0, t.value());
    if (before >= prev) EXPECT_FALSE(rule_holds(p, prev, before, rule));
  }
}

TEST(BoundSequence, RennalaUpperExample) {
  auto c = consts(1, 1, 1.5, 0.5);
  auto seq = bound_sequence(constants({1}), c, BoundKind::rennala_upper);
  EXPECT_EQ(seq.iterations, 48);
  ASSERT_EQ(seq.times.size(), 49u);
  ASSERT_TRUE(std::holds_alternative<SumCount>(seq.rule));
  EXPECT_EQ(std::get<SumCount>(seq.rule).batch, 3);
  for (std::size_t k = 0; k < seq.times.size(); ++k) EXPECT_NEAR(seq.times[k].value(), 3.0 * k, 1e-9);
}

TEST(BoundSequence, MalenaUpperPerIteration) {
  // sigma^2 = 2 eps n / 2 so H = 2.
  const double eps = 0.25;
  auto c = consts(1, 1, 2 * eps * 2 / 2, eps, 2);
  auto seq = bound_sequence(constants({1, 1}), c, BoundKind::malenia_upper);
  ASSERT_TRUE(std::holds_alternative<HarmonicCount>(seq.rule));
  EXPECT_DOUBLE_EQ(std::get<HarmonicCount>(seq.rule).target, 2);
  EXPECT_NEAR(seq.times[1].value(), grid_first({1, 1}, true, 2), 1e-9);
  for (std::size_t k = 1; k < seq.times.size(); ++k)
    EXPECT_NEAR(seq.times[k].value() - seq.times[k - 1].value(), 2.0, 1e-9);
}

TEST(BoundSequence, HomogLowerZeroNoise) {
  auto c = consts(1, 1, 0, 1e-4);
  auto seq = bound_sequence(constants({1, 3}), c, BoundKind::homog_lower);
  ASSERT_TRUE(std::holds_alternative<SumCount>(seq.rule));
  EXPECT_EQ(std::get<SumCount>(seq.rule).batch, 1);
  UniversalConstants uc;
  EXPECT_EQ(seq.iterations, static_cast<std::int64_t>(std::floor(uc.c1 / 1e-4)));
  // Single-gradient times: the v = 3 worker finishes first each time.
  EXPECT_NEAR(seq.times[1].value(), 1.0 / 3, 1e-12);
}

TEST(BoundSequence, LowerKindsNeedSmallEpsilon) {
  auto c = consts(1, 1, 0, 2);
  EXPECT_THROW(bound_sequence(constants({1}), c, BoundKind::homog_lower), PreconditionError);
  EXPECT_THROW(bound_sequence(constants({1}), c, BoundKind::heter_lower), PreconditionError);
  EXPECT_NO_THROW(bound_sequence(constants({1}), c, BoundKind::rennala_upper));
}

TEST(BoundSequence, NondecreasingAndScaling) {
  auto c = consts(1, 1, 3, 0.3, 3);
  auto a = bound_sequence(constants({1, 2, 0.5}), c, BoundKind::rennala_upper);
  auto b = bound_sequence(constants({2, 4, 1}), c, BoundKind::rennala_upper);
  for (std::size_t k = 1; k < a.times.size(); ++k) {
    EXPECT_GE(a.times[k], a.times[k - 1]);
    EXPECT_NEAR(b.times[k].value(), a.times[k].value() / 2, 1e-9 * a.times[k].value());
  }
}

TEST(BoundKindNames, RoundTrip) {
  for (auto k : {BoundKind::rennala_upper, BoundKind::malenia_upper, BoundKind::homog_lower, BoundKind::heter_lower_log,
                 BoundKind::heter_lower, BoundKind::convex_nonsmooth_homog, BoundKind::convex_smooth_homog,
                 BoundKind::convex_nonsmooth_heter, BoundKind::convex_smooth_heter})
    EXPECT_EQ(parse_bound_kind(to_string(k)), k);
  EXPECT_THROW(parse_bound_kind("nope"), DomainError);
}

TEST(ClosedForm, Examples) {
  // min(m=1: 1 + 4 = 5, m=2: (1/2 * 2)^-1 (1 + 4/2) = 3)
  EXPECT_DOUBLE_EQ(fixed_homog_time({1, 1}, 1, 4), 3);
  EXPECT_DOUBLE_EQ(fixed_heter_time({1, 1}, 0), 1);
  EXPECT_THROW(fixed_heter_time({1, 0}, 1), DomainError);
  EXPECT_DOUBLE_EQ(outage_homog_time({2, 2}, {2, 2}, 1, 4), fixed_homog_time({1, 1}, 1, 4));
}

TEST(ClosedForm, TrendInvertsG) {
  const double base = fixed_homog_time({1, 2}, 2, 3);
  const double t = trend_homog_time(power::SineOffset{1.01, 1}, {1, 2}, 2, 3);
  EXPECT_NEAR(1.01 * t + 1 - std::cos(t), base, 1e-9);
}

TEST(PrefixMinimizer, Example) {
  auto r = prefix_minimizer({3, 2, 1}, 2);
  EXPECT_EQ(r.first_argmin, 2);
  EXPECT_EQ(r.last_argmin, 2);
  EXPECT_DOUBLE_EQ(r.min_value, 0.8);
  EXPECT_LE(1.0 / 2, r.min_value);
  EXPECT_LE(r.min_value, 1.0 / 1);
}

TEST(PrefixMinimizer, MinimizerBracketsProperties) {
  Rng rng = make_stream(8, 0);
  std::uniform_real_distribution<double> u(0.01, 10);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = std::uniform_int_distribution<int>(1, 8)(rng);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = u(rng);
    if (trial % 5 == 0) std::fill(v.begin(), v.end(), u(rng));  // ties
    std::sort(v.begin(), v.end(), std::greater<>());
    const double S = trial % 7 == 0 ? static_cast<double>(trial % 4 + 1) : u(rng);
    auto r = prefix_minimizer(v, S);
    // Brute-force minimum.
    double best = INFINITY, sum = 0;
    for (int j = 1; j <= n; ++j) {
      sum += v[j - 1];
      best = std::min(best, (S + j) / sum);
    }
    EXPECT_NEAR(r.min_value, best, 1e-12 * best);
    const int jmax = r.last_argmin, jmin = r.first_argmin;
    if (jmax < n) EXPECT_LT(r.min_value, 1 / v[jmax]);
    EXPECT_LT(1 / v[jmin - 1], r.min_value);
    for (int j = jmin; j <= jmax; ++j) {
      if (std::abs(r.values[j - 1] - r.min_value) > 1e-12 * r.min_value) continue;
      if (j < n) EXPECT_LE(r.min_value, 1 / v[j] * (1 + 1e-12));
      EXPECT_LE(1 / v[j - 1], r.min_value * (1 + 1e-12));
    }
  }
}

TEST(Baseline, Examples) {
  // L delta / eps = 1 and sigma^2 L delta / (n eps^2) = 1 with n = 2.
  auto c = consts(1, 1, 2, 1, 2);
  EXPECT_DOUBLE_EQ(baseline_time(BaselineKind::minibatch, {1, 2}, c), 4);
  EXPECT_DOUBLE_EQ(baseline_time(BaselineKind::async, {1, 3}, c), 3);
  EXPECT_NEAR(baseline_time(BaselineKind::rennala_fixed, {2, 2}, c), baseline_time(BaselineKind::async, {2, 2}, c),
              1e-12);
  EXPECT_THROW(baseline_time(BaselineKind::minibatch, {}, c), DomainError);
}

TEST(IterationsNeeded, Examples) {
  EXPECT_EQ(iterations_needed(Regime::nonconvex, consts(1, 1, 0, 0.01)), 2400);
  auto c = consts(1, 1, 0, 1);
  c.lipschitz = 1;
  c.radius = 1;
  EXPECT_EQ(iterations_needed(Regime::convex_nonsmooth, c), 2);
  auto d = consts(4, 1, 0, 4);
  d.radius = 1;
  EXPECT_EQ(iterations_needed(Regime::convex_smooth, d), 8);
  EXPECT_THROW(iterations_needed(Regime::convex_smooth, consts(1, 1, 0, 1)), DomainError);
}
