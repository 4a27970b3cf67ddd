#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hetsgd/error.hpp"
#include "hetsgd/power_model.hpp"
#include "hetsgd/rng.hpp"

using namespace hetsgd;
using namespace hetsgd::power;

namespace {

// Reference integrals written out by hand, independent of the library.
double sine_G(double offset, double amp, double t) { return offset * t + amp * (1 - std::cos(t)); }

double outage_work(double v, double period, double active, double t) {
  double full = std::floor(t / period);
  double rest = t - full * period;
  return v * (full * active + std::min(rest, active));
}

// Composite Simpson on a smooth integrand.
template <class F>
double simpson(F f, double a, double b, int n = 20000) {
  double h = (b - a) / n, s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

PowerProfile random_profile(Rng& rng) {
  std::uniform_real_distribution<double> u(0.1, 3);
  switch (std::uniform_int_distribution<int>(0, 6)(rng)) {
    case 0: return Constant{u(rng)};
    case 1: return ScaledTrend{u(rng), SineOffset{1.5, u(rng) - 1.5}};
    case 2: return ScaledTrend{u(rng), PolyGrowth{u(rng) - 1.5}};
    case 3: return PeriodicOutage{u(rng), 2.0, u(rng) / 2};
    case 4: return PiecewiseConstant{{0, 1, 2.5, 4}, {u(rng), 0, u(rng), u(rng)}};
    case 5: return Trace{{0, 0.7, 3}, {u(rng), u(rng), u(rng)}};
    default: return ScaledTrend{u(rng), PiecewiseTrend{{0, 2}, {u(rng), u(rng)}}};
  }
}

}  // namespace

TEST(PowerAt, Examples) {
  EXPECT_EQ(power_at(Constant{2}, 7), 2);
  PowerProfile outage = PeriodicOutage{1, 3, 1};
  EXPECT_EQ(power_at(outage, 3.5), 1);
  EXPECT_EQ(power_at(outage, 2.0), 0);
  EXPECT_NEAR(power_at(ScaledTrend{2, SineOffset{1.01, 1}}, std::numbers::pi / 2), 4.02, 1e-12);
}

TEST(PowerAt, NegativeTimeIsDomainError) { EXPECT_THROW(power_at(Constant{1}, -1), DomainError); }

TEST(PowerAt, TraceIsLeftContinuous) {
  PowerProfile tr = Trace{{0, 1, 2}, {5, 7, 9}};
  EXPECT_EQ(power_at(tr, 0), 5);
  EXPECT_EQ(power_at(tr, 1), 5);
  EXPECT_EQ(power_at(tr, 1.5), 7);
  EXPECT_EQ(power_at(tr, 2), 7);
  EXPECT_EQ(power_at(tr, 10), 9);
}

TEST(Work, Examples) {
  EXPECT_DOUBLE_EQ(work(Constant{2}, 0, 3.0).value(), 6.0);
  const double oracle = sine_G(1.01, 1, std::numbers::pi);
  EXPECT_NEAR(oracle, 5.17301, 1e-5);
  EXPECT_NEAR(work(ScaledTrend{1, SineOffset{1.01, 1}}, 0, std::numbers::pi).value(), oracle, 1e-12);
  EXPECT_NEAR(work(PeriodicOutage{1, 3, 1}, 0, 3.5).value(), outage_work(1, 3, 1, 3.5), 1e-12);
  EXPECT_NEAR(work(PeriodicOutage{1, 3, 1}, 0, 3.5).value(), 1.5, 1e-12);
}

TEST(Work, MatchesQuadrature) {
  auto g = [](double t) { return 1.01 + std::sin(t); };
  EXPECT_NEAR(work(ScaledTrend{2, SineOffset{1.01, 1}}, 0.3, 4.1).value(), 2 * simpson(g, 0.3, 4.1), 1e-9);
  auto poly = [](double t) { return std::pow(1 + t, 0.7); };
  EXPECT_NEAR(work(ScaledTrend{1.5, PolyGrowth{0.7}}, 1, 6).value(), 1.5 * simpson(poly, 1, 6), 1e-9);
  EXPECT_NEAR(work(PeriodicOutage{2, 2.5, 0.8}, 1.1, 17.3).value(),
              outage_work(2, 2.5, 0.8, 17.3) - outage_work(2, 2.5, 0.8, 1.1), 1e-12);
}

TEST(Work, StepProfiles) {
  PowerProfile pc = PiecewiseConstant{{0, 1, 3}, {2, 0, 5}};
  EXPECT_DOUBLE_EQ(work(pc, 0, 1.0).value(), 2);
  EXPECT_DOUBLE_EQ(work(pc, 0.5, 3.5).value(), 1 + 2.5);
  PowerProfile tr = Trace{{0, 1, 2}, {5, 7, 9}};
  EXPECT_DOUBLE_EQ(work(tr, 0, 2.0).value(), 5 + 7);
  EXPECT_DOUBLE_EQ(work(tr, 0, 3.0).value(), 5 + 7 + 9);
}

TEST(Work, InfiniteEnd) {
  EXPECT_TRUE(work(Constant{1}, 0, TimePoint::infinity()).is_infinite());
  EXPECT_DOUBLE_EQ(work(PiecewiseConstant{{0, 2}, {1, 0}}, 0, TimePoint::infinity()).value(), 2);
  EXPECT_DOUBLE_EQ(work(Constant{0}, 0, TimePoint::infinity()).value(), 0);
}

TEST(Work, ReversedIntervalIsDomainError) { EXPECT_THROW(work(Constant{1}, 2, 1.0), DomainError); }

TEST(GradCount, Examples) {
  EXPECT_EQ(grad_count(Constant{1}, 0, 2.5), 2);
  for (double v : {0.3, 1.0, 7.0, 13.0}) EXPECT_EQ(grad_count(Constant{v}, 0, 1 / v), 1) << v;
  EXPECT_EQ(grad_count(ScaledTrend{2, SineOffset{1.01, 1}}, 0, std::numbers::pi), 10);
}

TEST(GradCount, SnapsNearIntegers) {
  // 0.1 * 30 is 3.0000000000000004 and 30 / 10 steps of 0.1 can land just below 3.
  EXPECT_EQ(grad_count(Constant{0.1}, 0, 30), 3);
  double t = 0;
  for (int i = 0; i < 30; ++i) t += 0.1;
  EXPECT_EQ(grad_count(Constant{1}, 0, t), 3);
}

TEST(InverseWork, Examples) {
  EXPECT_DOUBLE_EQ(inverse_work(Constant{2}, 5, 0).value(), 2.5);
  EXPECT_NEAR(inverse_work(PeriodicOutage{1, 3, 1}, 1.5, 0).value(), 3.5, 1e-9);
  EXPECT_TRUE(inverse_work(Constant{0}, 1, 0).is_infinite());
  EXPECT_THROW(inverse_work(Constant{1}, -1, 0), DomainError);
}

TEST(InverseWork, LeftmostAcrossOutage) {
  // Work 1 is reached exactly at the end of the first active window; the gap must not be included.
  EXPECT_NEAR(inverse_work(PeriodicOutage{1, 3, 1}, 1, 0).value(), 1.0, 1e-12);
  EXPECT_NEAR(inverse_work(PiecewiseConstant{{0, 1, 4}, {1, 0, 1}}, 1, 0).value(), 1.0, 1e-12);
  EXPECT_TRUE(inverse_work(PiecewiseConstant{{0, 1}, {1, 0}}, 2, 0).is_infinite());
}

TEST(InverseWork, SineMatchesIndependentBisection) {
  for (double level : {0.01, 0.5, 3.0, 40.0, 1234.5}) {
    double lo = 0, hi = 1;
    while (2 * sine_G(1.01, 1, hi) < level) hi *= 2;
    for (int i = 0; i < 200; ++i) {
      double m = 0.5 * (lo + hi);
      (2 * sine_G(1.01, 1, m) < level ? lo : hi) = m;
    }
    EXPECT_NEAR(inverse_work(ScaledTrend{2, SineOffset{1.01, 1}}, level, 0).value(), hi, 1e-9 * std::max(1.0, hi));
  }
}

TEST(Validation, RejectsBadProfiles) {
  EXPECT_THROW(PowerProfile(Constant{-1}), DomainError);
  EXPECT_THROW(PowerProfile(PiecewiseConstant{{0, 2, 1}, {1, 1, 1}}), DomainError);
  EXPECT_THROW(PowerProfile(PiecewiseConstant{{1, 2}, {1, 1}}), DomainError);
  EXPECT_THROW(PowerProfile(Trace{{0, 1}, {1}}), DomainError);
  EXPECT_THROW(PowerProfile(ScaledTrend{1, SineOffset{1, 2}}), DomainError);
  EXPECT_THROW(PowerProfile(PeriodicOutage{1, 0, 0}), DomainError);
}

TEST(Properties, MonotoneAdditiveAndInverseConsistent) {
  Rng rng = make_stream(42, 0);
  std::uniform_real_distribution<double> t(0, 20), s(0.01, 30);
  for (int trial = 0; trial < 300; ++trial) {
    PowerProfile p = random_profile(rng);
    double a = t(rng), b = t(rng), c = t(rng);
    if (a > b) std::swap(a, b);
    if (b > c) std::swap(b, c);
    if (a > b) std::swap(a, b);
    EXPECT_GE(work(p, 0, c).value(), work(p, 0, b).value());
    EXPECT_NEAR(work(p, a, c).value(), work(p, a, b).value() + work(p, b, c).value(), 1e-9 * std::max(1.0, c));
    EXPECT_EQ(grad_count(p, a, c), static_cast<std::int64_t>(std::floor(work(p, a, c).value() + 1e-9)));

    const double level = s(rng);
    TimePoint r = inverse_work(p, level, a);
    if (r.is_finite()) {
      const double rv = r.value();
      EXPECT_NEAR(work(p, a, rv).value(), level, 1e-6);
      if (rv > a) EXPECT_LT(work(p, a, rv - 1e-6 * std::max(1.0, rv)).value(), level);
    } else {
      EXPECT_LT(work(p, a, TimePoint::infinity()).value(), level + 1e-9);
    }
  }
}
