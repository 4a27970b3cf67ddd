#include "hetsgd/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unistd.h>

#include "hetsgd/bound_calc.hpp"
#include "hetsgd/config.hpp"
#include "hetsgd/experiment.hpp"
#include "hetsgd/lowerbound_lab.hpp"
#include "hetsgd/objectives.hpp"
#include "hetsgd/optimizers.hpp"
#include "hetsgd/power_model.hpp"
#include "hetsgd/rng.hpp"

namespace hetsgd::verify {

namespace {

using objectives::Vector;
using power::PowerProfile;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double x) { return format_number(x); }

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int pick(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
double log_uniform(Rng& rng, double lo, double hi) { return std::exp(uniform(rng, std::log(lo), std::log(hi))); }

// ---------------------------------------------------------------- 1
// Instances whose power changes only on a 0.1 grid and whose powers are in
// {0.5, 1, 2, 4, 5}. Work then crosses integers only at multiples of 1e-4,
// so an integer grid scan is exact.

struct GridProfile {
  int type = 0;  // 0 constant, 1 outage, 2 piecewise
  double v = 1;
  int period = 1;
  int active_tenths = 10;
  std::vector<int> break_tenths;
  std::vector<double> values;

  double power_mid(double t) const {
    if (type == 0) return v;
    if (type == 1) {
      double r = std::fmod(t, static_cast<double>(period));
      return r < active_tenths / 10.0 ? v : 0.0;
    }
    std::size_t j = 0;
    while (j + 1 < break_tenths.size() && break_tenths[j + 1] / 10.0 <= t) ++j;
    return values[j];
  }

  PowerProfile build() const {
    if (type == 0) return power::Constant{v};
    if (type == 1) return power::PeriodicOutage{v, static_cast<double>(period), active_tenths / 10.0};
    power::PiecewiseConstant pc;
    for (int b : break_tenths) pc.breakpoints.push_back(b / 10.0);
    pc.values = values;
    return pc;
  }
};

Outcome criterion_bisection(std::uint64_t seed) {
  Rng rng = make_stream(seed, 1);
  const double powers[] = {0.5, 1, 2, 4, 5};
  constexpr std::int64_t kUnitsPerGradient = 20000;  // work unit 0.5e-4
  constexpr std::int64_t kLimit = 3'000'000;         // 300 virtual seconds
  int bad = 0, unreachable = 0;
  double worst = 0;
  std::ostringstream first;
  for (int inst = 0; inst < 200; ++inst) {
    const int n = pick(rng, 1, 4);
    std::vector<GridProfile> gp(static_cast<std::size_t>(n));
    for (auto& g : gp) {
      g.type = pick(rng, 0, 2);
      g.v = powers[pick(rng, 0, 4)];
      if (g.type == 1) {
        g.period = pick(rng, 1, 3);
        g.active_tenths = pick(rng, 3 * g.period, 10 * g.period);
      } else if (g.type == 2) {
        int pieces = pick(rng, 1, 5);
        int at = 0;
        for (int j = 0; j < pieces; ++j) {
          g.break_tenths.push_back(at);
          double val = pick(rng, 0, 5) == 0 ? 0.0 : powers[pick(rng, 0, 4)];
          if (j + 1 == pieces && val == 0.0) val = powers[pick(rng, 0, 4)];
          g.values.push_back(val);
          at += pick(rng, 1, 40);
        }
      }
    }
    const int prev_tenths = pick(rng, 0, 50);
    const bool harmonic = pick(rng, 0, 1) == 1;
    const std::int64_t B = pick(rng, 1, 12);
    const int h2 = pick(rng, 1, 8);  // H = h2 / 2

    std::vector<PowerProfile> profiles;
    for (const auto& g : gp) profiles.push_back(g.build());
    bounds::ThresholdRule rule = harmonic ? bounds::ThresholdRule(bounds::HarmonicCount{h2 / 2.0})
                                          : bounds::ThresholdRule(bounds::SumCount{B});
    const double prev = prev_tenths / 10.0;
    const TimePoint got = bounds::next_time(profiles, prev, rule);

    // Grid scan in integer work units.
    const std::int64_t g0 = static_cast<std::int64_t>(prev_tenths) * 1000;
    std::vector<std::int64_t> units(static_cast<std::size_t>(n), 0);
    std::int64_t found = -1;
    for (std::int64_t g = g0; g < g0 + kLimit; ++g) {
      const double mid = (static_cast<double>(g) + 0.5) * 1e-4;
      for (int i = 0; i < n; ++i)
        units[static_cast<std::size_t>(i)] += static_cast<std::int64_t>(std::lround(2 * gp[static_cast<std::size_t>(i)].power_mid(mid)));
      bool ok;
      if (!harmonic) {
        std::int64_t s = 0;
        for (auto u : units) s += u / kUnitsPerGradient;
        ok = s >= B;
      } else {
        // n / sum(1/c) >= h2/2  <=>  2 n prod(c) >= h2 * sum_j prod_{i != j} c_i
        ok = true;
        std::vector<__int128> c;
        for (auto u : units) {
          c.push_back(u / kUnitsPerGradient);
          if (c.back() == 0) ok = false;
        }
        if (ok) {
          __int128 prod = 1, rest = 0;
          for (auto ci : c) prod *= ci;
          for (auto ci : c) rest += prod / ci;
          ok = 2 * static_cast<__int128>(n) * prod >= static_cast<__int128>(h2) * rest;
        }
      }
      if (ok) {
        found = g + 1;
        break;
      }
    }
    if (found < 0) {
      ++unreachable;
      if (!(got > TimePoint(static_cast<double>(g0 + kLimit) * 1e-4))) {
        if (bad++ == 0) first << "instance " << inst << ": grid found nothing, next_time " << got.to_string();
      }
      continue;
    }
    const double expect = static_cast<double>(found) * 1e-4;
    const double err = got.is_infinite() ? INFINITY : std::abs(got.value() - expect);
    worst = std::max(worst, err);
    if (!(err <= 1e-6)) {
      if (bad++ == 0) first << "instance " << inst << ": grid " << fmt(expect) << " next_time " << got.to_string();
    }
  }
  std::ostringstream d;
  d << "200 instances, max |error| " << fmt(worst) << ", beyond scan " << unreachable << ", mismatches " << bad;
  if (bad) d << "; " << first.str();
  return {bad == 0, d.str()};
}

// ---------------------------------------------------------------- 2
double homog_delta(std::vector<double> v, double S, double c) {
  std::sort(v.begin(), v.end(), std::greater<>());
  double best = INFINITY, sum = 0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    sum += v[j];
    best = std::min(best, (S + static_cast<double>(j + 1)) / sum);
  }
  return c * best;
}

Outcome criterion_homog_sandwich(std::uint64_t seed) {
  Rng rng = make_stream(seed, 2);
  int violations = 0;
  std::ostringstream first;
  for (int inst = 0; inst < 100; ++inst) {
    const int n = pick(rng, 1, 6);
    std::vector<double> v;
    std::vector<PowerProfile> profiles;
    for (int i = 0; i < n; ++i) {
      v.push_back(log_uniform(rng, 0.1, 10));
      profiles.emplace_back(power::Constant{v.back()});
    }
    const double S = pick(rng, 0, 4) == 0 ? pick(rng, 0, 30) : uniform(rng, 0, 100);
    const auto B = std::max<std::int64_t>(static_cast<std::int64_t>(std::ceil(S)), 1);
    const double lo = homog_delta(v, S, 0.25), hi = homog_delta(v, S, 4.0);
    double prev = 0;
    for (int k = 1; k <= 3; ++k) {
      const TimePoint t = bounds::next_time(profiles, prev, bounds::SumCount{B});
      const double delta = t.is_infinite() ? INFINITY : t.value() - prev;
      if (!(lo <= delta && delta <= hi)) {
        if (violations++ == 0)
          first << "instance " << inst << " k=" << k << ": " << fmt(lo) << " <= " << fmt(delta) << " <= " << fmt(hi)
                << " fails";
      }
      if (t.is_infinite()) break;
      prev = t.value();
    }
  }
  std::ostringstream d;
  d << "100 instances x 3 iterations, violations " << violations;
  if (violations) d << "; " << first.str();
  return {violations == 0, d.str()};
}

// ---------------------------------------------------------------- 3
Outcome criterion_trend(std::uint64_t seed) {
  Rng rng = make_stream(seed, 3);
  auto G = [](double t) { return 1.01 * t + 1.0 - std::cos(t); };
  auto G_inv = [&](double y) {
    double lo = 0, hi = 1;
    while (G(hi) < y) hi *= 2;
    for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
      double mid = 0.5 * (lo + hi);
      (G(mid) < y ? lo : hi) = mid;
    }
    return hi;
  };
  double worst = 0;
  int instances = 10;
  for (int inst = 0; inst < instances; ++inst) {
    const int n = pick(rng, 1, 4);
    std::vector<PowerProfile> fixed, trend;
    for (int i = 0; i < n; ++i) {
      double v = log_uniform(rng, 0.2, 5);
      fixed.emplace_back(power::Constant{v});
      trend.emplace_back(power::ScaledTrend{v, power::SineOffset{1.01, 1.0}});
    }
    const auto B = std::max<std::int64_t>(static_cast<std::int64_t>(std::ceil(uniform(rng, 0, 20))), 1);
    const double delta = bounds::next_time(fixed, 0.0, bounds::SumCount{B}).value();
    double prev = 0;
    for (int k = 1; k <= 50; ++k) {
      const TimePoint t = bounds::next_time(trend, prev, bounds::SumCount{B});
      const double err = t.is_infinite() ? INFINITY : std::abs(t.value() - G_inv(k * delta));
      worst = std::max(worst, err);
      if (t.is_infinite()) break;
      prev = t.value();
    }
  }
  std::ostringstream d;
  d << instances << " instances, k <= 50, max |t_k - G^-1(k delta)| " << fmt(worst);
  return {worst <= 1e-6, d.str()};
}

// ---------------------------------------------------------------- 4
Outcome criterion_heter_sandwich(std::uint64_t seed) {
  Rng rng = make_stream(seed, 4);
  int violations = 0;
  std::ostringstream first;
  for (int inst = 0; inst < 100; ++inst) {
    const int n = pick(rng, 1, 6);
    std::vector<double> v;
    std::vector<PowerProfile> profiles;
    for (int i = 0; i < n; ++i) {
      v.push_back(log_uniform(rng, 0.1, 10));
      profiles.emplace_back(power::Constant{v.back()});
    }
    const double S = pick(rng, 0, 4) == 0 ? 0.0 : uniform(rng, 0, 200);  // sigma^2 / eps
    double max_inv = 0, mean_inv = 0;
    for (double x : v) {
      max_inv = std::max(max_inv, 1 / x);
      mean_inv += 1 / x / n;
    }
    const double core = max_inv + mean_inv * S / n;
    const double lo = 0.25 * core, hi = 4 * core;
    const TimePoint t = bounds::next_time(profiles, 0.0, bounds::HarmonicCount{std::max(2 * S / n, 1.0)});
    const double delta = t.is_infinite() ? INFINITY : t.value();
    if (!(lo <= delta && delta <= hi)) {
      if (violations++ == 0)
        first << "instance " << inst << ": " << fmt(lo) << " <= " << fmt(delta) << " <= " << fmt(hi) << " fails";
    }
  }
  std::ostringstream d;
  d << "100 instances, violations " << violations;
  if (violations) d << "; " << first.str();
  return {violations == 0, d.str()};
}

// ---------------------------------------------------------------- 5
PowerProfile random_profile(Rng& rng) {
  switch (pick(rng, 0, 4)) {
    case 0: return power::Constant{uniform(rng, 0.5, 3)};
    case 1: {
      double period = uniform(rng, 1, 3);
      return power::PeriodicOutage{uniform(rng, 0.5, 3), period, period * uniform(rng, 0.3, 1)};
    }
    case 2: {
      power::PiecewiseConstant pc;
      double t = 0;
      int pieces = pick(rng, 2, 6);
      for (int j = 0; j < pieces; ++j) {
        pc.breakpoints.push_back(t);
        pc.values.push_back(j + 1 < pieces && pick(rng, 0, 3) == 0 ? 0.0 : uniform(rng, 0.3, 3));
        t += uniform(rng, 0.5, 10);
      }
      return pc;
    }
    case 3:
      return power::ScaledTrend{uniform(rng, 0.5, 2), power::SineOffset{1.2, uniform(rng, -1, 1)}};
    default: {
      power::Trace tr;
      double t = 0;
      for (int j = 0; j < 6; ++j) {
        tr.sample_times.push_back(t);
        tr.sample_powers.push_back(uniform(rng, 0.2, 3));
        t += uniform(rng, 0.5, 5);
      }
      return tr;
    }
  }
}

Outcome criterion_tightness(std::uint64_t seed) {
  Rng rng = make_stream(seed, 5);
  double worst = 0;
  std::ostringstream first;
  bool ok = true;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = pick(rng, 1, 4);
    std::vector<PowerProfile> profiles;
    for (int i = 0; i < n; ++i) profiles.push_back(random_profile(rng));
    bounds::ProblemConstants c;
    c.L = 1;
    c.delta = 1;
    c.epsilon = uniform(rng, 0.1, 0.5);
    c.sigma2 = c.epsilon * pick(rng, 0, 8) + (pick(rng, 0, 1) ? uniform(rng, 0, c.epsilon) : 0.0);
    c.workers = n;
    objectives::ProblemSpec problem;
    problem.objective = objectives::Quadratic{c.L, 3};
    problem.consts = c;
    problem.oracle = objectives::GaussianNoise{c.sigma2};
    problem.x0 = Vector::Constant(3, std::sqrt(2 * c.delta / (3 * c.L)));
    const auto driver = optim::make_driver(optim::Method::rennala, bounds::Regime::nonconvex, c);
    const auto run = optim::run_method(driver, problem, profiles, derive_seed(seed, inst));
    const auto seq = bounds::bound_sequence(profiles, c, bounds::BoundKind::rennala_upper);
    const double want = seq.final_time().value();
    const double rel = std::abs(run.total_time - want) / std::max(want, 1e-300);
    worst = std::max(worst, rel);
    if (!(rel <= 1e-6) || run.horizon_reached) {
      if (ok) first << "; instance " << inst << ": simulated " << fmt(run.total_time) << " bound " << fmt(want);
      ok = false;
    }
  }
  return {ok, "20 configs, max relative gap " + fmt(worst) + first.str()};
}

// ---------------------------------------------------------------- 6, 7, 8
double mean_grad_sq(const sim::RunResult& r, std::int64_t K) {
  double s = 0;
  std::int64_t m = 0;
  for (const auto& p : r.trajectory) {
    if (p.k < K) {
      s += p.grad_sq;
      ++m;
    }
  }
  return m == K ? s / static_cast<double>(m) : INFINITY;
}

Outcome criterion_rennala_convergence(std::uint64_t seed) {
  bounds::ProblemConstants c;
  c.L = 1;
  c.delta = 1;
  c.sigma2 = 100;
  c.epsilon = 0.01;
  c.workers = 4;
  const int d = 10;
  objectives::ProblemSpec problem;
  problem.objective = objectives::Quadratic{c.L, d};
  problem.consts = c;
  problem.oracle = objectives::GaussianNoise{c.sigma2};
  problem.x0 = Vector::Constant(d, std::sqrt(2 * c.delta / (c.L * d)));
  optim::Overrides o;
  o.batch = std::min<std::int64_t>(static_cast<std::int64_t>(std::ceil(c.sigma2 / c.epsilon)), 10000);
  o.iterations = 2400;
  o.stepsize = std::min(1 / c.L, c.epsilon * static_cast<double>(*o.batch) / (2 * c.L * c.sigma2));
  const auto driver = optim::make_driver(optim::Method::rennala, bounds::Regime::nonconvex, c, o);
  std::vector<PowerProfile> profiles{power::Constant{1}, power::Constant{2}, power::Constant{0.5}, power::Constant{4}};
  auto means = cli::parallel_map<double>(20, 0, [&](std::size_t s) {
    auto r = optim::run_method(driver, problem, profiles, derive_seed(seed, 600 + s));
    return mean_grad_sq(r, *o.iterations);
  });
  const double avg = std::accumulate(means.begin(), means.end(), 0.0) / 20;
  return {avg <= c.epsilon, "K=2400 S=" + std::to_string(*o.batch) + " gamma=" + fmt(*o.stepsize) +
                                ", mean |grad|^2 over k and 20 seeds " + fmt(avg) + " (eps 0.01)"};
}

Outcome criterion_malenia_convergence(std::uint64_t seed) {
  bounds::ProblemConstants c;
  c.L = 1;
  c.delta = 1;
  c.sigma2 = 10;
  c.epsilon = 0.01;
  c.workers = 4;
  const int d = 10;
  Rng rng = make_stream(seed, 7);
  objectives::HeterQuadratic h{c.L, {}, d};
  Vector mean = Vector::Zero(d);
  for (int i = 0; i < c.workers; ++i) {
    Vector ci(d);
    for (int j = 0; j < d; ++j) ci[j] = uniform(rng, -1, 1);
    h.centers.push_back(ci);
    mean += ci / c.workers;
  }
  objectives::ProblemSpec problem;
  problem.objective = h;
  problem.consts = c;
  problem.oracle = objectives::GaussianNoise{c.sigma2};
  problem.x0 = mean + Vector::Constant(d, std::sqrt(2 * c.delta / (c.L * d)));
  optim::Overrides o;
  o.iterations = 2400;
  const auto driver = optim::make_driver(optim::Method::malenia, bounds::Regime::nonconvex, c, o);
  std::vector<PowerProfile> profiles{power::Constant{1}, power::Constant{3},
                                     power::PeriodicOutage{2, 2, 1.2}, power::Constant{0.7}};
  struct Seed {
    double mean = 0;
    std::int64_t bad_exits = 0;
    std::int64_t iterations = 0;
  };
  const double target = static_cast<double>(driver.batch) / c.workers;
  auto runs = cli::parallel_map<Seed>(20, 0, [&](std::size_t s) {
    auto r = optim::run_method(driver, problem, profiles, derive_seed(seed, 700 + s));
    Seed out;
    out.mean = mean_grad_sq(r, driver.iterations);
    out.iterations = static_cast<std::int64_t>(r.batches.size());
    for (const auto& b : r.batches) {
      double inv = 0;
      bool zero = false;
      for (auto x : b) {
        if (x == 0) zero = true;
        else inv += 1.0 / static_cast<double>(x);
      }
      const double hm = zero ? 0.0 : static_cast<double>(b.size()) / inv;
      if (!(hm >= target * (1 - 1e-12))) ++out.bad_exits;
    }
    if (out.iterations != driver.iterations) ++out.bad_exits;
    return out;
  });
  double avg = 0;
  std::int64_t bad = 0;
  for (const auto& r : runs) {
    avg += r.mean / 20;
    bad += r.bad_exits;
  }
  return {avg <= c.epsilon && bad == 0,
          "n=4 sigma2=10 S=" + std::to_string(driver.batch) + " gamma=" + fmt(driver.stepsize) +
              ", mean |grad|^2 " + fmt(avg) + " (eps 0.01), harmonic exit violations " + std::to_string(bad)};
}

Outcome criterion_accelerated(std::uint64_t seed) {
  bounds::ProblemConstants c;
  c.L = 1;
  c.delta = 1;
  c.radius = 1;
  c.sigma2 = 1;
  c.epsilon = 0.01;
  c.workers = 3;
  const int d = 10;
  objectives::ProblemSpec problem;
  problem.objective = objectives::Quadratic{c.L, d};
  problem.consts = c;
  problem.oracle = objectives::GaussianNoise{c.sigma2};
  problem.x0 = Vector::Constant(d, 1 / std::sqrt(static_cast<double>(d)));  // |x0 - x*| = R
  const auto driver = optim::make_driver(optim::Method::accel_rennala, bounds::Regime::convex_smooth, c);
  std::vector<PowerProfile> profiles{power::Constant{1}, power::Constant{2}, power::Constant{5}};
  auto finals = cli::parallel_map<double>(20, 0, [&](std::size_t s) {
    auto r = optim::run_method(driver, problem, profiles, derive_seed(seed, 800 + s));
    if (r.trajectory.empty() || r.trajectory.back().k != driver.iterations) return double(INFINITY);
    return r.trajectory.back().f_value;  // f* = 0
  });
  const double avg = std::accumulate(finals.begin(), finals.end(), 0.0) / 20;
  return {driver.iterations == 80 && avg <= c.epsilon,
          "K=" + std::to_string(driver.iterations) + " S=" + std::to_string(driver.batch) + " gamma=" +
              fmt(driver.stepsize) + ", mean f(x^K) - f* " + fmt(avg) + " (eps 0.01)"};
}

// ---------------------------------------------------------------- 9
Outcome criterion_chain_properties(std::uint64_t seed) {
  Rng rng = make_stream(seed, 9);
  const int T = 20;
  int bad_inf = 0, bad_prog = 0, bad_norm = 0, bad_fd = 0, fd_checked = 0;
  double worst_inf = 0, worst_fd = 0;
  for (int s = 0; s < 10000; ++s) {
    const int m = pick(rng, 0, T);
    Vector x = Vector::Zero(T);
    const int style = pick(rng, 0, 2);
    for (int i = 0; i < m; ++i) {
      double v = style == 0 ? uniform(rng, -3, 3) : style == 1 ? uniform(rng, 0.3, 1.5) : uniform(rng, -1, 1);
      if (v == 0) v = 1e-3;
      x[i] = v;
    }
    const auto vg = objectives::worst_case_grad(x, T);
    const double inf_norm = vg.grad.lpNorm<Eigen::Infinity>();
    worst_inf = std::max(worst_inf, inf_norm);
    if (!(inf_norm <= objectives::kChainGradBound)) ++bad_inf;
    const int px = objectives::prog(x);
    if (objectives::prog(vg.grad) > px + 1) ++bad_prog;
    if (px < T && !(vg.grad.norm() > 1)) ++bad_norm;

    bool near_kink = false;
    for (int i = 0; i < T; ++i) near_kink = near_kink || std::abs(2 * std::abs(x[i]) - 1) <= 1e-3;
    if (near_kink) continue;
    ++fd_checked;
    Vector fd(T);
    const double h = 1e-5;
    for (int i = 0; i < T; ++i) {
      Vector a = x, b = x;
      a[i] += h;
      b[i] -= h;
      fd[i] = (objectives::worst_case_value(a, T) - objectives::worst_case_value(b, T)) / (2 * h);
    }
    const double rel = (fd - vg.grad).norm() / std::max(vg.grad.norm(), 1.0);
    worst_fd = std::max(worst_fd, rel);
    if (!(rel <= 1e-5)) ++bad_fd;
  }
  std::ostringstream d;
  d << "1e4 points: sup-norm max " << fmt(worst_inf) << " (violations " << bad_inf << "), chain rule violations "
    << bad_prog << ", norm<=1 with prog<T " << bad_norm << ", FD checked " << fd_checked << " worst rel "
    << fmt(worst_fd) << " (violations " << bad_fd << ")";
  return {bad_inf + bad_prog + bad_norm + bad_fd == 0, d.str()};
}

// ---------------------------------------------------------------- 10
Outcome criterion_zero_out(std::uint64_t seed) {
  Rng rng = make_stream(seed, 10);
  int bad = 0;
  std::ostringstream first;
  double worst_var = 0;
  constexpr int N = 100000;
  for (int trip = 0; trip < 20; ++trip) {
    const int T = pick(rng, 3, 20);
    const int m = pick(rng, 1, T - 1);
    Vector x = Vector::Zero(T);
    for (int i = 0; i < m; ++i) x[i] = uniform(rng, 0.6, 2.0);  // x_m > 1/2 so coordinate m+1 is live
    const double p = uniform(rng, 0.1, 0.95);
    const Vector g = objectives::worst_case_grad(x, T).grad;
    const int progress = objectives::prog(x);
    Vector sum = Vector::Zero(T), sumsq = Vector::Zero(T);
    double tot = 0, tot_sq = 0;
    std::int64_t unsuppressed_changed = 0;
    Vector draw(T);
    // Moments are taken around the true mean.
    for (int k = 0; k < N; ++k) {
      draw = objectives::zero_out_oracle(g, progress, p, rng);
      Vector dev = draw - g;
      for (int j = 0; j < std::min(progress, T); ++j) {
        if (dev[j] != 0) ++unsuppressed_changed;
      }
      sum += draw;
      sumsq += dev.cwiseProduct(dev);
      const double q = dev.squaredNorm();
      tot += q;
      tot_sq += q * q;
    }
    const double ginf = g.lpNorm<Eigen::Infinity>();
    const double sigma2 = ginf * ginf * (1 - p) / p;
    if (unsuppressed_changed) {
      if (bad++ == 0) first << "; triple " << trip << " changed a coordinate below prog(x)";
    }
    for (int j = progress; j < T; ++j) {
      const double true_var = g[j] * g[j] * (1 - p) / p;
      const double se = std::sqrt(true_var / N);
      const double mean = sum[j] / N;
      if (!(std::abs(mean - g[j]) <= 4 * se)) {
        if (bad++ == 0) first << "; triple " << trip << " coord " << j << " mean " << fmt(mean) << " vs " << fmt(g[j]);
      }
      if (g[j] != 0) {
        const double var = sumsq[j] / N;
        const double rel = std::abs(var - true_var) / true_var;
        worst_var = std::max(worst_var, rel);
        if (!(rel <= 0.05) || !(true_var <= sigma2 * (1 + 1e-12))) {
          if (bad++ == 0) first << "; triple " << trip << " coord " << j << " var " << fmt(var) << " vs " << fmt(true_var);
        }
      }
    }
    const double tv = tot / N;
    const double tv_se = std::sqrt(std::max(tot_sq / N - tv * tv, 0.0) / N);
    if (!(tv <= sigma2 + 3 * tv_se)) {
      if (bad++ == 0) first << "; triple " << trip << " total variance " << fmt(tv) << " vs " << fmt(sigma2);
    }
  }
  return {bad == 0, "20 triples x 1e5 draws, worst relative variance gap " + fmt(worst_var) + ", failures " +
                        std::to_string(bad) + first.str()};
}

// ---------------------------------------------------------------- 11
Outcome criterion_tails(std::uint64_t seed) {
  Rng rng = make_stream(seed, 11);
  const int trials = 2000;
  bool ok = true;
  std::ostringstream d;
  for (double p : {0.05, 0.1, 0.5}) {
    for (double delta : {0.05, 0.1}) {
      auto est = lab::tail_bound_check(
          lab::TailKind::chernoff_sum,
          lab::ChernoffSumParams{100, delta, [p](int, std::span<const std::int64_t>) { return p; }}, trials, rng);
      ok = ok && est.within(3.0);
      d << "sum p=" << fmt(p) << " delta=" << fmt(delta) << ": " << fmt(est.empirical) << "<=" << fmt(est.bound)
        << (est.within(3.0) ? "" : " FAIL") << "; ";
    }
    auto est = lab::tail_bound_check(lab::TailKind::many_geom,
                                     lab::ManyGeomParams{20, std::vector<double>(100, p)}, trials, rng);
    ok = ok && est.within(3.0);
    d << "groups p=" << fmt(p) << ": " << fmt(est.empirical) << "<=" << fmt(est.bound)
      << (est.within(3.0) ? "" : " FAIL") << "; ";
  }
  // Mixed per-group probabilities.
  std::vector<double> mixed;
  for (int k = 0; k < 100; ++k) mixed.push_back(k % 3 == 0 ? 0.05 : k % 3 == 1 ? 0.1 : 0.5);
  auto est = lab::tail_bound_check(lab::TailKind::many_geom, lab::ManyGeomParams{20, mixed}, trials, rng);
  ok = ok && est.within(3.0);
  d << "groups mixed: " << fmt(est.empirical) << "<=" << fmt(est.bound);
  return {ok, d.str()};
}

// ---------------------------------------------------------------- 12
Outcome criterion_lower_end_to_end(std::uint64_t seed) {
  bounds::ProblemConstants c;
  c.L = 1;
  c.delta = 1;
  // Chain length floor(L delta / (2 eps 152 12)) = 20.
  c.epsilon = 1.0 / (2 * objectives::kChainSmoothness * objectives::kChainGap * 20.5);
  c.workers = 4;
  // sigma^2 = 2 eps 23^2 / p with p = 0.9.
  c.sigma2 = 2 * c.epsilon * objectives::kChainGradBound * objectives::kChainGradBound / 0.9;
  auto wc = objectives::scaled_worst_case(c, objectives::Setup::homog);
  // Sine trends are left out here: their inverse needs libm calls per gradient and 200 seeds get slow.
  std::vector<PowerProfile> profiles{power::Constant{1.5}, power::PeriodicOutage{2, 3, 1.5},
                                     power::Trace{{0, 2, 4, 7}, {1, 2.5, 0.5, 1.2}},
                                     power::PiecewiseConstant{{0, 5, 9}, {0.5, 0, 2}}};
  const auto lower = bounds::bound_sequence(profiles, c, bounds::BoundKind::homog_lower);
  const TimePoint need = lower.final_time();
  const int T = wc.chain_length;
  optim::RunOptions ro;
  ro.stop_when = [T](const Vector& x) { return objectives::prog(x) >= T; };
  const auto driver = optim::make_driver(optim::Method::rennala, bounds::Regime::nonconvex, c);
  constexpr int seeds = 200;
  struct Run {
    double time = INFINITY;
    bool reached = false;
  };
  auto runs = cli::parallel_map<Run>(seeds, 0, [&](std::size_t s) {
    auto r = optim::run_method(driver, wc.problem, profiles, derive_seed(seed, 1200 + s), ro);
    Run out;
    if (!r.trajectory.empty() && r.trajectory.back().progress >= T) {
      out.reached = true;
      out.time = r.trajectory.back().time;
    }
    return out;
  });
  int hits = 0;
  double mean_time = 0;
  for (const auto& r : runs) {
    if (!r.reached || TimePoint(r.time) >= need) ++hits;
    mean_time += r.time / seeds;
  }
  const double frac = static_cast<double>(hits) / seeds;
  const double se = std::sqrt(0.25 / seeds);
  std::ostringstream d;
  d << "T=" << T << " p=" << fmt(wc.zero_out_p) << " S=" << driver.batch << ", lower bound time " << need.to_string()
    << ", mean time to prog=T " << fmt(mean_time) << ", fraction at or above bound " << fmt(frac) << " (need >= "
    << fmt(0.5 - 3 * se) << ")";
  return {frac >= 0.5 - 3 * se, d.str()};
}

// ---------------------------------------------------------------- 13
Outcome criterion_windows(std::uint64_t seed) {
  Rng rng = make_stream(seed, 13);
  int violations = 0, checked = 0, lib_reported = 0;
  std::ostringstream first;
  for (int inst = 0; inst < 50; ++inst) {
    const int n = pick(rng, 1, 5);
    std::vector<PowerProfile> profiles;
    for (int i = 0; i < n; ++i) profiles.push_back(random_profile(rng));
    bounds::ProblemConstants c;
    c.L = 1;
    c.delta = 1;
    c.epsilon = log_uniform(rng, 1e-4, 1e-2);
    c.sigma2 = pick(rng, 0, 4) == 0 ? 0.0 : log_uniform(rng, 1e-3, 10);
    c.workers = n;
    const int K = pick(rng, 1, 40);
    const int W = pick(rng, 1, 12);
    const auto wp = lab::window_params(profiles, K, c, W);
    lib_reported += static_cast<int>(lab::check_window_params(wp, profiles).size());
    for (int w = 1; w <= wp.windows(); ++w) {
      const TimePoint prev = wp.times[static_cast<std::size_t>(w - 1)];
      const TimePoint cur = wp.times[static_cast<std::size_t>(w)];
      if (prev.is_infinite()) continue;
      for (int i = 0; i < n; ++i) {
        const double p = wp.probs[static_cast<std::size_t>(w - 1)][static_cast<std::size_t>(i)];
        if (p == 0) continue;  // K / (8 p) is infinite
        ++checked;
        const TimePoint reach = profiles[static_cast<std::size_t>(i)].inverse(K / (8 * p), prev.value());
        if (!(reach >= cur)) {
          if (violations++ == 0)
            first << "; config " << inst << " w=" << w << " i=" << i << ": " << reach.to_string() << " < "
                  << cur.to_string();
        }
      }
    }
  }
  return {violations == 0 && lib_reported == 0,
          "50 configs, " + std::to_string(checked) + " (w, i) pairs, violations " + std::to_string(violations) +
              ", library check reports " + std::to_string(lib_reported) + first.str()};
}

// ---------------------------------------------------------------- 14
std::map<std::string, std::string> csv_bodies(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

Outcome criterion_determinism(std::uint64_t seed) {
  const std::vector<std::pair<std::string, std::string>> configs = {
      {"simulate rennala", R"({"experiment": "simulate",
        "workers": [{"type": "constant", "power": 1}, {"type": "periodic_outage", "power": 2, "period": 3, "active_len": 1},
                    {"type": "random_on_off", "power": 1.5, "mean_on": 2, "mean_off": 1, "length": 200}],
        "constants": {"L": 1, "delta": 1, "sigma2": 0.5, "epsilon": 0.1},
        "seeds": [3, 4],
        "problem": {"objective": {"type": "quadratic", "dim": 5}, "oracle": "gaussian"},
        "method": {"name": "rennala", "iterations": 60}})"},
      {"simulate malenia", R"({"experiment": "simulate",
        "workers": [{"type": "constant", "power": 1}, {"type": "constant", "power": 3}],
        "constants": {"L": 1, "delta": 1, "sigma2": 0.5, "epsilon": 0.1},
        "seeds": [9],
        "problem": {"objective": {"type": "heter_quadratic", "dim": 2, "centers": [[1, 0], [0, 1]]}, "oracle": "gaussian"},
        "method": {"name": "malenia", "iterations": 40}})"},
      {"adversary homog", R"({"experiment": "adversary",
        "workers": [{"type": "constant", "power": 1}, {"type": "scaled_trend", "power": 1, "trend": {"type": "sine_offset", "offset": 1.5, "amplitude": 1}}],
        "constants": {"L": 1, "delta": 1, "sigma2": 0.001, "epsilon": 0.00001},
        "adversary": {"mode": "homog", "trials": 50, "T": 10, "p": 0.3}})"},
      {"adversary markov", R"({"experiment": "adversary",
        "workers": [{"type": "constant", "power": 1}, {"type": "constant", "power": 4}, {"type": "periodic_outage", "power": 2, "period": 2, "active_len": 1}],
        "constants": {"L": 1, "delta": 1, "sigma2": 0.5, "epsilon": 0.001},
        "adversary": {"mode": "markov", "trials": 50, "T": 8, "K": 6, "block": 1}})"},
  };
  const auto base = std::filesystem::temp_directory_path() /
                    ("hetsgd_determinism_" + std::to_string(::getpid()) + "_" + std::to_string(seed));
  bool ok = true;
  std::ostringstream d;
  int files = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto cfg = cli::parse_config(configs[i].second);
    std::map<std::string, std::string> bodies[2];
    for (int rep = 0; rep < 2; ++rep) {
      const auto dir = base / (std::to_string(i) + "_" + std::to_string(rep));
      std::filesystem::remove_all(dir);
      cli::ExecuteOptions opts;
      opts.out = dir.string();
      std::ostringstream sink;
      opts.log = &sink;
      cli::execute(cfg, opts);
      bodies[rep] = csv_bodies(dir);
    }
    files += static_cast<int>(bodies[0].size());
    if (bodies[0].empty() || bodies[0] != bodies[1]) {
      ok = false;
      d << configs[i].first << " differs; ";
    }
  }
  std::filesystem::remove_all(base);
  d << configs.size() << " configs run twice, " << files << " CSV files compared";
  return {ok, d.str()};
}

using Runner = Outcome (*)(std::uint64_t);

struct Entry {
  const char* name;
  Runner run;
};

const Entry kEntries[kCriteria] = {
    {"next_time vs grid oracle", criterion_bisection},
    {"fixed homog sandwich", criterion_homog_sandwich},
    {"trend reduction", criterion_trend},
    {"fixed heter sandwich", criterion_heter_sandwich},
    {"simulator matches bound", criterion_tightness},
    {"rennala convergence", criterion_rennala_convergence},
    {"malenia convergence", criterion_malenia_convergence},
    {"accelerated rennala", criterion_accelerated},
    {"chain function properties", criterion_chain_properties},
    {"zero-out oracle moments", criterion_zero_out},
    {"geometric tail bounds", criterion_tails},
    {"lower bound end to end", criterion_lower_end_to_end},
    {"window parameters", criterion_windows},
    {"determinism", criterion_determinism},
};

}  // namespace

std::string criterion_name(int id) {
  if (id < 1 || id > kCriteria) return "unknown";
  return kEntries[id - 1].name;
}

CriterionResult run_criterion(int id, std::uint64_t seed) {
  CriterionResult r;
  r.id = id;
  r.name = criterion_name(id);
  if (id < 1 || id > kCriteria) {
    r.detail = "no such criterion";
    return r;
  }
  const auto start = std::chrono::steady_clock::now();
  try {
    auto o = kEntries[id - 1].run(seed);
    r.passed = o.passed;
    r.detail = o.detail;
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  // Runtime limits that are part of the checks.
  const double limit = id == 1 ? 10 : id == 6 ? 120 : id == 11 ? 30 : 0;
  if (limit > 0 && r.seconds >= limit) {
    r.passed = false;
    r.detail += "; runtime " + format_number(r.seconds) + " s over " + format_number(limit) + " s";
  }
  return r;
}

std::vector<CriterionResult> run_all(const std::vector<int>& ids, std::uint64_t seed) {
  std::vector<int> todo = ids;
  if (todo.empty()) {
    for (int i = 1; i <= kCriteria; ++i) todo.push_back(i);
  }
  std::sort(todo.begin(), todo.end());
  todo.erase(std::unique(todo.begin(), todo.end()), todo.end());
  std::vector<CriterionResult> out;
  for (int id : todo) out.push_back(run_criterion(id, seed));
  return out;
}

}  // namespace hetsgd::verify
