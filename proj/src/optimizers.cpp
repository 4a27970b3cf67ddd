#include "hetsgd/optimizers.hpp"

#include <algorithm>
#include <cmath>

#include "hetsgd/error.hpp"
#include "hetsgd/numeric.hpp"

namespace hetsgd::optim {

std::string to_string(Method m) {
  switch (m) {
    case Method::rennala: return "rennala";
    case Method::malenia: return "malenia";
    case Method::minibatch: return "minibatch";
    case Method::async: return "async";
    case Method::accel_rennala: return "accel_rennala";
    case Method::accel_malenia: return "accel_malenia";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (auto m : {Method::rennala, Method::malenia, Method::minibatch, Method::async, Method::accel_rennala,
                 Method::accel_malenia}) {
    if (to_string(m) == name) return m;
  }
  throw DomainError("unknown method '" + name + "'");
}

namespace {

bool is_heter(Method m) { return m == Method::malenia || m == Method::accel_malenia; }
bool is_accel(Method m) { return m == Method::accel_rennala || m == Method::accel_malenia; }

std::int64_t batch_floor(Method m, const ProblemConstants& c) {
  return is_heter(m) ? std::max(c.workers, 1) : 1;
}

}  // namespace

MethodParams method_params(Method method, Regime regime, const ProblemConstants& c) {
  if (!(c.L > 0) || !(c.epsilon > 0) || !(c.delta > 0) || !(c.sigma2 >= 0))
    throw DomainError("method_params: need L, delta, epsilon > 0 and sigma2 >= 0");
  const double n = std::max(c.workers, 1);
  MethodParams p;
  if (is_accel(method) != (regime == Regime::convex_smooth))
    throw DomainError("accelerated methods go with the convex_smooth regime and only there");
  if ((method == Method::minibatch || method == Method::async) && regime != Regime::nonconvex)
    throw DomainError("minibatch and async baselines are nonconvex only");

  switch (regime) {
    case Regime::nonconvex: {
      p.iterations = bounds::iterations_needed(regime, c);
      const double noise_batch = static_cast<double>(snap_ceil_int(c.sigma2 / c.epsilon));
      switch (method) {
        case Method::rennala:
          p.stepsize = 1.0 / (2 * c.L);
          p.batch = std::max<std::int64_t>(static_cast<std::int64_t>(noise_batch), 1);
          break;
        case Method::malenia:
          p.batch = std::max<std::int64_t>(static_cast<std::int64_t>(noise_batch), batch_floor(method, c));
          p.stepsize = c.sigma2 == 0 ? 1.0 / c.L
                                     : std::min(1.0 / c.L, c.epsilon * static_cast<double>(p.batch) / (2 * c.L * c.sigma2));
          break;
        case Method::minibatch:
          p.batch = static_cast<std::int64_t>(n);
          p.stepsize = c.sigma2 == 0 ? 1.0 / c.L : std::min(1.0 / c.L, c.epsilon * n / (2 * c.L * c.sigma2));
          p.iterations = std::max<std::int64_t>(
              snap_ceil_int(24 * c.L * c.delta / c.epsilon * std::max(1.0, c.sigma2 / (n * c.epsilon))), 1);
          break;
        case Method::async:
          p.batch = 1;
          p.stepsize = (c.sigma2 == 0 ? 1.0 / c.L : std::min(1.0 / c.L, c.epsilon / (c.L * c.sigma2))) / n;
          p.iterations = std::max<std::int64_t>(snap_ceil_int(12 * c.delta / (p.stepsize * c.epsilon)), 1);
          break;
        default:
          break;
      }
      break;
    }
    case Regime::convex_nonsmooth: {
      if (!c.lipschitz) throw DomainError("convex_nonsmooth needs M");
      const double M = *c.lipschitz;
      if (!(M > 0)) throw DomainError("M must be > 0");
      p.iterations = bounds::iterations_needed(regime, c);
      p.batch = std::max<std::int64_t>(snap_ceil_int(c.sigma2 / (M * M)), batch_floor(method, c));
      p.stepsize = c.epsilon / (M * M + c.sigma2 / static_cast<double>(p.batch));
      break;
    }
    case Regime::convex_smooth: {
      if (!c.radius) throw DomainError("convex_smooth needs R");
      const double R = *c.radius;
      p.iterations = bounds::iterations_needed(regime, c);
      p.batch = std::max<std::int64_t>(snap_ceil_int(c.sigma2 * R / (std::pow(c.epsilon, 1.5) * std::sqrt(c.L))),
                                       batch_floor(method, c));
      const double K = static_cast<double>(p.iterations);
      p.stepsize = 1.0 / (4 * c.L);
      if (c.sigma2 > 0) {
        p.stepsize = std::min(p.stepsize, std::sqrt(3 * R * R * static_cast<double>(p.batch) /
                                                    (4 * c.sigma2 * (K + 1) * (K + 2) * (K + 2))));
      }
      break;
    }
  }
  return p;
}

AlgorithmDriver make_driver(Method method, Regime regime, const ProblemConstants& c, const Overrides& o) {
  MethodParams p = method_params(method, regime, c);
  AlgorithmDriver d{method, o.stepsize.value_or(p.stepsize), o.batch.value_or(p.batch),
                    o.iterations.value_or(p.iterations)};
  if (!(d.stepsize > 0) || d.batch < 1 || d.iterations < 1)
    throw DomainError("driver needs stepsize > 0, batch >= 1, iterations >= 1");
  return d;
}

double harmonic_batch(std::span<const std::int64_t> counts) {
  if (counts.empty()) return 0;
  double inv = 0;
  for (auto b : counts) {
    if (b <= 0) return 0;
    inv += 1.0 / static_cast<double>(b);
  }
  return static_cast<double>(counts.size()) / inv;
}

bool malenia_exit(std::span<const std::int64_t> counts, double S) {
  const double target = S / static_cast<double>(counts.size());
  return harmonic_batch(counts) >= target * (1 - 1e-12);
}

AcceleratedState accelerated_start(const Vector& x0) { return AcceleratedState{x0, x0, x0}; }

Vector accelerated_query_point(const AcceleratedState& s, std::int64_t k) {
  const double a = 2.0 / static_cast<double>(k + 2);
  return (1 - a) * s.x + a * s.u;
}

AcceleratedState accelerated_update(const AcceleratedState& s, const Vector& g, std::int64_t k, double gamma,
                                    double divisor) {
  if (k < 0) throw DomainError("accelerated_update: k must be >= 0");
  const double a = 2.0 / static_cast<double>(k + 2);
  const double step = gamma * static_cast<double>(k + 1);
  AcceleratedState out;
  out.y = (1 - a) * s.x + a * s.u;
  out.u = s.u - (step / divisor) * g;
  out.x = (1 - a) * s.x + a * out.u;
  return out;
}

namespace {

struct Collector {
  sim::Session& s;
  int n;
  std::vector<std::int64_t> counts;
  std::vector<Vector> sums;
  int closer = -1;

  explicit Collector(sim::Session& session) : s(session), n(session.workers()), counts(static_cast<std::size_t>(n), 0) {}

  // Sum of the first S gradients at q, re-asking each finisher.
  bool sum_of(const Vector& q, std::int64_t S, Vector& sum) {
    sum.setZero(q.size());
    std::fill(counts.begin(), counts.end(), 0);
    for (int w = 0; w < n; ++w) s.start(w, q);
    for (std::int64_t got = 0; got < S;) {
      auto a = s.wait_next();
      if (!a) return false;
      sum += *a->gradient;
      ++counts[static_cast<std::size_t>(a->worker)];
      closer = a->worker;
      if (++got < S) s.start(a->worker, q);
    }
    s.stop_all();
    return true;
  }

  // (1/n) sum_i (1/B_i) g_i once the harmonic exit condition holds.
  bool harmonic_of(const Vector& q, double S, Vector& agg) {
    sums.assign(static_cast<std::size_t>(n), Vector::Zero(q.size()));
    std::fill(counts.begin(), counts.end(), 0);
    for (int w = 0; w < n; ++w) s.start(w, q);
    while (!malenia_exit(counts, S)) {
      auto a = s.wait_next();
      if (!a) return false;
      auto w = static_cast<std::size_t>(a->worker);
      sums[w] += *a->gradient;
      ++counts[w];
      closer = a->worker;
      if (!malenia_exit(counts, S)) s.start(a->worker, q);
    }
    s.stop_all();
    agg.setZero(q.size());
    for (int i = 0; i < n; ++i) {
      auto w = static_cast<std::size_t>(i);
      agg += sums[w] / static_cast<double>(counts[w]);
    }
    agg /= static_cast<double>(n);
    return true;
  }

  // One gradient from every worker at q.
  bool one_each(const Vector& q, Vector& sum) {
    sum.setZero(q.size());
    std::fill(counts.begin(), counts.end(), 0);
    for (int w = 0; w < n; ++w) s.start(w, q);
    for (int got = 0; got < n; ++got) {
      auto a = s.wait_next();
      if (!a) return false;
      sum += *a->gradient;
      ++counts[static_cast<std::size_t>(a->worker)];
      closer = a->worker;
    }
    s.stop_all();
    return true;
  }
};

bool should_stop(const RunOptions& o, const Vector& x) { return o.stop_when && o.stop_when(x); }

}  // namespace

sim::Algorithm make_algorithm(const AlgorithmDriver& d, const RunOptions& options) {
  return [d, options](sim::Session& s) {
    Collector col(s);
    Vector x = s.problem().start();
    Vector g(x.size());
    s.record_iterate(x);
    if (should_stop(options, x)) return;
    const double S = static_cast<double>(d.batch);

    switch (d.method) {
      case Method::rennala:
      case Method::malenia:
      case Method::minibatch:
        for (std::int64_t k = 0; k < d.iterations; ++k) {
          bool ok = d.method == Method::rennala   ? col.sum_of(x, d.batch, g)
                    : d.method == Method::malenia ? col.harmonic_of(x, S, g)
                                                  : col.one_each(x, g);
          if (!ok) return;
          double scale = d.method == Method::rennala     ? d.stepsize / S
                         : d.method == Method::minibatch ? d.stepsize / static_cast<double>(col.n)
                                                         : d.stepsize;
          x.noalias() -= scale * g;
          s.note_batch(col.counts, col.closer);
          s.record_iterate(x);
          if (should_stop(options, x)) return;
        }
        return;
      case Method::async: {
        for (int w = 0; w < col.n; ++w) s.start(w, x);
        for (std::int64_t k = 0; k < d.iterations; ++k) {
          auto a = s.wait_next();
          if (!a) return;
          x.noalias() -= d.stepsize * *a->gradient;
          s.record_iterate(x);
          if (should_stop(options, x)) return;
          s.start(a->worker, x);
        }
        s.stop_all();
        return;
      }
      case Method::accel_rennala:
      case Method::accel_malenia: {
        AcceleratedState st = accelerated_start(x);
        for (std::int64_t k = 0; k < d.iterations; ++k) {
          Vector y = accelerated_query_point(st, k);
          bool ok = d.method == Method::accel_rennala ? col.sum_of(y, d.batch, g) : col.harmonic_of(y, S, g);
          if (!ok) return;
          st = accelerated_update(st, g, k, d.stepsize, d.method == Method::accel_rennala ? S : 1.0);
          s.note_batch(col.counts, col.closer);
          s.record_iterate(st.x);
          if (should_stop(options, st.x)) return;
        }
        return;
      }
    }
  };
}

sim::RunResult run_method(const AlgorithmDriver& driver, const ProblemSpec& problem,
                          std::span<const PowerProfile> profiles, std::uint64_t seed, const RunOptions& options) {
  // Malenia also accepts homogeneous objectives: every f_i equals f.
  return sim::run_protocol(problem, make_algorithm(driver, options), profiles, options.horizon, seed, options.session);
}

}  // namespace hetsgd::optim
