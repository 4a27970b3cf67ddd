#include "hetsgd/lowerbound_lab.hpp"

#include <algorithm>
#include <cmath>

#include "hetsgd/error.hpp"
#include "hetsgd/numeric.hpp"

namespace hetsgd::lab {

namespace {
constexpr double kGradBound = 23.0;
}

std::int64_t sample_geometric(double p, Rng& rng) {
  if (!(p > 0 && p <= 1)) throw DomainError("sample_geometric: p must be in (0, 1]");
  if (p == 1.0) return 1;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = 1.0 - unif(rng);  // (0, 1]
  double k = std::ceil(std::log(u) / std::log1p(-p));
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(k));
}

AdversaryTrace homog_adversary_run(std::span<const PowerProfile> profiles, double p, int T, Rng& rng) {
  if (T < 1) throw DomainError("homog_adversary_run: T must be >= 1");
  AdversaryTrace tr;
  TimePoint prev = 0.0;
  for (int k = 0; k < T; ++k) {
    std::int64_t eta = sample_geometric(p, rng);
    tr.draws.push_back(eta);
    prev = prev.is_infinite() ? prev : bounds::next_time(profiles, prev.value(), bounds::SumCount{eta});
    tr.times.push_back(prev);
  }
  return tr;
}

std::vector<TimePoint> quarter_threshold_sequence(std::span<const PowerProfile> profiles, double p, int steps) {
  if (!(p > 0 && p <= 1)) throw DomainError("quarter_threshold_sequence: p must be in (0, 1]");
  bounds::SumCount rule{std::max<std::int64_t>(snap_ceil_int(1.0 / (4 * p)), 1)};
  std::vector<TimePoint> out{0.0};
  for (int k = 0; k < steps; ++k) {
    TimePoint prev = out.back();
    out.push_back(prev.is_infinite() ? prev : bounds::next_time(profiles, prev.value(), rule));
  }
  return out;
}

std::string to_string(TailKind k) { return k == TailKind::chernoff_sum ? "chernoff_sum" : "many_geom"; }

TailKind parse_tail_kind(const std::string& name) {
  if (name == "chernoff_sum") return TailKind::chernoff_sum;
  if (name == "many_geom") return TailKind::many_geom;
  throw DomainError("unknown tail bound kind '" + name + "'");
}

double TailEstimate::standard_error() const {
  double b = std::clamp(bound, 0.0, 1.0);
  return std::sqrt(b * (1 - b) / std::max(trials, 1));
}

TailEstimate tail_bound_check(TailKind kind, const TailParams& params, int trials, Rng& rng) {
  if (trials < 1000) throw DomainError("tail_bound_check: need at least 1000 trials");
  TailEstimate est;
  est.trials = trials;
  if (kind == TailKind::chernoff_sum) {
    const auto* cp = std::get_if<ChernoffSumParams>(&params);
    if (!cp) throw DomainError("tail_bound_check: chernoff_sum needs chernoff parameters");
    if (cp->T < 1 || !(cp->delta > 0 && cp->delta <= 1) || !cp->p)
      throw DomainError("chernoff_sum: need T >= 1, delta in (0, 1] and a probability schedule");
    est.bound = cp->delta;
    const double level = cp->T / 2.0 + std::log(cp->delta);
    std::vector<std::int64_t> hist;
    for (int t = 0; t < trials; ++t) {
      hist.clear();
      int count = 0;
      for (int i = 0; i < cp->T; ++i) {
        double p = cp->p(i, hist);
        std::int64_t eta = sample_geometric(p, rng);
        hist.push_back(eta);
        if (static_cast<double>(eta) > 1.0 / (4 * p)) ++count;
      }
      if (count <= level) ++est.hits;
    }
  } else {
    const auto* mp = std::get_if<ManyGeomParams>(&params);
    if (!mp) throw DomainError("tail_bound_check: many_geom needs many_geom parameters");
    if (mp->K < 1 || mp->probs.empty()) throw DomainError("many_geom: need K >= 1 and at least one group");
    est.bound = static_cast<double>(mp->probs.size()) * std::exp(-mp->K / 2.0);
    for (int t = 0; t < trials; ++t) {
      bool hit = false;
      for (double p : mp->probs) {
        std::int64_t sum = 0;
        for (int j = 0; j < mp->K; ++j) sum += sample_geometric(p, rng);
        if (static_cast<double>(sum) <= mp->K / (8 * p)) hit = true;
      }
      if (hit) ++est.hits;
    }
  }
  est.empirical = static_cast<double>(est.hits) / trials;
  return est;
}

int WindowParams::owner(int w, std::int64_t j) const {
  if (w < 1 || w > static_cast<int>(counts.size())) throw DomainError("owner: window out of range");
  if (j < 1 || j > blocks) throw DomainError("owner: block out of range");
  const auto& a = counts[static_cast<std::size_t>(w - 1)];
  std::int64_t edge = 1;
  for (std::size_t i = 0; i < a.size(); ++i) {
    edge += a[i];
    if (j < edge) return static_cast<int>(i);
  }
  throw DomainError("owner: segments do not cover the block");
}

WindowParams window_params(std::span<const PowerProfile> profiles, int K, const ProblemConstants& c, int windows,
                           const bounds::SearchOptions& opts) {
  if (profiles.empty()) throw DomainError("window_params: need at least one worker");
  if (K < 1 || windows < 1) throw DomainError("window_params: K and the window count must be >= 1");
  if (!(c.epsilon > 0) || !(c.sigma2 >= 0)) throw DomainError("window_params: need epsilon > 0 and sigma2 >= 0");
  const std::size_t n = profiles.size();
  const double nd = static_cast<double>(n);
  const double coef = K * c.sigma2 / (nd * nd * 4 * c.epsilon * kGradBound * kGradBound);

  WindowParams out;
  out.chunk = K;
  out.times.push_back(0.0);
  std::vector<std::vector<std::int64_t>> bar;

  for (int w = 1; w <= windows; ++w) {
    std::vector<std::int64_t> abar(n, 0);
    TimePoint prev = out.times.back();
    if (prev.is_infinite()) {
      abar[0] = 1;
      bar.push_back(abar);
      out.times.push_back(prev);
      out.option.push_back(0);
      continue;
    }
    const double base = prev.value();
    // Every worker has done K/16 work.
    TimePoint t1 = base;
    std::size_t jstar = 0;
    for (std::size_t j = 0; j < n; ++j) {
      TimePoint tj = power::inverse_work(profiles[j], K / 16.0, base);
      if (tj > t1) {
        t1 = tj;
        jstar = j;
      }
    }
    // Noise balance: sum_i coef / (V_i(t) - V_i(prev)) = 64.
    TimePoint t2 = base;
    if (coef > 0) {
      auto balanced = [&](double t) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) {
          double dv = power::work(profiles[i], base, t).value();
          if (!(dv > 0)) return false;
          s += coef / dv;
        }
        return s <= 64.0;
      };
      double lo = base, step = 1.0, hi = base + step;
      bool found = true;
      while (!balanced(hi)) {
        if (hi > opts.horizon) {
          found = false;
          break;
        }
        lo = hi;
        step *= 2;
        hi = base + step;
      }
      t2 = found ? TimePoint(bisect_leftmost(lo, hi, balanced)) : TimePoint::infinity();
    }
    TimePoint tw = max(t1, t2);
    if (tw.is_infinite()) {
      abar[0] = 1;
      out.option.push_back(0);
    } else if (t1 > t2) {
      abar[jstar] = 1;
      out.option.push_back(1);
    } else {
      std::vector<double> dv(n);
      for (std::size_t i = 0; i < n; ++i) dv[i] = power::work(profiles[i], base, tw).value();
      double mx = *std::max_element(dv.begin(), dv.end());
      for (std::size_t i = 0; i < n; ++i) abar[i] = std::max<std::int64_t>(snap_floor_int(mx / dv[i]), 1);
      out.option.push_back(2);
    }
    bar.push_back(abar);
    out.times.push_back(tw);
  }
  {
    std::vector<std::int64_t> last(n, 0);
    last[0] = 1;
    bar.push_back(last);
  }

  std::int64_t S = 0;
  for (const auto& a : bar) {
    std::int64_t s = 0;
    for (auto x : a) s += x;
    S = std::max(S, s);
  }
  out.blocks = S;

  for (const auto& abar : bar) {
    std::int64_t sum = 0;
    for (auto x : abar) sum += x;
    std::vector<std::int64_t> a = abar;
    if (sum < S) {
      std::int64_t kw = std::max<std::int64_t>(2, (S + sum - 1) / sum);
      std::int64_t rest = S - (kw - 1) * sum;
      for (std::size_t i = 0; i < n; ++i) {
        std::int64_t r = std::min(abar[i], rest);
        a[i] = (kw - 1) * abar[i] + r;
        rest -= r;
      }
    }
    std::vector<double> p(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (a[i] == 0) continue;
      p[i] = c.sigma2 == 0 ? 1.0
                           : std::min(4 * c.epsilon * kGradBound * kGradBound * static_cast<double>(a[i]) * nd * nd /
                                          (c.sigma2 * static_cast<double>(S)),
                                      1.0);
    }
    out.counts.push_back(std::move(a));
    out.probs.push_back(std::move(p));
  }
  return out;
}

std::vector<WindowViolation> check_window_params(const WindowParams& params, std::span<const PowerProfile> profiles) {
  std::vector<WindowViolation> bad;
  for (int w = 1; w <= params.windows(); ++w) {
    TimePoint prev = params.times[static_cast<std::size_t>(w - 1)];
    TimePoint need = params.times[static_cast<std::size_t>(w)];
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      double p = params.probs[static_cast<std::size_t>(w - 1)][i];
      TimePoint reached = TimePoint::infinity();
      if (p > 0 && prev.is_finite()) reached = power::inverse_work(profiles[i], params.chunk / (8 * p), prev.value());
      if (reached < need) bad.push_back(WindowViolation{w, static_cast<int>(i), reached, need});
    }
  }
  return bad;
}

MarkovOutcome markov_window_run(const WindowParams& params, std::span<const PowerProfile> profiles,
                                std::int64_t block, Rng& rng) {
  const int T = params.windows();
  int w = 1;
  for (int m = 1; m <= T; ++m) {
    int i = params.owner(w, block);
    double p = params.probs[static_cast<std::size_t>(w - 1)][static_cast<std::size_t>(i)];
    std::int64_t eta = sample_geometric(p, rng);
    TimePoint prev = params.times[static_cast<std::size_t>(w - 1)];
    TimePoint need = w <= T ? params.times[static_cast<std::size_t>(w)] : TimePoint::infinity();
    if (prev.is_infinite()) continue;
    TimePoint reached = power::inverse_work(profiles[static_cast<std::size_t>(i)], static_cast<double>(eta), prev.value());
    // Small slack absorbs bisection rounding in the window times.
    bool advance = reached.is_infinite() ||
                   (need.is_finite() && reached.value() >= need.value() - 1e-12 * std::max(1.0, need.value()));
    if (advance) ++w;
  }
  MarkovOutcome out;
  out.final_window = w;
  out.necessary_time = params.times[static_cast<std::size_t>(std::min(w - 1, T))];
  return out;
}

}  // namespace hetsgd::lab
