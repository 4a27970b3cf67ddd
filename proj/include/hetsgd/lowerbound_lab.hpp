#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hetsgd/bound_calc.hpp"
#include "hetsgd/power_model.hpp"
#include "hetsgd/rng.hpp"

namespace hetsgd::lab {

using bounds::ProblemConstants;
using power::PowerProfile;

/// Support {1, 2, ...}, P(k) = (1-p)^(k-1) p, by inverse CDF.
std::int64_t sample_geometric(double p, Rng& rng);

struct AdversaryTrace {
  std::vector<TimePoint> times;            // t_1 .. t_T
  std::vector<std::int64_t> draws;         // eta_1 .. eta_T
  std::uint64_t seed = 0;
};

/// t_k = next_time(profiles, t_{k-1}, SumCount{eta_k}), eta_k ~ Geometric(p).
AdversaryTrace homog_adversary_run(std::span<const PowerProfile> profiles, double p, int T, Rng& rng);

/// Deterministic comparison sequence with per-step threshold max(ceil(1/(4p)), 1).
std::vector<TimePoint> quarter_threshold_sequence(std::span<const PowerProfile> profiles, double p, int steps);

/// Success probability for index i given earlier draws.
using ProbabilitySchedule = std::function<double(int, std::span<const std::int64_t>)>;

struct ChernoffSumParams {
  int T = 100;
  double delta = 0.1;
  ProbabilitySchedule p;
};
struct ManyGeomParams {
  int K = 20;
  std::vector<double> probs;  // one per group
};
using TailParams = std::variant<ChernoffSumParams, ManyGeomParams>;
enum class TailKind { chernoff_sum, many_geom };
std::string to_string(TailKind k);
TailKind parse_tail_kind(const std::string& name);

struct TailEstimate {
  double empirical = 0;
  double bound = 0;
  int trials = 0;
  std::int64_t hits = 0;
  /// Binomial standard error at the bound.
  double standard_error() const;
  bool within(double slack_se = 3.0) const { return empirical <= bound + slack_se * standard_error(); }
};

/// chernoff_sum: P(sum 1[eta_i > 1/(4 p_i)] <= T/2 + ln delta) against delta.
/// many_geom: P(exists k: sum_{j<=K} eta_{k,j} <= K/(8 p_k)) against groups * e^{-K/2}.
TailEstimate tail_bound_check(TailKind kind, const TailParams& params, int trials, Rng& rng);

struct WindowParams {
  std::vector<TimePoint> times;                  // t_0 .. t_W
  std::vector<std::vector<std::int64_t>> counts; // a[w-1][i], w = 1 .. W+1
  std::vector<std::vector<double>> probs;        // p[w-1][i], w = 1 .. W+1; 0 where a = 0
  std::vector<int> option;                       // 1 or 2 per window, 0 for an unreachable window
  std::int64_t blocks = 0;                       // S
  int chunk = 1;                                 // K

  int windows() const { return static_cast<int>(times.size()) - 1; }
  /// 0-based worker holding block j (1-based) in window w (1-based).
  int owner(int w, std::int64_t j) const;
};

/// Window recursion with per-window worker segments and probabilities.
WindowParams window_params(std::span<const PowerProfile> profiles, int K, const ProblemConstants& c, int windows,
                           const bounds::SearchOptions& opts = {});

struct WindowViolation {
  int window = 0;
  int worker = 0;
  TimePoint reached;
  TimePoint required;
};
/// Checks V_i^-1(K/(8 p) + V_i(t_{w-1})) >= t_w for every window and worker.
std::vector<WindowViolation> check_window_params(const WindowParams& params, std::span<const PowerProfile> profiles);

struct MarkovOutcome {
  int final_window = 1;
  TimePoint necessary_time;  // t_{final_window - 1}
};
/// Markov window process for one block over `windows()` coordinates.
MarkovOutcome markov_window_run(const WindowParams& params, std::span<const PowerProfile> profiles,
                                std::int64_t block, Rng& rng);

}  // namespace hetsgd::lab
