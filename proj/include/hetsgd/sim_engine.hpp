#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <span>
#include <vector>

#include "hetsgd/objectives.hpp"
#include "hetsgd/power_model.hpp"
#include "hetsgd/rng.hpp"

namespace hetsgd::sim {

using objectives::ProblemSpec;
using objectives::Vector;
using power::PowerProfile;

enum class Control { proceed = 0, stop = 1 };

/// Per-worker oracle memory: start time, query point, busy flag.
struct OracleState {
  double start_time = 0.0;
  Vector point;
  bool busy = false;
};

struct OracleStep {
  OracleState state;
  Vector output;  // zero unless delivered
  bool delivered = false;
};

/// One protocol interaction with a worker's oracle at time t.
OracleStep oracle_step(const OracleState& state, double t, const Vector& x, Control c, const PowerProfile& profile,
                       const ProblemSpec& problem, int worker, Rng& rng);

/// Earliest time one full gradient started at `start` is done.
TimePoint completion_time(const PowerProfile& profile, double start);

struct TrajectoryPoint {
  std::int64_t k = 0;
  double time = 0;
  double grad_sq = 0;
  double f_value = 0;
  int progress = 0;
};

struct GradientRecord {
  std::int64_t iteration = 0;
  int worker = 0;
  double time = 0;
  Vector gradient;
};

struct RunResult {
  std::vector<TrajectoryPoint> trajectory;
  std::vector<std::pair<std::int64_t, Vector>> iterates;  // thinned
  std::vector<std::int64_t> gradients_per_worker;
  /// Gradients used per worker, one row per finished iteration (filled by drivers).
  std::vector<std::vector<std::int64_t>> batches;
  /// Worker whose arrival closed each iteration.
  std::vector<int> closing_worker;
  std::vector<GradientRecord> gradient_log;
  double total_time = 0;
  std::uint64_t seed = 0;
  bool horizon_reached = false;
  bool zero_respecting = true;
};

struct SessionOptions {
  int keep_iterates_every = 0;  // 0 keeps none
  bool record_gradients = false;
};

struct Arrival {
  int worker = 0;
  double time = 0;
  const Vector* gradient = nullptr;  // valid until the next wait_next
};

/// Event-driven executor of the protocol. Algorithms talk to workers only
/// through this object; it owns the virtual clock and the oracle states.
class Session {
 public:
  Session(const ProblemSpec& problem, std::span<const PowerProfile> profiles, double horizon, std::uint64_t seed,
          SessionOptions options = {});

  int workers() const { return static_cast<int>(profiles_.size()); }
  int dim() const { return dim_; }
  double now() const { return clock_; }
  bool busy(int worker) const { return states_.at(static_cast<std::size_t>(worker)).busy; }
  bool out_of_time() const { return horizon_reached_; }
  const ProblemSpec& problem() const { return problem_; }

  /// Ask an idle worker to start computing at x.
  void start(int worker, const Vector& x);
  /// Cancel a worker's computation; partial work is lost.
  void stop(int worker);
  void stop_all();
  /// Advance to the next completion and deliver its gradient.
  /// Empty when the horizon is hit or nothing can ever complete.
  std::optional<Arrival> wait_next();
  /// Move the clock forward; moving backward is a protocol violation.
  void advance_to(double t);
  /// Append x as the next iterate at the current time.
  void record_iterate(const Vector& x);
  void note_batch(std::vector<std::int64_t> counts, int closing_worker);

  RunResult finish() &&;

 private:
  struct Event {
    double time;
    int worker;
    std::uint64_t generation;
    bool operator>(const Event& o) const {
      if (time != o.time) return time > o.time;
      return worker > o.worker;
    }
  };

  const ProblemSpec& problem_;
  std::span<const PowerProfile> profiles_;
  double horizon_;
  SessionOptions options_;
  int dim_;
  double clock_ = 0.0;
  bool horizon_reached_ = false;
  std::vector<OracleState> states_;
  std::vector<std::uint64_t> generation_;
  std::vector<Rng> streams_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  Vector buffer_;
  // Exact gradient of the last point each worker finished; reused when the
  // next query point is identical.
  std::vector<Vector> cached_point_;
  std::vector<Vector> cached_grad_;
  std::vector<char> support_;
  bool check_support_ = false;
  RunResult result_;
};

using Algorithm = std::function<void(Session&)>;

RunResult run_protocol(const ProblemSpec& problem, const Algorithm& algorithm, std::span<const PowerProfile> profiles,
                       double horizon, std::uint64_t seed, SessionOptions options = {});

}  // namespace hetsgd::sim
