#include "hetsgd/sim_engine.hpp"

#include <cmath>

#include "hetsgd/error.hpp"
#include "hetsgd/numeric.hpp"

namespace hetsgd::sim {

namespace {

bool work_done(const PowerProfile& profile, double start, double t) {
  return snap_floor(power::work(profile, start, t).value()) >= 1.0;
}

}  // namespace

OracleStep oracle_step(const OracleState& state, double t, const Vector& x, Control c, const PowerProfile& profile,
                       const ProblemSpec& problem, int worker, Rng& rng) {
  OracleStep out;
  out.output = Vector::Zero(problem.dim());
  if (c == Control::stop) return out;
  if (!state.busy) {
    out.state = OracleState{t, x, true};
    return out;
  }
  if (t < state.start_time) throw ProtocolViolation("oracle queried before its start time");
  if (!work_done(profile, state.start_time, t)) {
    out.state = state;
    return out;
  }
  objectives::noisy_grad_into(problem, worker, state.point, rng, out.output);
  out.delivered = true;
  return out;
}

TimePoint completion_time(const PowerProfile& profile, double start) { return power::inverse_work(profile, 1.0, start); }

Session::Session(const ProblemSpec& problem, std::span<const PowerProfile> profiles, double horizon,
                 std::uint64_t seed, SessionOptions options)
    : problem_(problem), profiles_(profiles), horizon_(horizon), options_(options), dim_(problem.dim()) {
  if (profiles.empty()) throw DomainError("run_protocol: need at least one worker");
  if (!(horizon > 0)) throw DomainError("run_protocol: horizon must be > 0");
  objectives::validate(problem);
  if (const auto* h = std::get_if<objectives::HeterQuadratic>(&problem.objective)) {
    if (h->centers.size() != profiles.size())
      throw DomainError("heter_quadratic: number of centers must equal number of workers");
  }
  const std::size_t n = profiles.size();
  states_.resize(n);
  generation_.assign(n, 0);
  streams_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) streams_.push_back(make_stream(seed, i));
  buffer_ = Vector::Zero(dim_);
  cached_point_.resize(n);
  cached_grad_.resize(n);
  result_.seed = seed;
  result_.gradients_per_worker.assign(n, 0);
  Vector x0 = problem.start();
  check_support_ = objectives::prog(x0) == 0;
  support_.assign(static_cast<std::size_t>(dim_), 0);
}

void Session::start(int worker, const Vector& x) {
  auto& st = states_.at(static_cast<std::size_t>(worker));
  if (st.busy) throw ProtocolViolation("start on a busy worker");
  st.busy = true;
  st.start_time = clock_;
  st.point = x;
  TimePoint done = completion_time(profiles_[static_cast<std::size_t>(worker)], clock_);
  if (done.is_finite()) events_.push(Event{done.value(), worker, generation_[static_cast<std::size_t>(worker)]});
}

void Session::stop(int worker) {
  auto w = static_cast<std::size_t>(worker);
  states_.at(w).busy = false;
  ++generation_[w];
}

void Session::stop_all() {
  for (int i = 0; i < workers(); ++i) stop(i);
  events_ = {};
}

std::optional<Arrival> Session::wait_next() {
  while (!events_.empty()) {
    Event ev = events_.top();
    auto w = static_cast<std::size_t>(ev.worker);
    if (ev.generation != generation_[w] || !states_[w].busy) {
      events_.pop();
      continue;
    }
    if (ev.time > horizon_) break;
    events_.pop();
    clock_ = std::max(clock_, ev.time);
    auto& st = states_[w];
    if (!work_done(profiles_[w], st.start_time, clock_)) {
      // Rounding left the work a hair short; retry just after.
      events_.push(Event{std::nextafter(ev.time, horizon_ + 1), ev.worker, ev.generation});
      continue;
    }
    if (cached_point_[w].size() == st.point.size() && cached_point_[w] == st.point) {
      buffer_ = cached_grad_[w];
    } else {
      objectives::local_gradient_into(problem_, ev.worker, st.point, buffer_);
      cached_point_[w] = st.point;
      cached_grad_[w] = buffer_;
    }
    objectives::add_oracle_noise(problem_, st.point, streams_[w], buffer_);
    st.busy = false;
    ++generation_[w];
    ++result_.gradients_per_worker[w];
    if (check_support_) {
      for (int j = 0; j < dim_; ++j) {
        if (buffer_[j] != 0.0) support_[static_cast<std::size_t>(j)] = 1;
      }
    }
    if (options_.record_gradients) {
      std::int64_t k = result_.trajectory.empty() ? 0 : result_.trajectory.back().k;
      result_.gradient_log.push_back(GradientRecord{k, ev.worker, clock_, buffer_});
    }
    return Arrival{ev.worker, clock_, &buffer_};
  }
  clock_ = horizon_;
  horizon_reached_ = true;
  return std::nullopt;
}

void Session::advance_to(double t) {
  if (t < clock_) throw ProtocolViolation("time must not decrease");
  if (t > horizon_) {
    clock_ = horizon_;
    horizon_reached_ = true;
    return;
  }
  clock_ = t;
}

void Session::record_iterate(const Vector& x) {
  if (x.size() != dim_) throw DomainError("record_iterate: dimension mismatch");
  TrajectoryPoint pt;
  pt.k = static_cast<std::int64_t>(result_.trajectory.size());
  pt.time = clock_;
  Vector g = objectives::gradient(problem_, x);
  pt.grad_sq = g.squaredNorm();
  pt.f_value = objectives::value(problem_, x);
  pt.progress = objectives::prog(x);
  if (!result_.trajectory.empty() && pt.time < result_.trajectory.back().time)
    throw ProtocolViolation("iterate times must be nondecreasing");
  result_.trajectory.push_back(pt);
  if (check_support_) {
    for (int j = 0; j < dim_; ++j) {
      if (x[j] != 0.0 && !support_[static_cast<std::size_t>(j)]) result_.zero_respecting = false;
    }
  }
  if (options_.keep_iterates_every > 0 && pt.k % options_.keep_iterates_every == 0) {
    result_.iterates.emplace_back(pt.k, x);
  }
}

void Session::note_batch(std::vector<std::int64_t> counts, int closing_worker) {
  result_.batches.push_back(std::move(counts));
  result_.closing_worker.push_back(closing_worker);
}

RunResult Session::finish() && {
  result_.total_time = clock_;
  result_.horizon_reached = horizon_reached_;
  return std::move(result_);
}

RunResult run_protocol(const ProblemSpec& problem, const Algorithm& algorithm, std::span<const PowerProfile> profiles,
                       double horizon, std::uint64_t seed, SessionOptions options) {
  Session session(problem, profiles, horizon, seed, options);
  algorithm(session);
  return std::move(session).finish();
}

}  // namespace hetsgd::sim
