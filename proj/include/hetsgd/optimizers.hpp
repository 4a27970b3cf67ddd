#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetsgd/bound_calc.hpp"
#include "hetsgd/sim_engine.hpp"

namespace hetsgd::optim {

using bounds::ProblemConstants;
using bounds::Regime;
using objectives::ProblemSpec;
using objectives::Vector;
using power::PowerProfile;

enum class Method { rennala, malenia, minibatch, async, accel_rennala, accel_malenia };
std::string to_string(Method m);
Method parse_method(const std::string& name);

struct MethodParams {
  double stepsize = 0;
  std::int64_t batch = 1;
  std::int64_t iterations = 1;
};

/// Stepsize, batch and iteration count prescribed for a method in a regime.
MethodParams method_params(Method method, Regime regime, const ProblemConstants& c);

struct AlgorithmDriver {
  Method method = Method::rennala;
  double stepsize = 0;
  std::int64_t batch = 1;
  std::int64_t iterations = 1;
};

struct Overrides {
  std::optional<double> stepsize;
  std::optional<std::int64_t> batch;
  std::optional<std::int64_t> iterations;
};
AlgorithmDriver make_driver(Method method, Regime regime, const ProblemConstants& c, const Overrides& o = {});

/// (1/n sum 1/B_i)^-1; zero when some B_i is zero.
double harmonic_batch(std::span<const std::int64_t> counts);
/// Exit test of the heterogeneous collection loop: harmonic_batch >= S/n.
bool malenia_exit(std::span<const std::int64_t> counts, double S);

struct AcceleratedState {
  Vector x;
  Vector u;
  Vector y;  // last query point
};
AcceleratedState accelerated_start(const Vector& x0);
/// y^{k+1} = (1 - a) x^k + a u^k with a = 2/(k+2).
Vector accelerated_query_point(const AcceleratedState& s, std::int64_t k);
AcceleratedState accelerated_update(const AcceleratedState& s, const Vector& g, std::int64_t k, double gamma,
                                    double divisor);

struct RunOptions {
  double horizon = 1e12;
  /// Checked after every iterate; true ends the run early.
  std::function<bool(const Vector&)> stop_when;
  sim::SessionOptions session;
};

/// The driver as a protocol algorithm.
sim::Algorithm make_algorithm(const AlgorithmDriver& driver, const RunOptions& options = {});

sim::RunResult run_method(const AlgorithmDriver& driver, const ProblemSpec& problem,
                          std::span<const PowerProfile> profiles, std::uint64_t seed, const RunOptions& options = {});

}  // namespace hetsgd::optim
