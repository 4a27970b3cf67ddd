#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hetsgd/bound_calc.hpp"
#include "hetsgd/lowerbound_lab.hpp"
#include "hetsgd/objectives.hpp"
#include "hetsgd/optimizers.hpp"
#include "hetsgd/power_model.hpp"

namespace hetsgd::cli {

enum class ExperimentKind { bound, simulate, adversary, verify };
std::string to_string(ExperimentKind k);

/// On/off availability with exponential durations, sampled into a
/// piecewise-constant profile once per seed.
struct RandomOnOff {
  double power = 1.0;
  double mean_on = 1.0;
  double mean_off = 1.0;
  double length = 1000.0;  // sampled span; the profile stays on afterwards
};
using WorkerSpec = std::variant<power::ProfileSpec, RandomOnOff>;

struct ObjectiveConfig {
  std::string type = "quadratic";  // quadratic | heter_quadratic | worst_case_chain
  int dim = 1;
  std::vector<std::vector<double>> centers;
  std::vector<double> x0;
};

struct ProblemConfig {
  ObjectiveConfig objective;
  std::string oracle = "gaussian";  // gaussian | zero_out | exact
  bool stop_at_full_progress = false;
};

struct MethodConfig {
  optim::Method method = optim::Method::rennala;
  bounds::Regime regime = bounds::Regime::nonconvex;
  optim::Overrides overrides;
};

enum class AdversaryMode { homog, markov, chernoff_sum, many_geom };
std::string to_string(AdversaryMode m);

struct AdversaryConfig {
  AdversaryMode mode = AdversaryMode::homog;
  int trials = 200;
  int T = 20;                      // chain length / window count / chernoff length
  std::optional<double> p;         // homog and chernoff_sum; homog default from constants
  double delta = 0.1;              // chernoff_sum
  int K = 20;                      // many_geom group size, markov chunk
  std::vector<double> probs;       // many_geom
  std::int64_t block = 1;          // markov
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::bound;
  std::vector<WorkerSpec> workers;
  bounds::ProblemConstants consts;
  bounds::UniversalConstants universal;
  double horizon = 1e12;
  std::vector<std::uint64_t> seeds{1};
  std::string output;  // empty: $HETSGD_OUT_DIR, else "out"
  std::vector<bounds::BoundKind> bound_kinds;
  ProblemConfig problem;
  MethodConfig method;
  AdversaryConfig adversary;
  std::vector<int> criteria;  // verify; empty means all
  std::string canonical;      // canonical JSON text after overrides
  std::string hash;           // FNV-1a of canonical
};

/// Parses and validates. Throws ConfigError listing every problem found.
ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Deterministic profiles for one seed (random entries are sampled here).
std::vector<power::PowerProfile> realize_profiles(const ExperimentConfig& cfg, std::uint64_t seed);

/// The problem a simulate config describes.
objectives::ProblemSpec build_problem(const ExperimentConfig& cfg);

/// Output directory after applying the environment default.
std::string output_dir(const ExperimentConfig& cfg);

}  // namespace hetsgd::cli
