#include "hetsgd/experiment.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "hetsgd/error.hpp"
#include "hetsgd/verify.hpp"

namespace hetsgd::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string cell(double x) { return format_number(x); }
std::string cell(TimePoint t) { return t.to_string(); }

int worker_count(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

class Csv {
 public:
  Csv(const fs::path& path, const std::string& header) : path_(path), out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << header << '\n';
  }
  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cells, first = false), ...);
    out_ << '\n';
  }
  ~Csv() noexcept(false) {
    out_.flush();
    if (!out_ && std::uncaught_exceptions() == 0) throw std::runtime_error("write failed: " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

ordered_json json_time(TimePoint t) {
  if (t.is_infinite()) return "inf";
  return t.raw();
}

std::optional<std::vector<double>> constant_powers(const ExperimentConfig& cfg) {
  std::vector<double> v;
  for (const auto& w : cfg.workers) {
    const auto* spec = std::get_if<power::ProfileSpec>(&w);
    const auto* c = spec ? std::get_if<power::Constant>(spec) : nullptr;
    if (!c) return std::nullopt;
    v.push_back(c->power);
  }
  return v;
}

int run_bound(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir, int threads) {
  auto profiles = realize_profiles(cfg, seed);
  bounds::ProblemConstants c = cfg.consts;
  c.workers = static_cast<int>(profiles.size());
  bounds::SearchOptions so{cfg.horizon};

  struct Outcome {
    std::optional<bounds::BoundSequence> seq;
    std::string error;
  };
  auto outcomes = parallel_map<Outcome>(cfg.bound_kinds.size(), threads, [&](std::size_t i) {
    Outcome o;
    try {
      o.seq = bounds::bound_sequence(profiles, c, cfg.bound_kinds[i], cfg.universal, so);
    } catch (const PreconditionError& e) {
      o.error = e.what();
    } catch (const DomainError& e) {
      o.error = e.what();
    }
    return o;
  });

  ordered_json summary;
  summary["config_hash"] = cfg.hash;
  summary["seed"] = seed;
  summary["workers"] = profiles.size();
  ordered_json kinds = ordered_json::array();
  auto fixed = constant_powers(cfg);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto kind = cfg.bound_kinds[i];
    ordered_json entry;
    entry["kind"] = bounds::to_string(kind);
    const auto& o = outcomes[i];
    if (!o.seq) {
      entry["error"] = o.error;
      entry["final_time"] = "inf";
      kinds.push_back(entry);
      continue;
    }
    {
      Csv csv(dir / ("bound_" + bounds::to_string(kind) + ".csv"), "k,t_k");
      for (std::size_t k = 0; k < o.seq->times.size(); ++k) csv.row(k, cell(o.seq->times[k]));
    }
    entry["rule"] = bounds::describe(o.seq->rule);
    entry["iterations"] = o.seq->iterations;
    entry["final_time"] = json_time(o.seq->final_time());
    if (fixed) {
      const double smooth = c.L * c.delta / c.epsilon;
      const double noise = c.sigma2 / c.epsilon;
      if (kind == bounds::BoundKind::rennala_upper || kind == bounds::BoundKind::homog_lower)
        entry["closed_form"] = bounds::fixed_homog_time(*fixed, smooth, noise);
      else if (kind == bounds::BoundKind::malenia_upper || kind == bounds::BoundKind::heter_lower)
        entry["closed_form"] = static_cast<double>(o.seq->iterations) * bounds::fixed_heter_time(*fixed, noise);
    }
    kinds.push_back(entry);
  }
  summary["bounds"] = kinds;
  write_json(dir / "bound_summary.json", summary);
  return 0;
}

int run_simulate(const ExperimentConfig& cfg, const fs::path& dir, int threads) {
  auto problem = build_problem(cfg);
  problem.consts.workers = static_cast<int>(cfg.workers.size());
  objectives::validate(problem);
  const auto driver = optim::make_driver(cfg.method.method, cfg.method.regime, problem.consts, cfg.method.overrides);

  optim::RunOptions ro;
  ro.horizon = cfg.horizon;
  if (cfg.problem.stop_at_full_progress) {
    if (const auto* wc = std::get_if<objectives::WorstCaseChain>(&problem.objective)) {
      const int T = wc->length;
      ro.stop_when = [T](const objectives::Vector& x) { return objectives::prog(x) >= T; };
    }
  }

  auto results = parallel_map<sim::RunResult>(cfg.seeds.size(), threads, [&](std::size_t i) {
    auto profiles = realize_profiles(cfg, cfg.seeds[i]);
    return optim::run_method(driver, problem, profiles, cfg.seeds[i], ro);
  });

  const std::string stamp = timestamp();
  std::map<std::int64_t, std::pair<double, int>> grad_by_k;
  std::map<std::int64_t, double> time_by_k;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const auto seed = cfg.seeds[i];
    {
      Csv csv(dir / ("run_seed" + std::to_string(seed) + ".csv"), "k,t_k,grad_sq,f_value,progress");
      for (const auto& p : r.trajectory) {
        csv.row(p.k, cell(p.time), cell(p.grad_sq), cell(p.f_value), p.progress);
        auto& g = grad_by_k[p.k];
        g.first += p.grad_sq;
        g.second += 1;
        time_by_k[p.k] += p.time;
      }
    }
    ordered_json head;
    head["timestamp"] = stamp;
    head["config_hash"] = cfg.hash;
    head["seed"] = seed;
    head["method"] = optim::to_string(driver.method);
    head["stepsize"] = driver.stepsize;
    head["batch"] = driver.batch;
    head["iterations"] = driver.iterations;
    head["total_time"] = r.total_time;
    head["horizon_reached"] = r.horizon_reached;
    head["zero_respecting"] = r.zero_respecting;
    head["gradients_per_worker"] = r.gradients_per_worker;
    write_json(dir / ("run_seed" + std::to_string(seed) + ".json"), head);
  }
  Csv agg(dir / "aggregate.csv", "k,mean_t_k,mean_grad_sq,runs");
  for (const auto& [k, g] : grad_by_k) {
    agg.row(k, cell(time_by_k[k] / g.second), cell(g.first / g.second), g.second);
  }
  return 0;
}

int run_adversary(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir, int threads) {
  const auto& a = cfg.adversary;
  bool ok = true;
  if (a.mode == AdversaryMode::homog || a.mode == AdversaryMode::markov) {
    auto profiles = realize_profiles(cfg, seed);
    bounds::ProblemConstants c = cfg.consts;
    c.workers = static_cast<int>(profiles.size());
    if (a.mode == AdversaryMode::homog) {
      // Same p as the scaled chain's zero-out oracle; T comes from the config.
      const double gb = objectives::kChainGradBound;
      double p = a.p ? *a.p : (c.sigma2 == 0 ? 1.0 : std::min(2 * c.epsilon * gb * gb / c.sigma2, 1.0));
      auto traces = parallel_map<lab::AdversaryTrace>(a.trials, threads, [&](std::size_t t) {
        Rng rng = make_stream(seed, t);
        auto tr = lab::homog_adversary_run(profiles, p, a.T, rng);
        tr.seed = derive_seed(seed, t);
        return tr;
      });
      auto quarter = lab::quarter_threshold_sequence(profiles, p, a.T);
      const TimePoint target = quarter.back();
      int hits = 0;
      {
        Csv csv(dir / "adversary_traces.csv", "trial,k,t_k,eta_k");
        for (std::size_t t = 0; t < traces.size(); ++t) {
          for (std::size_t k = 0; k < traces[t].times.size(); ++k)
            csv.row(t, k + 1, cell(traces[t].times[k]), traces[t].draws[k]);
          if (!traces[t].times.empty() && traces[t].times.back() >= target) ++hits;
        }
      }
      const double frac = static_cast<double>(hits) / a.trials;
      const double se = std::sqrt(0.25 / a.trials);
      ok = frac >= 0.5 - 3 * se;
      Csv sum(dir / "adversary_summary.csv", "mode,T,p,trials,quarter_time,fraction_at_least,required,pass");
      sum.row("homog", a.T, cell(p), a.trials, cell(target), cell(frac), cell(0.5 - 3 * se), ok ? 1 : 0);
    } else {
      auto params = lab::window_params(profiles, a.K, c, a.T, bounds::SearchOptions{cfg.horizon});
      auto violations = lab::check_window_params(params, profiles);
      {
        Csv csv(dir / "windows.csv", "w,t_w,option");
        for (int w = 0; w <= params.windows(); ++w)
          csv.row(w, cell(params.times[static_cast<std::size_t>(w)]),
                  w == 0 ? 0 : params.option[static_cast<std::size_t>(w - 1)]);
      }
      auto outcomes = parallel_map<lab::MarkovOutcome>(a.trials, threads, [&](std::size_t t) {
        Rng rng = make_stream(seed, t);
        return lab::markov_window_run(params, profiles, a.block, rng);
      });
      double mean_window = 0;
      {
        Csv csv(dir / "adversary_traces.csv", "trial,final_window,necessary_time");
        for (std::size_t t = 0; t < outcomes.size(); ++t) {
          csv.row(t, outcomes[t].final_window, cell(outcomes[t].necessary_time));
          mean_window += outcomes[t].final_window;
        }
      }
      mean_window /= a.trials;
      ok = violations.empty();
      Csv sum(dir / "adversary_summary.csv", "mode,windows,blocks,chunk,trials,mean_final_window,violations,pass");
      sum.row("markov", params.windows(), params.blocks, params.chunk, a.trials, cell(mean_window), violations.size(),
              ok ? 1 : 0);
    }
    return ok ? 0 : 1;
  }

  Rng rng = make_stream(seed, 0);
  lab::TailEstimate est;
  std::string label;
  if (a.mode == AdversaryMode::chernoff_sum) {
    const double p = a.p.value_or(0.1);
    est = lab::tail_bound_check(lab::TailKind::chernoff_sum,
                                lab::ChernoffSumParams{a.T, a.delta, [p](int, std::span<const std::int64_t>) { return p; }},
                                a.trials, rng);
    label = "chernoff_sum";
  } else {
    est = lab::tail_bound_check(lab::TailKind::many_geom, lab::ManyGeomParams{a.K, a.probs}, a.trials, rng);
    label = "many_geom";
  }
  ok = est.within(3.0);
  Csv sum(dir / "adversary_summary.csv", "mode,trials,hits,empirical,bound,se,pass");
  sum.row(label, est.trials, est.hits, cell(est.empirical), cell(est.bound), cell(est.standard_error()), ok ? 1 : 0);
  return ok ? 0 : 1;
}

int run_verify(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir, std::ostream& log) {
  auto results = verify::run_all(cfg.criteria, seed);
  Csv csv(dir / "verify.csv", "id,name,pass,seconds,detail");
  bool all = true;
  log << std::left << std::setw(4) << "id" << std::setw(34) << "criterion" << std::setw(6) << "pass"
      << "seconds\n";
  for (const auto& r : results) {
    all = all && r.passed;
    std::string detail = r.detail;
    for (auto& ch : detail) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    csv.row(r.id, r.name, r.passed ? 1 : 0, cell(r.seconds), detail);
    log << std::setw(4) << r.id << std::setw(34) << r.name << std::setw(6) << (r.passed ? "PASS" : "FAIL")
        << format_number(r.seconds) << "  " << r.detail << '\n';
  }
  log << (all ? "all checks passed" : "some checks failed") << '\n';
  return all ? 0 : 1;
}

}  // namespace

int execute(const ExperimentConfig& cfg_in, const ExecuteOptions& opts) {
  ExperimentConfig cfg = cfg_in;
  if (opts.seed) cfg.seeds = {*opts.seed};
  const fs::path dir = opts.out ? *opts.out : output_dir(cfg);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  std::ostream& log = opts.log ? *opts.log : std::cout;
  switch (cfg.kind) {
    case ExperimentKind::bound: return run_bound(cfg, cfg.seeds.front(), dir, opts.threads);
    case ExperimentKind::simulate: return run_simulate(cfg, dir, opts.threads);
    case ExperimentKind::adversary: return run_adversary(cfg, cfg.seeds.front(), dir, opts.threads);
    case ExperimentKind::verify: return run_verify(cfg, cfg.seeds.front(), dir, log);
  }
  return 1;
}

}  // namespace hetsgd::cli
