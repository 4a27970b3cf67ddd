#include "hetsgd/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "hetsgd/error.hpp"

namespace hetsgd::cli {

using nlohmann::json;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::bound: return "bound";
    case ExperimentKind::simulate: return "simulate";
    case ExperimentKind::adversary: return "adversary";
    case ExperimentKind::verify: return "verify";
  }
  return "?";
}

std::string to_string(AdversaryMode m) {
  switch (m) {
    case AdversaryMode::homog: return "homog";
    case AdversaryMode::markov: return "markov";
    case AdversaryMode::chernoff_sum: return "chernoff_sum";
    case AdversaryMode::many_geom: return "many_geom";
  }
  return "?";
}

namespace {

// Collects problems while walking one JSON object.
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& errs) : j_(j), path_(std::move(path)), errs_(errs) {
    if (!j_.is_object()) {
      errs_.push_back(where() + " must be an object");
      valid_ = false;
    }
  }

  bool valid() const { return valid_; }
  bool has(const std::string& key) const { return valid_ && j_.contains(key); }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::optional<double> number(const std::string& key, bool required = false) {
    seen_.insert(key);
    if (!has(key)) {
      if (required && valid_) errs_.push_back(at(key) + " is required");
      return std::nullopt;
    }
    const auto& v = j_.at(key);
    if (v.is_number()) return v.get<double>();
    errs_.push_back(at(key) + " must be a number");
    return std::nullopt;
  }

  std::optional<double> positive(const std::string& key, bool required = false) {
    auto v = number(key, required);
    if (v && !(*v > 0 && std::isfinite(*v))) {
      errs_.push_back(at(key) + " must be > 0");
      return std::nullopt;
    }
    return v;
  }

  std::optional<double> nonnegative(const std::string& key, bool required = false) {
    auto v = number(key, required);
    if (v && !(*v >= 0 && std::isfinite(*v))) {
      errs_.push_back(at(key) + " must be >= 0");
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::int64_t> integer(const std::string& key, std::int64_t min, bool required = false) {
    seen_.insert(key);
    if (!has(key)) {
      if (required && valid_) errs_.push_back(at(key) + " is required");
      return std::nullopt;
    }
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) {
      errs_.push_back(at(key) + " must be an integer");
      return std::nullopt;
    }
    auto x = v.get<std::int64_t>();
    if (x < min) {
      errs_.push_back(at(key) + " must be >= " + std::to_string(min));
      return std::nullopt;
    }
    return x;
  }

  std::optional<std::string> string(const std::string& key, bool required = false) {
    seen_.insert(key);
    if (!has(key)) {
      if (required && valid_) errs_.push_back(at(key) + " is required");
      return std::nullopt;
    }
    const auto& v = j_.at(key);
    if (v.is_string()) return v.get<std::string>();
    errs_.push_back(at(key) + " must be a string");
    return std::nullopt;
  }

  std::optional<bool> boolean(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) return std::nullopt;
    const auto& v = j_.at(key);
    if (v.is_boolean()) return v.get<bool>();
    errs_.push_back(at(key) + " must be true or false");
    return std::nullopt;
  }

  std::optional<std::vector<double>> numbers(const std::string& key, bool required = false) {
    seen_.insert(key);
    if (!has(key)) {
      if (required && valid_) errs_.push_back(at(key) + " is required");
      return std::nullopt;
    }
    const auto& v = j_.at(key);
    if (!v.is_array()) {
      errs_.push_back(at(key) + " must be an array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) {
        errs_.push_back(at(key) + " must be an array of numbers");
        return std::nullopt;
      }
      out.push_back(e.get<double>());
    }
    return out;
  }

  /// Reports keys that nobody asked for.
  void finish() {
    if (!valid_) return;
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) errs_.push_back("unknown key " + at(k));
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::vector<std::string>& errs_;
  std::set<std::string> seen_;
  bool valid_ = true;
};

json parse_strict(const std::string& text) {
  // Track keys per open object so a repeated key is a parse error.
  std::vector<std::set<std::string>> open;
  std::string dup;
  json::parser_callback_t cb = [&](int, json::parse_event_t ev, json& parsed) {
    switch (ev) {
      case json::parse_event_t::object_start: open.emplace_back(); break;
      case json::parse_event_t::object_end:
        if (!open.empty()) open.pop_back();
        break;
      case json::parse_event_t::key: {
        auto k = parsed.get<std::string>();
        if (!open.empty() && !open.back().insert(k).second && dup.empty()) dup = k;
        break;
      }
      default: break;
    }
    return true;
  };
  json j;
  try {
    j = json::parse(text, cb);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("parse error: ") + e.what()});
  }
  if (!dup.empty()) throw ConfigError({"parse error: duplicate key '" + dup + "'"});
  return j;
}

void apply_override(json& j, const std::string& spec, std::vector<std::string>& errs) {
  auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    errs.push_back("override '" + spec + "' must look like key.path=value");
    return;
  }
  std::string path = spec.substr(0, eq);
  std::string text = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object()) {
      errs.push_back("override '" + path + "' walks into a non-object");
      return;
    }
    if (i + 1 == parts.size()) {
      (*node)[parts[i]] = value;
    } else {
      node = &(*node)[parts[i]];
      if (node->is_null()) *node = json::object();
    }
  }
}

std::optional<power::TrendSpec> read_trend(const json& j, const std::string& path, std::vector<std::string>& errs) {
  Reader r(j, path, errs);
  if (!r.valid()) return std::nullopt;
  auto type = r.string("type", true);
  std::optional<power::TrendSpec> out;
  if (!type) {
  } else if (*type == "sine_offset") {
    auto off = r.positive("offset", true);
    auto amp = r.number("amplitude", true);
    if (off && amp) {
      if (std::abs(*amp) > *off) errs.push_back(r.at("amplitude") + " must satisfy |amplitude| <= offset");
      out = power::SineOffset{*off, *amp};
    }
  } else if (*type == "poly_growth") {
    if (auto e = r.number("exponent", true)) out = power::PolyGrowth{*e};
  } else if (*type == "piecewise") {
    auto b = r.numbers("breakpoints", true);
    auto v = r.numbers("values", true);
    if (b && v) out = power::PiecewiseTrend{*b, *v};
  } else {
    errs.push_back(r.at("type") + " must be sine_offset, poly_growth or piecewise");
  }
  r.finish();
  return out;
}

std::optional<WorkerSpec> read_worker(const json& j, const std::string& path, int& repeat,
                                      std::vector<std::string>& errs) {
  Reader r(j, path, errs);
  repeat = 1;
  if (!r.valid()) return std::nullopt;
  if (auto rep = r.integer("repeat", 1)) repeat = static_cast<int>(*rep);
  auto type = r.string("type", true);
  std::optional<WorkerSpec> out;
  if (!type) {
  } else if (*type == "constant") {
    if (auto v = r.nonnegative("power", true)) out = power::ProfileSpec(power::Constant{*v});
  } else if (*type == "scaled_trend") {
    auto v = r.nonnegative("power", true);
    std::optional<power::TrendSpec> trend;
    if (r.has("trend")) {
      trend = read_trend(r.raw("trend"), r.at("trend"), errs);
    } else {
      errs.push_back(r.at("trend") + " is required");
    }
    if (v && trend) out = power::ProfileSpec(power::ScaledTrend{*v, *trend});
  } else if (*type == "periodic_outage") {
    auto v = r.nonnegative("power", true);
    auto k = r.positive("period", true);
    auto len = r.nonnegative("active_len", true);
    if (v && k && len) out = power::ProfileSpec(power::PeriodicOutage{*v, *k, *len});
  } else if (*type == "piecewise_constant") {
    auto b = r.numbers("breakpoints", true);
    auto v = r.numbers("values", true);
    if (b && v) out = power::ProfileSpec(power::PiecewiseConstant{*b, *v});
  } else if (*type == "trace") {
    auto b = r.numbers("sample_times", true);
    auto v = r.numbers("sample_powers", true);
    if (b && v) out = power::ProfileSpec(power::Trace{*b, *v});
  } else if (*type == "random_on_off") {
    auto v = r.nonnegative("power", true);
    auto on = r.positive("mean_on", true);
    auto off = r.positive("mean_off", true);
    auto len = r.positive("length");
    if (v && on && off) out = RandomOnOff{*v, *on, *off, len.value_or(1000.0)};
  } else {
    errs.push_back(r.at("type") + " must be one of constant, scaled_trend, periodic_outage, piecewise_constant, "
                                  "trace, random_on_off");
  }
  r.finish();
  // Catch structural profile errors (ordering, lengths) at load time.
  if (out) {
    if (const auto* spec = std::get_if<power::ProfileSpec>(&*out)) {
      try {
        power::PowerProfile check(*spec);
      } catch (const DomainError& e) {
        errs.push_back(path + ": " + e.what());
        out.reset();
      }
    }
  }
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  json j = parse_strict(text);
  std::vector<std::string> errs;
  for (const auto& o : overrides) apply_override(j, o, errs);
  if (!errs.empty()) throw ConfigError(errs);

  ExperimentConfig cfg;
  Reader top(j, "", errs);
  if (!top.valid()) throw ConfigError(errs);

  if (auto kind = top.string("experiment", true)) {
    if (*kind == "bound") cfg.kind = ExperimentKind::bound;
    else if (*kind == "simulate") cfg.kind = ExperimentKind::simulate;
    else if (*kind == "adversary") cfg.kind = ExperimentKind::adversary;
    else if (*kind == "verify") cfg.kind = ExperimentKind::verify;
    else errs.push_back("experiment must be bound, simulate, adversary or verify");
  }

  if (top.has("workers")) {
    const auto& ws = top.raw("workers");
    if (!ws.is_array() || ws.empty()) {
      errs.push_back("workers must be a nonempty array");
    } else {
      for (std::size_t i = 0; i < ws.size(); ++i) {
        int repeat = 1;
        auto w = read_worker(ws[i], "workers[" + std::to_string(i) + "]", repeat, errs);
        if (w) {
          for (int r = 0; r < repeat; ++r) cfg.workers.push_back(*w);
        }
      }
    }
  } else if (cfg.kind != ExperimentKind::verify) {
    errs.push_back("workers is required");
  }
  cfg.consts.workers = std::max<int>(1, static_cast<int>(cfg.workers.size()));

  if (top.has("constants")) {
    Reader c(top.raw("constants"), "constants", errs);
    if (c.valid()) {
      if (auto v = c.positive("L", true)) cfg.consts.L = *v;
      if (auto v = c.positive("delta", true)) cfg.consts.delta = *v;
      if (auto v = c.positive("epsilon", true)) cfg.consts.epsilon = *v;
      if (auto v = c.nonnegative("sigma2")) cfg.consts.sigma2 = *v;
      if (auto v = c.positive("M")) cfg.consts.lipschitz = *v;
      if (auto v = c.positive("R")) cfg.consts.radius = *v;
      c.finish();
    }
  } else if (cfg.kind != ExperimentKind::verify) {
    errs.push_back("constants is required");
  }

  if (top.has("universal_constants")) {
    Reader u(top.raw("universal_constants"), "universal_constants", errs);
    if (u.valid()) {
      if (auto v = u.positive("c1")) cfg.universal.c1 = *v;
      if (auto v = u.positive("c2")) cfg.universal.c2 = *v;
      if (auto v = u.positive("c3")) cfg.universal.c3 = *v;
      if (auto v = u.positive("c_prime")) cfg.universal.c_prime = *v;
      u.finish();
    }
  }

  if (auto h = top.positive("horizon")) cfg.horizon = *h;
  if (top.has("seeds")) {
    const auto& s = top.raw("seeds");
    if (!s.is_array() || s.empty()) {
      errs.push_back("seeds must be a nonempty array of nonnegative integers");
    } else {
      cfg.seeds.clear();
      for (const auto& e : s) {
        if (!e.is_number_unsigned()) {
          errs.push_back("seeds must be a nonempty array of nonnegative integers");
          break;
        }
        cfg.seeds.push_back(e.get<std::uint64_t>());
      }
    }
  }
  if (auto o = top.string("output")) cfg.output = *o;

  if (top.has("bound")) {
    Reader b(top.raw("bound"), "bound", errs);
    if (b.valid() && b.has("kinds")) {
      const auto& ks = b.raw("kinds");
      if (!ks.is_array() || ks.empty()) {
        errs.push_back("bound.kinds must be a nonempty array");
      } else {
        for (const auto& k : ks) {
          try {
            cfg.bound_kinds.push_back(bounds::parse_bound_kind(k.is_string() ? k.get<std::string>() : ""));
          } catch (const DomainError& e) {
            errs.push_back(std::string("bound.kinds: ") + e.what());
          }
        }
      }
    } else if (b.valid()) {
      errs.push_back("bound.kinds is required");
    }
    b.finish();
  } else if (cfg.kind == ExperimentKind::bound) {
    cfg.bound_kinds = {bounds::BoundKind::rennala_upper};
  }

  if (top.has("problem")) {
    Reader p(top.raw("problem"), "problem", errs);
    if (p.valid()) {
      if (p.has("objective")) {
        Reader o(p.raw("objective"), "problem.objective", errs);
        if (o.valid()) {
          if (auto t = o.string("type", true)) {
            if (*t != "quadratic" && *t != "heter_quadratic" && *t != "worst_case_chain")
              errs.push_back("problem.objective.type must be quadratic, heter_quadratic or worst_case_chain");
            cfg.problem.objective.type = *t;
          }
          if (auto d = o.integer("dim", 1)) cfg.problem.objective.dim = static_cast<int>(*d);
          if (o.has("centers")) {
            const auto& cs = o.raw("centers");
            if (!cs.is_array()) {
              errs.push_back("problem.objective.centers must be an array of vectors");
            } else {
              for (const auto& c : cs) {
                std::vector<double> v;
                if (!c.is_array()) {
                  errs.push_back("problem.objective.centers must be an array of vectors");
                  break;
                }
                for (const auto& e : c) v.push_back(e.is_number() ? e.get<double>() : NAN);
                cfg.problem.objective.centers.push_back(v);
              }
            }
          }
          if (auto x = o.numbers("x0")) cfg.problem.objective.x0 = *x;
          o.finish();
        }
      }
      if (auto orc = p.string("oracle")) {
        if (*orc != "gaussian" && *orc != "zero_out" && *orc != "exact")
          errs.push_back("problem.oracle must be gaussian, zero_out or exact");
        cfg.problem.oracle = *orc;
      }
      if (auto s = p.boolean("stop_at_full_progress")) cfg.problem.stop_at_full_progress = *s;
      p.finish();
    }
  }

  if (top.has("method")) {
    Reader m(top.raw("method"), "method", errs);
    if (m.valid()) {
      try {
        if (auto n = m.string("name", true)) cfg.method.method = optim::parse_method(*n);
        if (auto r = m.string("regime")) cfg.method.regime = bounds::parse_regime(*r);
      } catch (const DomainError& e) {
        errs.push_back(std::string("method: ") + e.what());
      }
      if (auto v = m.positive("stepsize")) cfg.method.overrides.stepsize = *v;
      if (auto v = m.integer("batch", 1)) cfg.method.overrides.batch = *v;
      if (auto v = m.integer("iterations", 1)) cfg.method.overrides.iterations = *v;
      m.finish();
    }
  }

  if (top.has("adversary")) {
    Reader a(top.raw("adversary"), "adversary", errs);
    if (a.valid()) {
      if (auto mode = a.string("mode", true)) {
        if (*mode == "homog") cfg.adversary.mode = AdversaryMode::homog;
        else if (*mode == "markov") cfg.adversary.mode = AdversaryMode::markov;
        else if (*mode == "chernoff_sum") cfg.adversary.mode = AdversaryMode::chernoff_sum;
        else if (*mode == "many_geom") cfg.adversary.mode = AdversaryMode::many_geom;
        else errs.push_back("adversary.mode must be homog, markov, chernoff_sum or many_geom");
      }
      if (auto v = a.integer("trials", 1)) cfg.adversary.trials = static_cast<int>(*v);
      if (auto v = a.integer("T", 1)) cfg.adversary.T = static_cast<int>(*v);
      if (auto v = a.positive("p")) {
        if (*v > 1) errs.push_back("adversary.p must be in (0, 1]");
        cfg.adversary.p = *v;
      }
      if (auto v = a.positive("delta")) {
        if (*v > 1) errs.push_back("adversary.delta must be in (0, 1]");
        cfg.adversary.delta = *v;
      }
      if (auto v = a.integer("K", 1)) cfg.adversary.K = static_cast<int>(*v);
      if (auto v = a.numbers("probs")) {
        for (double p : *v) {
          if (!(p > 0 && p <= 1)) errs.push_back("adversary.probs entries must be in (0, 1]");
        }
        cfg.adversary.probs = *v;
      }
      if (auto v = a.integer("block", 1)) cfg.adversary.block = *v;
      a.finish();
    }
  }

  if (top.has("verify")) {
    Reader v(top.raw("verify"), "verify", errs);
    if (v.valid()) {
      if (auto c = v.numbers("criteria")) {
        for (double x : *c) {
          if (x != std::floor(x) || x < 1 || x > 14) errs.push_back("verify.criteria entries must be integers 1..14");
          else cfg.criteria.push_back(static_cast<int>(x));
        }
      }
      v.finish();
    }
  }
  top.finish();

  // Cross-field checks.
  if (cfg.kind == ExperimentKind::simulate) {
    const auto& o = cfg.problem.objective;
    if (o.type == "heter_quadratic" && o.centers.size() != cfg.workers.size())
      errs.push_back("problem.objective.centers needs one center per worker");
    for (const auto& c : o.centers) {
      if (static_cast<int>(c.size()) != o.dim) errs.push_back("problem.objective.centers entries must have length dim");
    }
    if (!o.x0.empty() && o.type != "worst_case_chain" && static_cast<int>(o.x0.size()) != o.dim)
      errs.push_back("problem.objective.x0 must have length dim");
  }
  if (cfg.kind == ExperimentKind::adversary && cfg.adversary.mode == AdversaryMode::many_geom &&
      cfg.adversary.probs.empty())
    errs.push_back("adversary.probs is required for many_geom");
  if (cfg.kind == ExperimentKind::adversary && cfg.adversary.trials < 1000 &&
      (cfg.adversary.mode == AdversaryMode::chernoff_sum || cfg.adversary.mode == AdversaryMode::many_geom))
    errs.push_back("adversary.trials must be >= 1000 for tail bound checks");

  if (!errs.empty()) throw ConfigError(errs);
  cfg.canonical = j.dump();
  cfg.hash = [&] {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(cfg.canonical)));
    return std::string(buf);
  }();
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file '" + path + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::vector<power::PowerProfile> realize_profiles(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<power::PowerProfile> out;
  out.reserve(cfg.workers.size());
  for (std::size_t i = 0; i < cfg.workers.size(); ++i) {
    if (const auto* spec = std::get_if<power::ProfileSpec>(&cfg.workers[i])) {
      out.emplace_back(*spec);
      continue;
    }
    const auto& r = std::get<RandomOnOff>(cfg.workers[i]);
    // Separate stream from the simulation's per-worker streams.
    Rng rng = make_stream(derive_seed(seed, 0x70726f66ULL), i);
    std::exponential_distribution<double> on(1.0 / r.mean_on), off(1.0 / r.mean_off);
    power::PiecewiseConstant pc;
    double t = 0;
    bool up = true;
    while (t < r.length) {
      pc.breakpoints.push_back(t);
      pc.values.push_back(up ? r.power : 0.0);
      double d = up ? on(rng) : off(rng);
      t += std::max(d, 1e-9);
      up = !up;
    }
    if (!pc.values.empty() && pc.values.back() == 0.0) {
      pc.breakpoints.push_back(t);
      pc.values.push_back(r.power);
    }
    out.emplace_back(pc);
  }
  return out;
}

objectives::ProblemSpec build_problem(const ExperimentConfig& cfg) {
  const auto& o = cfg.problem.objective;
  objectives::ProblemSpec p;
  p.consts = cfg.consts;
  double zero_out_p = 1.0;
  if (o.type == "quadratic" || o.type == "heter_quadratic") {
    const double L = cfg.consts.L;
    objectives::Vector mean = objectives::Vector::Zero(o.dim);
    if (o.type == "quadratic") {
      p.objective = objectives::Quadratic{L, o.dim};
    } else {
      objectives::HeterQuadratic h{L, {}, o.dim};
      for (const auto& c : o.centers) {
        h.centers.push_back(Eigen::Map<const objectives::Vector>(c.data(), static_cast<Eigen::Index>(c.size())));
        mean += h.centers.back();
      }
      mean /= static_cast<double>(h.centers.size());
      p.objective = h;
    }
    if (!o.x0.empty()) {
      p.x0 = Eigen::Map<const objectives::Vector>(o.x0.data(), static_cast<Eigen::Index>(o.x0.size()));
    } else {
      // Start where f(x0) - f* = delta.
      p.x0 = mean + objectives::Vector::Constant(o.dim, std::sqrt(2 * cfg.consts.delta / (L * o.dim)));
    }
  } else {
    auto wc = objectives::scaled_worst_case(cfg.consts, objectives::Setup::homog, cfg.universal);
    p = wc.problem;
    zero_out_p = wc.zero_out_p;
  }
  if (cfg.problem.oracle == "gaussian") p.oracle = objectives::GaussianNoise{cfg.consts.sigma2};
  else if (cfg.problem.oracle == "zero_out") p.oracle = objectives::ZeroOut{zero_out_p};
  else p.oracle = objectives::ExactOracle{};
  return p;
}

std::string output_dir(const ExperimentConfig& cfg) {
  if (!cfg.output.empty()) return cfg.output;
  if (const char* env = std::getenv("HETSGD_OUT_DIR"); env && *env) return env;
  return "out";
}

}  // namespace hetsgd::cli
