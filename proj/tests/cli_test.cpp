#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "hetsgd/config.hpp"
#include "hetsgd/error.hpp"
#include "hetsgd/experiment.hpp"

using namespace hetsgd;
using namespace hetsgd::cli;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const char* kMinimal = R"({
  "experiment": "bound",
  "workers": [{"type": "constant", "power": 1}],
  "constants": {"L": 1, "delta": 1, "epsilon": 0.5, "sigma2": 1.5}
})";

std::string problems_of(const std::string& text, const std::vector<std::string>& overrides = {}) {
  try {
    parse_config(text, overrides);
  } catch (const ConfigError& e) {
    std::string all;
    for (const auto& p : e.problems()) all += p + "\n";
    return all;
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("hetsgd_cli_test_" + name);
  fs::remove_all(d);
  return d;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HETSGD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_path(const std::string& name) { return std::string(HETSGD_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST(Config, MinimalBound) {
  auto cfg = parse_config(kMinimal);
  EXPECT_EQ(cfg.kind, ExperimentKind::bound);
  ASSERT_EQ(cfg.workers.size(), 1u);
  EXPECT_DOUBLE_EQ(cfg.consts.sigma2, 1.5);
  EXPECT_EQ(cfg.consts.workers, 1);
  ASSERT_EQ(cfg.bound_kinds.size(), 1u);
  EXPECT_EQ(cfg.hash.size(), 16u);
  EXPECT_EQ(parse_config(kMinimal).hash, cfg.hash);
}

TEST(Config, NegativeSigmaNamesField) {
  auto j = json::parse(kMinimal);
  j["constants"]["sigma2"] = -1;
  auto msg = problems_of(j.dump());
  EXPECT_NE(msg.find("constants.sigma2"), std::string::npos) << msg;
}

TEST(Config, DuplicateKeyIsParseError) {
  auto msg = problems_of(R"({"experiment": "bound", "experiment": "simulate"})");
  EXPECT_NE(msg.find("parse error"), std::string::npos) << msg;
  EXPECT_NE(msg.find("experiment"), std::string::npos) << msg;
  EXPECT_NE(problems_of("{not json").find("parse error"), std::string::npos);
}

TEST(Config, UnknownKeysRejected) {
  auto j = json::parse(kMinimal);
  j["constants"]["sigma"] = 1;
  j["colour"] = "blue";
  auto msg = problems_of(j.dump());
  EXPECT_NE(msg.find("constants.sigma"), std::string::npos) << msg;
  EXPECT_NE(msg.find("colour"), std::string::npos) << msg;
}

TEST(Config, ListsEveryProblem) {
  auto j = json::parse(kMinimal);
  j["constants"]["L"] = 0;
  j["constants"]["epsilon"] = -2;
  j["workers"][0]["power"] = -1;
  auto msg = problems_of(j.dump());
  EXPECT_NE(msg.find("constants.L"), std::string::npos) << msg;
  EXPECT_NE(msg.find("constants.epsilon"), std::string::npos) << msg;
  EXPECT_NE(msg.find("workers[0].power"), std::string::npos) << msg;
}

TEST(Config, CrossChecks) {
  auto j = json::parse(kMinimal);
  j["experiment"] = "simulate";
  j["problem"] = {{"objective", {{"type", "heter_quadratic"}, {"dim", 2}, {"centers", {{0, 0}, {1, 1}}}}}};
  EXPECT_NE(problems_of(j.dump()).find("centers"), std::string::npos);
  j["problem"] = {{"objective", {{"type", "quadratic"}, {"dim", 2}, {"x0", {1, 2, 3}}}}};
  EXPECT_NE(problems_of(j.dump()).find("x0"), std::string::npos);
}

TEST(Config, Overrides) {
  auto cfg = parse_config(kMinimal, {"constants.sigma2=3", "seeds=[4,5]", "output=elsewhere"});
  EXPECT_DOUBLE_EQ(cfg.consts.sigma2, 3);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(cfg.output, "elsewhere");
  EXPECT_NE(cfg.hash, parse_config(kMinimal).hash);
  EXPECT_FALSE(problems_of(kMinimal, {"constants.sigma2=-3"}).empty());
  EXPECT_FALSE(problems_of(kMinimal, {"no_equals_sign"}).empty());
}

TEST(Config, RepeatAndRandomOnOff) {
  auto j = json::parse(kMinimal);
  j["workers"] = {{{"type", "constant"}, {"power", 2}, {"repeat", 3}},
                  {{"type", "random_on_off"}, {"power", 1}, {"mean_on", 2}, {"mean_off", 1}, {"length", 50}}};
  auto cfg = parse_config(j.dump());
  ASSERT_EQ(cfg.workers.size(), 4u);
  auto a = realize_profiles(cfg, 1);
  auto b = realize_profiles(cfg, 1);
  auto c = realize_profiles(cfg, 2);
  EXPECT_EQ(a[3].cumulative(40), b[3].cumulative(40));
  EXPECT_NE(a[3].cumulative(40), c[3].cumulative(40));
  EXPECT_LE(a[3].cumulative(40), 40);
  EXPECT_DOUBLE_EQ(a[3].power_at(1000), 1);  // on after the sampled span
}

TEST(Execute, BoundMatchesClosedForm) {
  auto cfg = load_config(config_path("bound_fixed.json"));
  auto dir = fresh_dir("bound");
  std::ostringstream log;
  ASSERT_EQ(execute(cfg, {.out = dir.string(), .log = &log}), 0);
  auto summary = json::parse(slurp(dir / "bound_summary.json"));
  bool seen = false;
  for (const auto& b : summary["bounds"]) {
    if (b["kind"] != "rennala_upper") continue;
    seen = true;
    const double upper = b["final_time"].get<double>();
    const double closed = b["closed_form"].get<double>();
    // 24 L delta / eps iterations, each within a factor 2 of the closed-form rate.
    EXPECT_GE(upper, 12 * closed);
    EXPECT_LE(upper, 48 * closed);
    // Last CSV row agrees with the summary.
    std::istringstream csv(slurp(dir / "bound_rennala_upper.csv"));
    std::string line, last;
    while (std::getline(csv, line)) {
      if (!line.empty()) last = line;
    }
    EXPECT_DOUBLE_EQ(std::stod(last.substr(last.find(',') + 1)), upper);
  }
  EXPECT_TRUE(seen);
}

TEST(Execute, SimulateIsReproducible) {
  auto cfg = load_config(config_path("simulate_rennala.json"), {"method.iterations=200"});
  auto a = fresh_dir("sim_a"), b = fresh_dir("sim_b");
  std::ostringstream log;
  ASSERT_EQ(execute(cfg, {.out = a.string(), .log = &log}), 0);
  ASSERT_EQ(execute(cfg, {.out = b.string(), .log = &log}), 0);
  int compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename();
    if (e.path().extension() == ".csv") {
      EXPECT_EQ(slurp(e.path()), slurp(b / name)) << name;
      ++compared;
    } else if (e.path().extension() == ".json") {
      auto ja = json::parse(slurp(e.path())), jb = json::parse(slurp(b / name));
      ja.erase("timestamp");
      jb.erase("timestamp");
      EXPECT_EQ(ja, jb) << name;
    }
  }
  EXPECT_EQ(compared, 4);  // three seeds plus the aggregate
  auto header = json::parse(slurp(a / "run_seed1.json"));
  EXPECT_EQ(header["iterations"], 200);
  EXPECT_EQ(header["config_hash"], cfg.hash);
}

TEST(Execute, VerifyExitStatus) {
  std::ostringstream log;
  ExperimentConfig ok;
  ok.kind = ExperimentKind::verify;
  ok.criteria = {9};
  EXPECT_EQ(execute(ok, {.out = fresh_dir("verify_ok").string(), .log = &log}), 0);
  ExperimentConfig bad = ok;
  bad.criteria = {9, 99};  // unknown id fails
  EXPECT_EQ(execute(bad, {.out = fresh_dir("verify_bad").string(), .log = &log}), 1);
  EXPECT_NE(log.str().find("FAIL"), std::string::npos);
}

TEST(Binary, ExitCodes) {
  const auto out = fresh_dir("bin").string();
  EXPECT_EQ(run_cli("bound --config " + config_path("bound_mixed.json") + " --out " + out), 0);
  EXPECT_TRUE(fs::exists(fs::path(out) / "bound_summary.json"));
  // Wrong subcommand for the config kind, bad override, missing file.
  EXPECT_EQ(run_cli("simulate --config " + config_path("bound_mixed.json") + " --out " + out), 2);
  EXPECT_EQ(run_cli("bound --config " + config_path("bound_mixed.json") + " --override constants.L=-1"), 2);
  EXPECT_EQ(run_cli("bound --config /nonexistent.json"), 2);
  EXPECT_EQ(run_cli("verify --config " + config_path("verify_quick.json") + " --override verify.criteria=[9]" +
                    " --out " + out),
            0);
}
