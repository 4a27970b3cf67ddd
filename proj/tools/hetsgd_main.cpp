#include <CLI11.hpp>
#include <iostream>

#include "hetsgd/config.hpp"
#include "hetsgd/error.hpp"
#include "hetsgd/experiment.hpp"

// Exit codes: 0 all checks passed, 1 a check failed, 2 bad config or usage, 3 runtime or I/O error.
int main(int argc, char** argv) {
  CLI::App app{"Time-complexity bounds and simulations for SGD on workers with varying speed"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
  int threads = 0;

  const std::pair<const char*, const char*> commands[] = {
      {"bound", "compute bound sequences"},
      {"simulate", "run an optimizer in the event simulator"},
      {"adversary", "run lower-bound Monte Carlo experiments"},
      {"verify", "run the acceptance checks"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "use this seed instead of the config's seed list");
    sub->add_option("--out", out, "output directory (default: config, then $HETSGD_OUT_DIR, then ./out)");
    sub->add_option("--override", overrides, "dotted.key=value, value parsed as JSON when possible")
        ->allow_extra_args(false);
    sub->add_option("--threads", threads, "worker threads, 0 for all cores");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    auto cfg = hetsgd::cli::load_config(config_path, overrides);
    if (hetsgd::cli::to_string(cfg.kind) != command) {
      std::cerr << "config describes a '" << hetsgd::cli::to_string(cfg.kind) << "' experiment, not '" << command
                << "'\n";
      return 2;
    }
    hetsgd::cli::ExecuteOptions opts;
    opts.seed = seed;
    opts.out = out;
    opts.threads = threads;
    opts.log = &std::cout;
    return hetsgd::cli::execute(cfg, opts);
  } catch (const hetsgd::ConfigError& e) {
    std::cerr << "invalid config:\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
