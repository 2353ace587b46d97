// escape: command-line front end.
//
//   escape compute     --config run.json [--out dir]
//   escape simulate    --config run.json [--seed s] [--trials n]
//   escape sweep       --config run.json
//   escape escape-time --config run.json
//
// Flags override the matching config keys. Exit codes: 0 ok, 1 invalid
// input, 2 empty escape set, 3 guarantee violated.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "escape/cli.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config, "JSON run configuration")->required();
  sub->add_option("-o,--out", o.out, "output directory");
  sub->add_option("--seed", o.seed, "noise seed");
  sub->add_option("--trials", o.trials, "number of simulated runs");
  sub->add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Escape functions and partial control of noisy 1D maps"};
  app.require_subcommand(1);
  Overrides o;
  auto* compute = app.add_subcommand("compute", "escape functions and escape sets");
  auto* simulate = app.add_subcommand("simulate", "controlled orbits");
  auto* sweep = app.add_subcommand("sweep", "minimal horizon over (xi0, u0)");
  auto* etime = app.add_subcommand("escape-time", "uncontrolled escape times");
  for (auto* sub : {compute, simulate, sweep, etime}) add_common(sub, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : escape::cli::kInvalid;
  }

  escape::RunConfig cfg;
  try {
    cfg = escape::cli::load_config(o.config);
    if (o.out) cfg.out_dir = *o.out;
    if (o.seed) cfg.seed = *o.seed;
    if (o.trials) cfg.trials = *o.trials;
    if (o.threads) cfg.threads = *o.threads;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return escape::cli::kInvalid;
  }
  cfg.threads = escape::resolve_threads(cfg.threads);

  escape::cli::Io io{std::cout, std::cerr};
  try {
    if (*compute) return escape::cli::guarded(escape::cli::cmd_compute, cfg, io);
    if (*simulate) return escape::cli::guarded(escape::cli::cmd_simulate, cfg, io);
    if (*sweep) return escape::cli::guarded(escape::cli::cmd_sweep, cfg, io);
    return escape::cli::guarded(escape::cli::cmd_escape_time, cfg, io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return escape::cli::kInvalid;
  }
}
