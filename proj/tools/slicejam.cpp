// slicejam: run, sweep or validate an experiment config.
//
// Exit codes: 0 success, 1 config error, 2 simulation abort.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "slicejam/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int jobs = 1;
  bool quiet = false;
};

int execute(const Options& opt, slicejam::RunMode mode) {
  slicejam::ExperimentConfig cfg;
  try {
    cfg = slicejam::parse_config(opt.config);
    if (opt.seed) cfg.seeds = {*opt.seed};
    if (opt.out) cfg.output_dir = *opt.out;
    cfg.validate();
  } catch (const slicejam::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  try {
    const auto summary = slicejam::run_experiment(cfg, mode, opt.jobs, opt.quiet ? nullptr : &std::cerr);
    if (!summary.ok()) {
      std::cerr << summary.aborted_runs << " run(s) aborted; see " << cfg.output_dir << "/manifest.json\n";
      return 2;
    }
  } catch (const slicejam::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "simulation aborted: " << e.what() << '\n';
    return 2;
  }
  std::cout << cfg.output_dir << '\n';
  return 0;
}

void add_run_flags(CLI::App* sub, Options& opt) {
  sub->add_option("config", opt.config, "experiment config file (key = value)")->required();
  sub->add_option("--seed", opt.seed, "run this single seed instead of the configured seed list");
  sub->add_option("--out", opt.out, "output directory (overrides output_dir)");
  sub->add_option("--jobs", opt.jobs, "simulations run concurrently")->check(CLI::PositiveNumber);
  sub->add_flag("-q,--quiet", opt.quiet, "no per-run progress on stderr");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RAN slicing under adversarial jamming: experiment runner"};
  app.require_subcommand(1);
  Options opt;

  auto* run = app.add_subcommand("run", "run the single configured cell for every seed");
  add_run_flags(run, opt);
  auto* sweep = app.add_subcommand("sweep", "run the attack x budget x defense grid for every seed");
  add_run_flags(sweep, opt);
  auto* validate = app.add_subcommand("validate", "parse and validate a config, print the resolved form");
  validate->add_option("config", opt.config, "experiment config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (validate->parsed()) {
    try {
      const auto cfg = slicejam::parse_config(opt.config);
      std::cout << slicejam::canonical_config(cfg);
      std::cout << "# config_hash = fnv1a64:" << slicejam::config_hash(cfg) << '\n';
      return 0;
    } catch (const slicejam::ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 1;
    }
  }
  return execute(opt, run->parsed() ? slicejam::RunMode::kSingle : slicejam::RunMode::kSweep);
}
