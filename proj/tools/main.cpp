#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace gfrag::cli;
  CLI::App app{"Growth-fragmentation scenario runner"};
  app.require_subcommand(1);

  std::string config, command;
  RunOptions opts;
  uint64_t seed = 0;
  CLI::App* run_cmd = app.add_subcommand("run", "Run one experiment of a scenario config");
  run_cmd->add_option("config", config, "Scenario config (YAML)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("command", command, "Experiment")
      ->required()
      ->check(CLI::IsMember(command_names()));
  run_cmd->add_option("-j,--jobs", opts.jobs, "Parallel jobs")->check(CLI::PositiveNumber);
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Seed for random fields");
  run_cmd->add_flag("--emit-plots", opts.emit_plots, "Write SVG plots");
  run_cmd->add_option("-o,--out", opts.out_dir, "Output directory (overrides GFSPEC_OUT)");
  run_cmd->add_flag("--override", opts.hypothesis_override,
                    "Proceed when the coefficient hypotheses fail");

  CLI::App* list_cmd = app.add_subcommand("list", "List experiments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (*list_cmd) {
    for (const auto& n : command_names()) std::cout << n << "\n";
    return 0;
  }
  if (*seed_opt) opts.seed = seed;
  const RunResult res = run(config, command, opts, std::cerr);
  if (res.exit_code == kExitOk || res.exit_code == kExitCheckFailed)
    std::cout << res.out_dir.string() << "\n";
  return res.exit_code;
}
