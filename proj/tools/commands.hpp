#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gfrag/errors.hpp"
#include "scenario.hpp"

namespace gfrag::cli {

enum ExitCode { kExitOk = 0, kExitCheckFailed = 1, kExitConfig = 2, kExitNumerical = 3 };

struct RunOptions {
  int jobs = 1;
  std::optional<uint64_t> seed;
  bool emit_plots = false;
  std::string out_dir;        // empty: GFSPEC_OUT, then the config
  bool hypothesis_override = false;
};

struct CheckResult {
  std::string metric;
  double value = 0.0;
  std::optional<double> min;
  std::optional<double> max;
  bool builtin = false;
  bool passed = false;
};

struct RunResult {
  int exit_code = kExitOk;
  std::filesystem::path out_dir;
  std::vector<CheckResult> checks;
  std::string message;
};

const std::vector<std::string>& command_names();

// Runs one subcommand on a parsed scenario and writes its artifacts.
RunResult run_command(const Scenario& scenario, const std::string& command,
                      const RunOptions& opts, std::ostream& log);

// Loads the config, runs, and maps every failure to an exit code.
RunResult run(const std::string& config_path, const std::string& command,
              const RunOptions& opts, std::ostream& log);

int exit_code_for(ErrorCode code);

}  // namespace gfrag::cli
