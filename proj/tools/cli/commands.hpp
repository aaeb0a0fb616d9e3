#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cli/run_config.hpp"

namespace iclopt::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitLoad = 3,
  kExitPrecondition = 4,
  kExitBackend = 5,
  kExitScenario = 6,
  kExitCellFailed = 7,
};

/// Each command writes its artifacts under config.output_dir and returns an
/// exit code. Errors propagate as exceptions; run_cli maps them.
int cmd_split(const RunConfig& config, std::ostream& out);
int cmd_stats(const RunConfig& config, std::ostream& out);
int cmd_index(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config, std::ostream& out);
int cmd_tune(const RunConfig& config, std::ostream& out);
int cmd_matrix(const RunConfig& config, std::ostream& out);
int cmd_render(const RunConfig& config, const std::filesystem::path& matrix_json, std::ostream& out);

/// Maps the current exception to an exit code, printing it to `err`.
int exit_code_for(std::exception_ptr error, std::ostream& err);

/// Full command line, without the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace iclopt::cli
