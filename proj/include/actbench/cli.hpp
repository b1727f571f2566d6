#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace actbench {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitFailure = 2 };

/// Runs one command line. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace actbench
