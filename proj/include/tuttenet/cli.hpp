#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tuttenet {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitInvariant = 1,
  kExitConfig = 2,
  kExitNumerical = 3,
};

/// Runs the command line (args excludes the program name) and returns the
/// exit code. Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace tuttenet
