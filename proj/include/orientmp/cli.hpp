#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace orientmp {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitArgument = 2,
  kExitIo = 3,
  kExitConfig = 4,
  kExitAuditFailed = 5,
};

/// Runs one command line (without the program name) in-process.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace orientmp
