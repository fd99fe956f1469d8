#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bsda {

enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitUsage = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "BSDA_OUTPUT_ROOT";

/// Runs one subcommand. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bsda
