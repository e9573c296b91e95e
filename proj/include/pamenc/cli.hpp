#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pamenc {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,
  kExitUsage = 2,        // unknown flag, bad value, missing subcommand
  kExitMissingFile = 3,  // a referenced input file does not exist
  kExitInvalidCombination = 4,
  kExitProtocol = 5,
};

// args excludes the program name. Diagnostics go to `err` as a single line.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, const char* const* argv);

}  // namespace pamenc
