#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace adapcr {

/// Exit codes of the `adapcr` binary.
enum ExitCode : int {
    kExitOk = 0,
    kExitRuntime = 1,
    kExitUsage = 2,
    kExitConfig = 3,
};

/// Parses argv (program name first) and runs one subcommand.
/// Standard output of the subcommand goes to `out`; help text too.
int run_cli(const std::vector<std::string>& args, std::ostream& out);
int run_cli(int argc, const char* const* argv);

}  // namespace adapcr
