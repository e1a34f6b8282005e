#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tensorcalc {

// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitInternal = 3 };

// Runs the `tensorcalc` command line. `args` excludes the program name.
// TENSORCALC_SEED, when set, overrides --seed.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tensorcalc
