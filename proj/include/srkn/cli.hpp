#pragma once

// Command-line front end: datagen, train, eval, generate, gradcheck.

#include <iosfwd>
#include <string>
#include <vector>

namespace srkn {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitNumeric = 3, kExitIo = 4 };

// Runs one command. `args` excludes the program name. Every command writes
// into a fresh run directory under the configured output root and prints
// "run_dir=<path>" on `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace srkn
