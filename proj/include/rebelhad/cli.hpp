#pragma once

#include <ostream>

namespace rebelhad {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

// Entry point of the `rebelhad` tool. Normal output goes to `out`,
// diagnostics and the resolved configuration to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rebelhad
