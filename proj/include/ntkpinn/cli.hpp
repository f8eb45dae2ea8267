#pragma once

#include <ostream>

namespace ntkpinn {

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// Entry point of the `ntkpinn` tool:
///   run <experiment> [--config <path>] [--seed <u64>] [--out <dir>]
///   dump-ntk --config <path> --step <t> [--seed <u64>] [--out <file>]
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ntkpinn
