#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wdl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;  ///< a verification failed, or a runtime error
inline constexpr int kExitUsage = 2;   ///< unknown subcommand/flag or an invalid value

/// Runs one command, e.g. {"schedule", "dump", "--name", "cosine"}. CSV goes to
/// `out` unless --out names a file; relative --out paths are resolved against
/// $WDL_OUT_DIR when set. `--config FILE` reads key=value lines that act as
/// flags of the same name; flags on the command line win.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wdl
