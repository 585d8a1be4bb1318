#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ioodg::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitBadConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNonFinite = 4;
inline constexpr int kExitBadMagic = 5;
inline constexpr int kExitGradCheck = 6;

/// Runs one command line (args[0] is the program name). Machine-readable
/// results go to `out`, ending with a "RESULT key=value ..." line; progress
/// and tables go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ioodg::cli
