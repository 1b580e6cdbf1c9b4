#pragma once

#include <string>
#include <vector>

namespace demea::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (argv[0] excluded) and returns the process exit code.
int run(const std::vector<std::string>& args);

}  // namespace demea::cli
