#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace keco::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitInternal = 4;

/// Runs the `keco` command line. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace keco::cli
