#pragma once

#include "score/error.hpp"

namespace score::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidInput = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitIo = 4;

int exit_code_for(ErrorKind kind);

/// Parses argv, runs one subcommand and returns the process exit code.
/// Errors are reported on stderr; nothing escapes as an exception.
int run(int argc, const char* const* argv);

}  // namespace score::cli
