#pragma once

#include <iosfwd>

namespace ascfam::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNonConvergence = 2;

/// Runs the `ascfam` command line. Results go to files or `out`; logs and
/// diagnostics go to `err`. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ascfam::cli
