#pragma once

#include <iosfwd>

namespace bilevel_lb {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailure = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the bilevel-lb tool: params, verify, trace and bench
// subcommands. Reports go to --out (written atomically) or to out.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bilevel_lb
