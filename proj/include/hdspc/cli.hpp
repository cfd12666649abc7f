#pragma once

#include <iosfwd>

namespace hdspc {

inline constexpr int kExitClean = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitAlarm = 10;

/// Entry point of the `hdspc` command line tool. Output goes to `out` and
/// `err` so the commands can be exercised in-process.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace hdspc
