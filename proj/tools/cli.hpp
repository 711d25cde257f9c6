#pragma once

#include <iosfwd>

namespace emaxbr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUnstable = 2;
inline constexpr int kExitFailed = 3;
inline constexpr int kExitUsage = 64;

/// Entry point shared by the executable and the tests. Reports go to `out`
/// unless --out names a file; messages go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace emaxbr::cli
