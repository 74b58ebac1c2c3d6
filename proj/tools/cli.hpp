#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace erfe::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;        // usage, file, parse or numerical errors
inline constexpr int kNotConverged = 2;   // at least one fit hit max_iter

// Runs the `erfe` command line. Results go to `out` unless --out names a
// file; diagnostics and warnings go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace erfe::cli
