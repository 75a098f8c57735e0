#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace affect::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

// args excludes the program name. Results go to files named by --out;
// summaries to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace affect::cli
