#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wreckseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

inline constexpr const char* kDataDirEnv = "WRECKSEG_DATA_DIR";

// args[0] is the program name. Diagnostics go to err as one line
// "wreckseg: error: <Code>: <message>".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wreckseg::cli
