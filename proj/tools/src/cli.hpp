#pragma once

#include <string>
#include <vector>

namespace fcnpose::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitIo = 5;

int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

/// "30,50,0.7" -> {0.3, 0.5, 0.7}; values >= 1 are percentages.
std::vector<double> parse_rates(const std::string& text);

/// "64" or "64x96" (height x width).
std::pair<std::size_t, std::size_t> parse_resolution(const std::string& text);

}  // namespace fcnpose::cli
