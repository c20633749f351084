#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tabi {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point of the `tabi` tool. `args` excludes the program name.
/// Returns 0 on success, 2 for usage/config errors, 1 for runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tabi
