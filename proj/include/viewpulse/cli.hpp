#pragma once

#include <string>
#include <vector>

namespace viewpulse::cli {

/// Runs one subcommand. Returns 0 on success, 1 on runtime/data errors,
/// 2 on usage errors.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace viewpulse::cli
