#pragma once

#include <string>
#include <vector>

#include "kamstark/serialize.hpp"

namespace kamstark {

// Environment variable naming the directory for outputs whose path is not given.
inline constexpr const char* kOutDirEnv = "KAMSTARK_OUT_DIR";

struct CommandResult {
  int exit_code = 0;  // 0 when every asserted bound holds, 1 otherwise
  Json summary;
  std::vector<std::string> files;
};

std::vector<std::string> command_names();
std::string usage_text();

// Runs config["command"] with defaults filled in for absent fields; `out` is excluded from the
// config hash. Throws Error on invalid input or failed computation.
CommandResult run_command(const Json& config);

}  // namespace kamstark
