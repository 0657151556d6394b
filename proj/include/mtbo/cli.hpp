#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace mtbo {

// Fully resolved run configuration: subcommand, output directory, and the
// effective parameter set (file values with flag overrides, defaults filled).
struct RunConfig {
  std::string subcommand;
  std::string out_dir = ".";
  int threads = 0;
  nlohmann::json params;  // flat key -> value, subcommand-specific
};

// Strict parsing: unknown config keys are rejected, type errors name the key,
// command-line flags override file values.
RunConfig parse_config(int argc, const char* const* argv);

// Runs the subcommand, writing outputs (and an effective-config echo) under
// out_dir. Returns the process exit status; failures leave a machine-readable
// error.json behind.
int dispatch(const RunConfig& config);

int run_cli(int argc, const char* const* argv);

}  // namespace mtbo
