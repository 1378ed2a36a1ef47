#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace phi4 {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kRngScheme = "splitmix64-counter-v1";

/// Exit codes: 0 ok, 1 a statistical check failed, 2 configuration error.
struct ExperimentOutcome {
  int exit_code = 0;
  std::string out_dir;
};

/// Parse a config file; throws std::invalid_argument on malformed input.
nlohmann::json load_config_file(const std::string& path);

/// Run one named experiment. `config` may be empty (defaults apply); unknown
/// keys are rejected with the offending key named. Writes resolved_config.json,
/// manifest.json and the result tables into the output directory.
ExperimentOutcome run_experiment(const std::string& experiment, nlohmann::json config,
                                 std::optional<std::uint64_t> seed_override,
                                 std::optional<std::string> out_override,
                                 std::optional<std::string> resume_checkpoint = std::nullopt);

/// Thread budget: PHI4_THREADS environment variable, default 1.
int thread_budget();

}  // namespace phi4
