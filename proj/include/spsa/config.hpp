#pragma once

// Sectioned key-value config file for ExperimentConfig.
//
//   # comment
//   [section]
//   key = value
//
// Keys absent from the file keep their defaults; unknown sections or keys are
// errors. config_reference() lists every key with its default.

#include "spsa/harness.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace spsa {

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnvVar = "SPSA_CONFIG";

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string format_config(const ExperimentConfig& config);
std::string config_reference();

} // namespace spsa
