#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace proxyrank::pipeline {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitBackendUnavailable = 2;
inline constexpr int kExitDegenerate = 3;

/// Replaces ${VAR} with the environment value. Throws INVALID_CONFIG for
/// unset variables.
std::string interpolate_env(std::string_view s);

/// JSON config file with ${VAR} interpolation applied to every string.
/// Keys are flag names without the leading dashes, dashes replaced by
/// underscores; a section named after a subcommand overrides top-level keys.
nlohmann::json load_config(const std::filesystem::path& path);

/// Runs one subcommand. `args` excludes the program name. Exit codes: 0 ok,
/// 1 validation error, 2 backend unavailable, 3 degenerate statistics (the
/// report is still written).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace proxyrank::pipeline
