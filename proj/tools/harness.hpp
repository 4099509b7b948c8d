#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "csgmcmc/io.hpp"

namespace csgmcmc::harness {

using json = nlohmann::json;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "CSGMCMC_OUTPUT_DIR";

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// Reads a JSON config. Throws std::runtime_error when the file cannot be
/// read and ConfigError when it does not parse.
json load_config(const std::filesystem::path& path);

/// Applies "dotted.key=value" overrides in order (last wins). Values are
/// parsed as JSON and fall back to plain strings.
void apply_overrides(json& config, const std::vector<std::string>& overrides);

/// Every violation in the config, as "field: message". Dataset paths are
/// resolved against `base_dir`.
std::vector<std::string> validate_config(const json& config, const std::filesystem::path& base_dir);

/// Loads and validates; unreadable files throw.
std::vector<std::string> validate_config_file(const std::filesystem::path& path,
                                              const std::vector<std::string>& overrides = {});

/// 16 hex digits derived from the config with run-only keys removed.
std::string run_id(const json& config);

struct RunOptions {
  std::vector<std::string> overrides;
  std::string output_dir;  // overrides config and environment when non-empty
};

struct RunOutcome {
  std::filesystem::path run_dir;
  Report report;
};

/// Runs the configured experiment into <output_dir>/<experiment>/<run-id>/.
RunOutcome run_experiment(const std::filesystem::path& config_path, const RunOptions& options = {});

/// Writes plot-ready CSV tables into <run_dir>/plot/.
void emit_plot_data(const std::filesystem::path& run_dir);

}  // namespace csgmcmc::harness
