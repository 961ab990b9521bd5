#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace loft::cli {

using Json = nlohmann::json;

/// A configuration problem tied to a dotted key path ("train.lr", "paths.tm", ...).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error("config error at " + key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Desk-scale defaults: 16x16 speckles, 8x8 phases, 2000 pairs. Every key a config may set appears here.
Json default_config();

/// 64x64 speckles, 32x32 phases, 12888 pairs.
Json large_scale_preset();

/// Parses a JSON file; ConfigError("--config") if it cannot be read or parsed.
Json read_config_file(const std::filesystem::path& path);

/// Merges `patch` into `base` key by key. Keys missing from `base` and type mismatches throw ConfigError.
void merge_config(Json& base, const Json& patch, const std::string& prefix = "");

/// Sets the dotted key to `raw`, parsed as JSON when the existing value is not a string.
void apply_override(Json& cfg, const std::string& dotted, const std::string& raw);

/// Range checks that do not depend on the subcommand.
void validate_config(const Json& cfg);

/// Value at a dotted path; ConfigError if absent.
const Json& at_path(const Json& cfg, const std::string& dotted);

}  // namespace loft::cli
