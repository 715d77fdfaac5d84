// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rco/types.hpp"

namespace rco {

/// Resolved run configuration. Every field has a key of the same name in the
/// flat key-value config file and a matching `--key` flag on the CLI.
struct PipelineConfig {
  int n_critiques = 4;
  int m_refinements = 5;
  double beta = 0.1;
  std::uint64_t seed = 0;
  int parallelism = 1;
  CriticStyle critic_style = CriticStyle::generic;

  // Endpoint descriptors. URLs and tokens come from the environment only.
  std::string actor_model = "actor";
  std::string critic_model = "critic";
  std::string judge_model = "judge";

  double critique_temperature = 0.8;
  double refine_temperature = 0.8;
  double judge_temperature = 0.0;
  int max_tokens = 1024;
  int judge_max_tokens = 1024;
  int max_attempts = 3;
  int retry_backoff_ms = 1000;

  // 0 means "2M", i.e. every judgment of a critique must be valid.
  int min_valid_judgments = 0;
  int turns = 3;

  int effective_min_valid_judgments() const {
    return min_valid_judgments > 0 ? min_valid_judgments : 2 * m_refinements;
  }

  bool operator==(const PipelineConfig&) const = default;
};

/// Named violations; empty means the config is usable.
std::vector<std::string> validate_config(const PipelineConfig& config);

/// Ordered list of config keys, as used in dumps and hashes.
const std::vector<std::string>& config_keys();

/// Sets one key from its textual value. Throws ConfigError on unknown keys or
/// malformed values.
void set_config_value(PipelineConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const PipelineConfig& config, std::string_view key);

/// Parses `key = value` lines; `#` starts a comment. Throws ConfigError (with
/// line number) on malformed lines, unknown keys and repeated keys.
std::map<std::string, std::string> parse_config_text(std::string_view text);

/// Canonical `key = value\n` dump in config_keys() order.
std::string dump_config(const PipelineConfig& config);

/// FNV-1a of the canonical dump, as 16 hex digits.
std::string config_hash(const PipelineConfig& config);

/// Resolves defaults < file < flags. `flags` maps key to the list of values
/// given on the command line; differing repeated values are a ConfigError.
PipelineConfig resolve_config(const std::filesystem::path* file,
                              const std::map<std::string, std::vector<std::string>>& flags);

}  // namespace rco
