// SPDX-License-Identifier: Apache-2.0
#include "rco/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <variant>

#include "rco/error.hpp"
#include "rco/hash.hpp"
#include "rco/records.hpp"

namespace rco {

namespace {

using Member = std::variant<int PipelineConfig::*, double PipelineConfig::*,
                            std::uint64_t PipelineConfig::*, std::string PipelineConfig::*,
                            CriticStyle PipelineConfig::*>;

struct Field {
  const char* key;
  Member member;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      {"n_critiques", &PipelineConfig::n_critiques},
      {"m_refinements", &PipelineConfig::m_refinements},
      {"beta", &PipelineConfig::beta},
      {"seed", &PipelineConfig::seed},
      {"parallelism", &PipelineConfig::parallelism},
      {"critic_style", &PipelineConfig::critic_style},
      {"actor_model", &PipelineConfig::actor_model},
      {"critic_model", &PipelineConfig::critic_model},
      {"judge_model", &PipelineConfig::judge_model},
      {"critique_temperature", &PipelineConfig::critique_temperature},
      {"refine_temperature", &PipelineConfig::refine_temperature},
      {"judge_temperature", &PipelineConfig::judge_temperature},
      {"max_tokens", &PipelineConfig::max_tokens},
      {"judge_max_tokens", &PipelineConfig::judge_max_tokens},
      {"max_attempts", &PipelineConfig::max_attempts},
      {"retry_backoff_ms", &PipelineConfig::retry_backoff_ms},
      {"min_valid_judgments", &PipelineConfig::min_valid_judgments},
      {"turns", &PipelineConfig::turns},
  };
  return kFields;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ConfigError("config key '" + std::string(key) + "': malformed value '" +
                      std::string(text) + "'");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  return s;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> kKeys = [] {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.emplace_back(f.key);
    return keys;
  }();
  return kKeys;
}

void set_config_value(PipelineConfig& config, std::string_view key, std::string_view value) {
  const Field& f = find_field(key);
  value = trim(value);
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(config.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          config.*member = std::string(value);
        } else if constexpr (std::is_same_v<T, CriticStyle>) {
          try {
            config.*member = parse_critic_style(value);
          } catch (const ParseError& e) {
            throw ConfigError(std::string("config key '") + f.key + "': " + e.what());
          }
        } else {
          config.*member = parse_number<T>(key, value);
        }
      },
      f.member);
}

std::string get_config_value(const PipelineConfig& config, std::string_view key) {
  const Field& f = find_field(key);
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cvref_t<decltype(config.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return config.*member;
        } else if constexpr (std::is_same_v<T, CriticStyle>) {
          return std::string(to_string(config.*member));
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(config.*member);
        } else {
          return std::to_string(config.*member);
        }
      },
      f.member);
}

std::vector<std::string> validate_config(const PipelineConfig& c) {
  std::vector<std::string> v;
  if (!(c.beta > 0.0) || !std::isfinite(c.beta)) v.emplace_back("beta must be positive");
  if (c.n_critiques < 1) v.emplace_back("n_critiques must be at least 1");
  if (c.m_refinements < 1) v.emplace_back("m_refinements must be at least 1");
  if (c.parallelism < 1) v.emplace_back("parallelism must be at least 1");
  if (c.critique_temperature < 0.0) v.emplace_back("critique_temperature must be non-negative");
  if (c.refine_temperature < 0.0) v.emplace_back("refine_temperature must be non-negative");
  if (c.judge_temperature < 0.0) v.emplace_back("judge_temperature must be non-negative");
  if (c.max_tokens < 1) v.emplace_back("max_tokens must be positive");
  if (c.judge_max_tokens < 1) v.emplace_back("judge_max_tokens must be positive");
  if (c.max_attempts < 1) v.emplace_back("max_attempts must be at least 1");
  if (c.retry_backoff_ms < 0) v.emplace_back("retry_backoff_ms must be non-negative");
  if (c.min_valid_judgments < 0 ||
      (c.m_refinements >= 1 && c.min_valid_judgments > 2 * c.m_refinements))
    v.emplace_back("min_valid_judgments must lie in [0, 2M]");
  if (c.turns < 1) v.emplace_back("turns must be at least 1");
  return v;
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    find_field(key);
    if (!out.emplace(key, value).second)
      throw ConfigError("config line " + std::to_string(line_no) + ": repeated key '" + key + "'");
  }
  return out;
}

std::string dump_config(const PipelineConfig& config) {
  std::string out;
  for (const auto& key : config_keys()) out += key + " = " + get_config_value(config, key) + "\n";
  return out;
}

std::string config_hash(const PipelineConfig& config) {
  return hex64(fnv1a64(dump_config(config)));
}

PipelineConfig resolve_config(const std::filesystem::path* file,
                              const std::map<std::string, std::vector<std::string>>& flags) {
  PipelineConfig config;
  if (file) {
    std::string text;
    try {
      text = read_file(*file);
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
    for (const auto& [k, v] : parse_config_text(text)) set_config_value(config, k, v);
  }
  for (const auto& [key, values] : flags) {
    if (values.empty()) continue;
    // Compare parsed values so "0.5" and "0.50" do not conflict.
    PipelineConfig probe;
    set_config_value(probe, key, values.front());
    const std::string first = get_config_value(probe, key);
    for (const auto& v : values) {
      set_config_value(probe, key, v);
      if (get_config_value(probe, key) != first)
        throw ConfigError("conflicting values for --" + key + ": '" + values.front() + "' vs '" +
                          v + "'");
    }
    set_config_value(config, key, values.front());
  }
  return config;
}

}  // namespace rco
