// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rco/records.hpp"
#include "rco/templates.hpp"
#include "rco/trainer.hpp"

namespace rco::testing {

inline std::filesystem::path data_dir() {
  if (const char* d = std::getenv("RCO_TEST_DATA"); d && *d) return d;
  return std::filesystem::path(__FILE__).parent_path();
}

inline const TemplateLibrary& templates() {
  static const TemplateLibrary lib = TemplateLibrary::load(TemplateLibrary::default_dir());
  return lib;
}

inline std::vector<PromptRecord> prompts20() {
  return load_records<PromptRecord>(data_dir() / "fixtures" / "prompts20.jsonl");
}

inline const PromptRecord& prompt_for(TaskKind task) {
  static const std::vector<PromptRecord> all = prompts20();
  for (const auto& p : all)
    if (p.task == task) return p;
  throw std::logic_error("fixture has no prompt for task");
}

// Golden template text; like the template assets, the final newline of the file
// is not part of the text.
inline std::string read_golden(const std::filesystem::path& file) {
  std::string body = read_file(file);
  if (!body.empty() && body.back() == '\n') body.pop_back();
  return body;
}

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "rco-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

/// Random K-critique instance; cus uniform in [0,1], reference uniform or
/// drawn from [0.1, 1] weights.
inline ToyInstance random_instance(std::mt19937_64& rng, int k, double beta, bool uniform_reference) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  ToyInstance inst;
  inst.beta = beta;
  for (int i = 0; i < k; ++i) inst.cus.push_back(unit(rng));
  if (uniform_reference) {
    inst.reference = ReferencePolicy::uniform(static_cast<std::size_t>(k));
  } else {
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      inst.reference.probabilities.push_back(weight(rng));
      sum += inst.reference.probabilities.back();
    }
    for (double& p : inst.reference.probabilities) p /= sum;
  }
  return inst;
}

inline CategoricalPolicy random_policy(std::mt19937_64& rng, std::size_t k, double scale = 2.0) {
  std::normal_distribution<double> n(0.0, scale);
  CategoricalPolicy p;
  for (std::size_t i = 0; i < k; ++i) p.logits.push_back(n(rng));
  return p;
}

}  // namespace rco::testing
