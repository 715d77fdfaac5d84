// SPDX-License-Identifier: Apache-2.0
//
// Generation stages: initial responses, N critiques per response, M
// refinements per critique, the critique-free self-refinement baseline and
// multi-turn critique/refine loops. Failures are collected per slot; a stage
// never aborts because one request failed.
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rco/gateway.hpp"
#include "rco/templates.hpp"
#include "rco/types.hpp"

namespace rco {

struct SamplerContext {
  const Endpoint* actor = nullptr;
  const Endpoint* critic = nullptr;
  const TemplateLibrary* templates = nullptr;
  CriticStyle style = CriticStyle::generic;
  double actor_temperature = 0.8;     // initial responses and refinements
  double critique_temperature = 0.8;
  int max_tokens = 1024;
  std::uint64_t seed = 0;
  int parallelism = 1;
  std::string actor_id = "actor";
  std::string critic_id = "critic";
};

struct StageFailure {
  std::string prompt_id;
  std::string stage;
  int critique_index = 0;    // 0 when not applicable
  int refinement_index = 0;  // 0 when not applicable
  std::string message;
};

template <typename Record>
struct StageResult {
  std::vector<Record> records;
  std::vector<StageFailure> failures;
};

/// Per-request seed: the run seed mixed with the prompt, stage and indices, so
/// every sampled index gets a distinct but reproducible draw.
std::uint64_t request_seed(std::uint64_t seed, std::string_view prompt_id, std::string_view stage,
                           int critique_index = 0, int refinement_index = 0);

/// Drops a leading "My revised response:" marker and surrounding whitespace.
std::string extract_refinement(std::string_view text);

/// Prompts rendered for each stage; exposed for lineage checks.
RenderedPrompt initial_prompt(const TemplateLibrary& lib, const PromptRecord& record);
RenderedPrompt critique_prompt(const TemplateLibrary& lib, const PromptRecord& record,
                               std::string_view response, CriticStyle style);
RenderedPrompt refinement_prompt(const TemplateLibrary& lib, const PromptRecord& record,
                                 std::string_view response, std::string_view critique);
RenderedPrompt self_refinement_prompt(const TemplateLibrary& lib, const PromptRecord& record,
                                      std::string_view response);

/// One turn-0 response per record.
StageResult<ResponseRecord> generate_initial(const SamplerContext& ctx,
                                             std::span<const PromptRecord> records);

/// Critiques 1..n for every record with an initial response.
StageResult<CritiqueRecord> generate_critiques(const SamplerContext& ctx,
                                               std::span<const PromptRecord> records,
                                               std::span<const ResponseRecord> initials, int n);

/// Refinements 1..m for every critique. `temperature` overrides the actor
/// temperature (0 with m = 1 gives the greedy evaluation mode).
StageResult<RefinementRecord> generate_refinements(const SamplerContext& ctx,
                                                   std::span<const PromptRecord> records,
                                                   std::span<const ResponseRecord> initials,
                                                   std::span<const CritiqueRecord> critiques, int m,
                                                   std::optional<double> temperature = std::nullopt);

/// One critique-free refinement per initial response, stored with turn = 1.
StageResult<ResponseRecord> self_refine(const SamplerContext& ctx,
                                        std::span<const PromptRecord> records,
                                        std::span<const ResponseRecord> initials);

struct IterationTurn {
  CritiqueRecord critique;  // index = turn
  ResponseRecord response;  // turn = 1..turns
};

/// Greedy critique + greedy refinement of the latest response, `turns` times.
/// A failure at turn t keeps turns 1..t-1 and reports the failure.
StageResult<IterationTurn> iterate(const SamplerContext& ctx, const PromptRecord& record,
                                   const ResponseRecord& initial, int turns);

struct SampleBundle {
  PromptRecord record;
  ResponseRecord initial;
  std::vector<CritiqueRecord> critiques;
  std::map<int, std::vector<RefinementRecord>> refinements;  // by critique index

  /// Exactly n critiques and m refinements for each of them.
  bool complete(int n, int m) const;
};

struct BundleRun {
  std::vector<SampleBundle> bundles;  // one per record that got an initial response
  std::vector<StageFailure> failures;
};

/// Runs initial -> critiques -> refinements for every record.
BundleRun sample_bundles(const SamplerContext& ctx, std::span<const PromptRecord> records, int n,
                         int m);

}  // namespace rco
