// SPDX-License-Identifier: Apache-2.0
//
// Pairwise preference judging with position-swap debiasing, verdict and rating
// parsing, and the mapping from verdicts to preference scores.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rco/gateway.hpp"
#include "rco/templates.hpp"
#include "rco/types.hpp"

namespace rco {

/// Letter of the last "[[A]]", "[[B]]" or "[[C]]" in `text`. Throws ParseError
/// when none is present.
Verdict parse_verdict(std::string_view text);

/// Integer inside the last "[[<digits>]]" marker. Throws ParseError when there
/// is no marker or the last one is outside 1..10.
int parse_rating(std::string_view text);

/// Refined preferred -> 1, tie -> 0.5, initial preferred -> 0. Slot A holds
/// the refinement for refined_first and the initial response for initial_first.
PreferenceScore verdict_to_ps(Verdict verdict, JudgeOrder order);

/// Question as shown to the judge: prompt plus answer choices or table.
std::string question_text(const PromptRecord& record);

struct JudgeContext {
  const Endpoint* endpoint = nullptr;
  const TemplateLibrary* templates = nullptr;
  double temperature = 0.0;
  int max_tokens = 1024;
  int parallelism = 1;
};

/// Judge request for one order of a (refinement, initial) pair.
CompletionRequest pair_request(const JudgeContext& ctx, const PromptRecord& record,
                               std::string_view initial, std::string_view refinement,
                               JudgeOrder order);

struct JudgmentSlot {
  JudgeOrder order = JudgeOrder::refined_first;
  std::string raw;
  std::optional<Verdict> verdict;
  std::optional<PreferenceScore> ps;
  std::string error;  // set when the slot is invalid

  bool valid() const noexcept { return ps.has_value(); }
};

/// Interprets one judge reply; invalid on transport or parse failure.
JudgmentSlot interpret_pair_reply(const CompletionResult& result, JudgeOrder order);

struct DebiasedJudgment {
  JudgmentSlot forward;   // refined_first
  JudgmentSlot reversed;  // initial_first
};

/// Judges the pair in both orders and maps each verdict to a preference score.
DebiasedJudgment judge_pair_debiased(const JudgeContext& ctx, const PromptRecord& record,
                                     std::string_view initial, std::string_view refinement);

/// Valid slots as records (0, 1 or 2 of them).
std::vector<JudgmentRecord> judgment_records(const std::string& prompt_id, int critique_index,
                                             int refinement_index, const DebiasedJudgment& j);

struct JudgeFailure {
  std::string prompt_id;
  int critique_index = 0;
  int refinement_index = 0;
  std::string order;
  std::string message;
};

struct JudgeBatch {
  std::vector<JudgmentRecord> judgments;
  std::vector<JudgeFailure> failures;
};

/// Judges every refinement against its prompt's initial response in both
/// orders. Refinements whose prompt or initial response is missing are
/// reported as failures.
JudgeBatch judge_refinements(const JudgeContext& ctx, std::span<const PromptRecord> prompts,
                             std::span<const ResponseRecord> initials,
                             std::span<const RefinementRecord> refinements);

enum class PairStatus { consistent, inconsistent, invalid };
std::string_view to_string(PairStatus s);

struct CritiquePairOutcome {
  PairStatus status = PairStatus::invalid;
  std::optional<Verdict> verdict;  // A: critique_a wins, B: critique_b wins, C: tie
  std::string raw_forward;
  std::string raw_reversed;
  std::string error;  // transport failure in either order
};

/// Compares two critiques of the same initial response in both orders. The
/// pair is inconsistent when the two orders disagree.
CritiquePairOutcome judge_critique_pair(const JudgeContext& ctx, const PromptRecord& record,
                                        std::string_view initial, std::string_view critique_a,
                                        std::string_view critique_b);

/// Combines the forward (a in slot A) and reversed (b in slot A) verdicts.
CritiquePairOutcome combine_critique_verdicts(std::optional<Verdict> forward,
                                              std::optional<Verdict> reversed);

struct RatingOutcome {
  std::optional<RatingRecord> rating;
  std::string raw;
  std::string error;
};

/// Rates one response on the 1-10 scale. Parse failures come back without a
/// rating so callers can exclude them.
RatingOutcome score_response(const JudgeContext& ctx, const PromptRecord& record,
                             std::string_view response, RatingSubject subject,
                             std::optional<int> critique_index = std::nullopt,
                             std::optional<int> refinement_index = std::nullopt);

}  // namespace rco
