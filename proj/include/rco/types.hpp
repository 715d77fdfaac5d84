// SPDX-License-Identifier: Apache-2.0
//
// Record types shared by every pipeline stage.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rco {

enum class TaskKind { dialog, summarization, question_answering, math, code };

inline constexpr std::array<TaskKind, 5> kAllTasks = {
    TaskKind::dialog, TaskKind::summarization, TaskKind::question_answering, TaskKind::math,
    TaskKind::code};

std::string_view to_string(TaskKind t);
/// Throws ParseError on unknown names.
TaskKind parse_task_kind(std::string_view s);

/// Critique prompt family. auto_j and ultra_cm only change the critique stage.
enum class CriticStyle { generic, auto_j, ultra_cm };
std::string_view to_string(CriticStyle s);
CriticStyle parse_critic_style(std::string_view s);

struct PromptRecord {
  std::string id;
  TaskKind task = TaskKind::dialog;
  std::string prompt;
  std::optional<std::vector<std::string>> choices;
  std::optional<std::string> table_title;
  std::optional<std::string> table_content;
  std::optional<std::string> reference_answer;
  std::string source;
  // Additional template slots (e.g. subreddit/title for Reddit posts, code_format,
  // test_suite). Omitted from the file when empty.
  std::map<std::string, std::string> extra;

  bool operator==(const PromptRecord&) const = default;
};

struct ResponseRecord {
  std::string prompt_id;
  std::string actor_id;
  int turn = 0;  // 0 = initial response
  std::string text;

  bool operator==(const ResponseRecord&) const = default;
};

struct CritiqueRecord {
  std::string prompt_id;
  std::string critic_id;
  int index = 1;  // 1..N
  std::string text;

  bool operator==(const CritiqueRecord&) const = default;
};

struct RefinementRecord {
  std::string prompt_id;
  int critique_index = 1;    // 1..N
  int refinement_index = 1;  // 1..M
  std::string text;

  bool operator==(const RefinementRecord&) const = default;
};

enum class Verdict { A, B, C };
std::string_view to_string(Verdict v);
Verdict parse_verdict_name(std::string_view s);

/// Which candidate occupies slot A of the judge prompt.
enum class JudgeOrder { refined_first, initial_first };
std::string_view to_string(JudgeOrder o);
JudgeOrder parse_judge_order(std::string_view s);

/// A preference score is one of {0, 0.5, 1}.
using PreferenceScore = double;
bool is_preference_score(double v) noexcept;

struct JudgmentRecord {
  std::string prompt_id;
  int critique_index = 1;
  int refinement_index = 1;
  JudgeOrder order = JudgeOrder::refined_first;
  Verdict verdict = Verdict::C;
  PreferenceScore ps = 0.5;
  std::string raw;  // judge output kept for audit

  bool operator==(const JudgmentRecord&) const = default;
};

enum class RatingSubject { initial, refinement };
std::string_view to_string(RatingSubject s);
RatingSubject parse_rating_subject(std::string_view s);

struct RatingRecord {
  std::string prompt_id;
  RatingSubject subject = RatingSubject::initial;
  std::optional<int> critique_index;    // refinement subjects only
  std::optional<int> refinement_index;  // refinement subjects only
  int rating = 1;                       // 1..10
  std::string raw;

  bool operator==(const RatingRecord&) const = default;
};

struct RewardRecord {
  std::string prompt_id;
  int critique_index = 1;
  double cu = 0.0;
  int valid_judgments = 0;
  double log_z = 0.0;
  double target = 0.0;

  bool operator==(const RewardRecord&) const = default;
};

struct DpcoPair {
  std::string prompt_id;
  int chosen_index = 1;
  int rejected_index = 2;

  bool operator==(const DpcoPair&) const = default;
};

}  // namespace rco
