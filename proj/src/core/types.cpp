// SPDX-License-Identifier: Apache-2.0
#include "rco/types.hpp"

#include <cstdio>

#include "rco/error.hpp"
#include "rco/hash.hpp"

namespace rco {

std::string_view to_string(TaskKind t) {
  switch (t) {
    case TaskKind::dialog: return "dialog";
    case TaskKind::summarization: return "summarization";
    case TaskKind::question_answering: return "question_answering";
    case TaskKind::math: return "math";
    case TaskKind::code: return "code";
  }
  return "dialog";
}

TaskKind parse_task_kind(std::string_view s) {
  for (TaskKind t : kAllTasks)
    if (to_string(t) == s) return t;
  throw ParseError("unknown task kind '" + std::string(s) + "'");
}

std::string_view to_string(CriticStyle s) {
  switch (s) {
    case CriticStyle::generic: return "generic";
    case CriticStyle::auto_j: return "auto_j";
    case CriticStyle::ultra_cm: return "ultra_cm";
  }
  return "generic";
}

CriticStyle parse_critic_style(std::string_view s) {
  if (s == "generic") return CriticStyle::generic;
  if (s == "auto_j") return CriticStyle::auto_j;
  if (s == "ultra_cm") return CriticStyle::ultra_cm;
  throw ParseError("unknown critic style '" + std::string(s) + "'");
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::A: return "A";
    case Verdict::B: return "B";
    case Verdict::C: return "C";
  }
  return "C";
}

Verdict parse_verdict_name(std::string_view s) {
  if (s == "A") return Verdict::A;
  if (s == "B") return Verdict::B;
  if (s == "C") return Verdict::C;
  throw ParseError("unknown verdict '" + std::string(s) + "'");
}

std::string_view to_string(JudgeOrder o) {
  return o == JudgeOrder::refined_first ? "refined_first" : "initial_first";
}

JudgeOrder parse_judge_order(std::string_view s) {
  if (s == "refined_first") return JudgeOrder::refined_first;
  if (s == "initial_first") return JudgeOrder::initial_first;
  throw ParseError("unknown judge order '" + std::string(s) + "'");
}

bool is_preference_score(double v) noexcept { return v == 0.0 || v == 0.5 || v == 1.0; }

std::string_view to_string(RatingSubject s) {
  return s == RatingSubject::initial ? "initial" : "refinement";
}

RatingSubject parse_rating_subject(std::string_view s) {
  if (s == "initial") return RatingSubject::initial;
  if (s == "refinement") return RatingSubject::refinement;
  throw ParseError("unknown rating subject '" + std::string(s) + "'");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace rco
