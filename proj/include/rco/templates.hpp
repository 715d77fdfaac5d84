// SPDX-License-Identifier: Apache-2.0
//
// Prompt rendering. Template prose lives in text assets, one file per
// (stage, task variant, style), with `{name}` placeholders and `{{`/`}}` for
// literal braces. Layout under the template directory:
//
//   initial/ critique/ refinement/ self_refinement/
//       dialog, summarization_{tldr,news}, question_answering_{choices,open},
//       math_{choices,table,open}, code_{humaneval,ds1000}
//   critique/auto_j, critique/ultra_cm
//   judge_pair/ judge_score/ critique_pref/
//       dialog, summarization, question_answering, math, code
//   answer_check/default
//
// Each template has `<name>.user.txt` and optionally `<name>.system.txt`.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rco/types.hpp"

namespace rco {

enum class TemplateStage {
  initial,
  critique,
  refinement,
  self_refinement,
  judge_pair,
  judge_score,
  critique_pref,
};
inline constexpr std::array<TemplateStage, 7> kAllStages = {
    TemplateStage::initial,     TemplateStage::critique,    TemplateStage::refinement,
    TemplateStage::self_refinement, TemplateStage::judge_pair, TemplateStage::judge_score,
    TemplateStage::critique_pref};
std::string_view to_string(TemplateStage s);

/// Source-dataset flavour of a task. Only some combinations exist.
enum class TemplateVariant { standard, reddit, news, choices, open, table, humaneval, ds1000 };
std::string_view to_string(TemplateVariant v);

/// Variants that exist for a task's data-construction templates.
std::vector<TemplateVariant> variants_for(TaskKind task);

struct TemplateKey {
  TemplateStage stage = TemplateStage::initial;
  TaskKind task = TaskKind::dialog;
  TemplateVariant variant = TemplateVariant::standard;
  CriticStyle style = CriticStyle::generic;
};

/// Asset name for a key, e.g. "critique/math_table". Throws TemplateError for
/// invalid (stage, variant, style) combinations.
std::string template_name(const TemplateKey& key);

using Slots = std::map<std::string, std::string>;

struct RenderedPrompt {
  std::string system;  // empty when the template has no system part
  std::string user;
};

/// Substitutes `{name}` placeholders. Throws TemplateError naming the first
/// placeholder without a slot.
std::string substitute(std::string_view text, const Slots& slots);

/// Placeholder names used by a template text, in order of first appearance.
std::vector<std::string> placeholders(std::string_view text);

/// Immutable set of template assets; safe to share across threads.
class TemplateLibrary {
 public:
  /// Loads every `*.txt` file under `dir`. Throws IoError if the directory is
  /// missing or empty.
  static TemplateLibrary load(const std::filesystem::path& dir);

  /// $RCO_TEMPLATE_DIR if set, otherwise the assets directory of the source tree.
  static std::filesystem::path default_dir();

  RenderedPrompt render(const TemplateKey& key, const Slots& slots) const;
  RenderedPrompt render(std::string_view name, const Slots& slots) const;

  bool contains(std::string_view name) const;
  /// Raw template texts keyed by file stem ("critique/dialog.user").
  const std::map<std::string, std::string>& assets() const { return assets_; }

 private:
  std::map<std::string, std::string> assets_;
};

/// Chooses the template variant a record uses: choices/table/open for QA and
/// math, reddit/news for summarization, humaneval/ds1000 for code.
TemplateVariant select_variant(const PromptRecord& record);

/// "Reddit post", "News", or "Article" for unrecognised sources.
std::string summarization_kind(const PromptRecord& record);

/// Formats answer choices as "(A) first (B) second ...".
std::string format_choices(const std::vector<std::string>& choices);

/// Slots derived from a record: prompt, choices, table_title, table_content,
/// ref_answer, kind, post/news, plus every `extra` entry.
Slots record_slots(const PromptRecord& record);

/// Exchanges answer_0/answer_1 (or critique_0/critique_1). Throws TemplateError
/// when neither pair is present.
Slots swap_candidates(Slots slots);

}  // namespace rco
