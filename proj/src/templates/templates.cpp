// SPDX-License-Identifier: Apache-2.0
#include "rco/templates.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "rco/error.hpp"
#include "rco/records.hpp"

#ifndef RCO_DEFAULT_TEMPLATE_DIR
#define RCO_DEFAULT_TEMPLATE_DIR "assets/templates"
#endif

namespace rco {

namespace {

bool is_name_char(char c) {
  return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) ||
         c == '_';
}

// Length of a `{name}` placeholder starting at text[i], or 0.
std::size_t placeholder_at(std::string_view text, std::size_t i) {
  if (text[i] != '{') return 0;
  std::size_t j = i + 1;
  while (j < text.size() && is_name_char(text[j])) ++j;
  if (j == i + 1 || j >= text.size() || text[j] != '}') return 0;
  return j - i + 1;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool contains_any(const std::string& hay, std::initializer_list<const char*> needles) {
  return std::any_of(needles.begin(), needles.end(),
                     [&](const char* n) { return hay.find(n) != std::string::npos; });
}

}  // namespace

std::string_view to_string(TemplateStage s) {
  switch (s) {
    case TemplateStage::initial: return "initial";
    case TemplateStage::critique: return "critique";
    case TemplateStage::refinement: return "refinement";
    case TemplateStage::self_refinement: return "self_refinement";
    case TemplateStage::judge_pair: return "judge_pair";
    case TemplateStage::judge_score: return "judge_score";
    case TemplateStage::critique_pref: return "critique_pref";
  }
  return "initial";
}

std::string_view to_string(TemplateVariant v) {
  switch (v) {
    case TemplateVariant::standard: return "standard";
    case TemplateVariant::reddit: return "tldr";
    case TemplateVariant::news: return "news";
    case TemplateVariant::choices: return "choices";
    case TemplateVariant::open: return "open";
    case TemplateVariant::table: return "table";
    case TemplateVariant::humaneval: return "humaneval";
    case TemplateVariant::ds1000: return "ds1000";
  }
  return "standard";
}

std::vector<TemplateVariant> variants_for(TaskKind task) {
  switch (task) {
    case TaskKind::dialog: return {TemplateVariant::standard};
    case TaskKind::summarization: return {TemplateVariant::reddit, TemplateVariant::news};
    case TaskKind::question_answering: return {TemplateVariant::choices, TemplateVariant::open};
    case TaskKind::math:
      return {TemplateVariant::choices, TemplateVariant::table, TemplateVariant::open};
    case TaskKind::code: return {TemplateVariant::humaneval, TemplateVariant::ds1000};
  }
  return {};
}

std::string template_name(const TemplateKey& key) {
  const std::string stage(to_string(key.stage));
  if (key.style != CriticStyle::generic) {
    if (key.stage != TemplateStage::critique)
      throw TemplateError("critic style '" + std::string(to_string(key.style)) +
                          "' only applies to the critique stage, not '" + stage + "'");
    return stage + "/" + std::string(to_string(key.style));
  }
  const std::string task(to_string(key.task));
  switch (key.stage) {
    case TemplateStage::judge_pair:
    case TemplateStage::judge_score:
    case TemplateStage::critique_pref:
      return stage + "/" + task;
    default:
      break;
  }
  if (key.task == TaskKind::dialog) return stage + "/dialog";
  const auto allowed = variants_for(key.task);
  if (std::find(allowed.begin(), allowed.end(), key.variant) == allowed.end())
    throw TemplateError("variant '" + std::string(to_string(key.variant)) +
                        "' does not exist for task '" + task + "'");
  return stage + "/" + task + "_" + std::string(to_string(key.variant));
}

std::string substitute(std::string_view text, const Slots& slots) {
  std::string out;
  out.reserve(text.size() + 256);
  for (std::size_t i = 0; i < text.size();) {
    if (text.compare(i, 2, "{{") == 0 || text.compare(i, 2, "}}") == 0) {
      out += text[i];
      i += 2;
      continue;
    }
    if (const std::size_t len = placeholder_at(text, i)) {
      const std::string name(text.substr(i + 1, len - 2));
      auto it = slots.find(name);
      if (it == slots.end()) throw TemplateError("missing slot '" + name + "'");
      out += it->second;
      i += len;
      continue;
    }
    out += text[i++];
  }
  return out;
}

std::vector<std::string> placeholders(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    if (text.compare(i, 2, "{{") == 0 || text.compare(i, 2, "}}") == 0) {
      i += 2;
      continue;
    }
    if (const std::size_t len = placeholder_at(text, i)) {
      std::string name(text.substr(i + 1, len - 2));
      if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
      i += len;
      continue;
    }
    ++i;
  }
  return out;
}

TemplateLibrary TemplateLibrary::load(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("template directory '" + dir.string() + "' not found");
  TemplateLibrary lib;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::string rel = fs::relative(entry.path(), dir).generic_string();
    rel.resize(rel.size() - 4);
    std::string body = read_file(entry.path());
    // Files end with a single newline that is not part of the prompt.
    if (!body.empty() && body.back() == '\n') body.pop_back();
    lib.assets_.emplace(std::move(rel), std::move(body));
  }
  if (lib.assets_.empty()) throw IoError("template directory '" + dir.string() + "' is empty");
  return lib;
}

std::filesystem::path TemplateLibrary::default_dir() {
  if (const char* env = std::getenv("RCO_TEMPLATE_DIR"); env && *env) return env;
  return RCO_DEFAULT_TEMPLATE_DIR;
}

bool TemplateLibrary::contains(std::string_view name) const {
  return assets_.count(std::string(name) + ".user") != 0;
}

RenderedPrompt TemplateLibrary::render(std::string_view name, const Slots& slots) const {
  const std::string base(name);
  auto user = assets_.find(base + ".user");
  if (user == assets_.end()) throw TemplateError("no template named '" + base + "'");
  RenderedPrompt out;
  try {
    out.user = substitute(user->second, slots);
    if (auto sys = assets_.find(base + ".system"); sys != assets_.end())
      out.system = substitute(sys->second, slots);
  } catch (const TemplateError& e) {
    throw TemplateError(std::string(e.what()) + " in template '" + base + "'");
  }
  return out;
}

RenderedPrompt TemplateLibrary::render(const TemplateKey& key, const Slots& slots) const {
  return render(template_name(key), slots);
}

std::string summarization_kind(const PromptRecord& record) {
  const std::string src = lower(record.source);
  if (contains_any(src, {"tldr", "tl;dr", "reddit"})) return "Reddit post";
  if (contains_any(src, {"cnn", "dailymail", "daily_mail", "news"})) return "News";
  return "Article";
}

TemplateVariant select_variant(const PromptRecord& record) {
  switch (record.task) {
    case TaskKind::dialog: return TemplateVariant::standard;
    case TaskKind::summarization:
      return summarization_kind(record) == "Reddit post" || record.extra.count("subreddit")
                 ? TemplateVariant::reddit
                 : TemplateVariant::news;
    case TaskKind::question_answering:
      return record.choices ? TemplateVariant::choices : TemplateVariant::open;
    case TaskKind::math:
      if (record.choices) return TemplateVariant::choices;
      if (record.table_title || record.table_content) return TemplateVariant::table;
      return TemplateVariant::open;
    case TaskKind::code: {
      auto it = record.extra.find("code_format");
      const std::string fmt = it != record.extra.end() ? lower(it->second) : lower(record.source);
      return contains_any(fmt, {"ds1000", "ds-1000"}) ? TemplateVariant::ds1000
                                                      : TemplateVariant::humaneval;
    }
  }
  return TemplateVariant::standard;
}

std::string format_choices(const std::vector<std::string>& choices) {
  std::string out;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (i) out += ' ';
    out += '(';
    out += static_cast<char>('A' + static_cast<int>(i % 26));
    out += ") ";
    out += choices[i];
  }
  return out;
}

Slots record_slots(const PromptRecord& record) {
  Slots s;
  for (const auto& [k, v] : record.extra) s[k] = v;
  s["prompt"] = record.prompt;
  if (record.choices) s["choices"] = format_choices(*record.choices);
  if (record.table_title) s["table_title"] = *record.table_title;
  if (record.table_content) s["table_content"] = *record.table_content;
  if (record.reference_answer) s["ref_answer"] = *record.reference_answer;
  if (record.task == TaskKind::summarization) {
    s["kind"] = summarization_kind(record);
    s["post"] = record.prompt;
    s["news"] = record.prompt;
  }
  return s;
}

Slots swap_candidates(Slots slots) {
  bool swapped = false;
  for (const auto& [a, b] : {std::pair{"answer_0", "answer_1"}, std::pair{"critique_0", "critique_1"}}) {
    auto ia = slots.find(a);
    auto ib = slots.find(b);
    if (ia != slots.end() && ib != slots.end()) {
      std::swap(ia->second, ib->second);
      swapped = true;
    }
  }
  if (!swapped) throw TemplateError("swap_candidates needs answer_0/answer_1 or critique_0/critique_1");
  return slots;
}

}  // namespace rco
