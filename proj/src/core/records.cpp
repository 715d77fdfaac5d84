// SPDX-License-Identifier: Apache-2.0
#include "rco/records.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "rco/error.hpp"

namespace rco {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// field readers

class FieldReader {
 public:
  FieldReader(const json& obj, std::size_t line) : obj_(obj), line_(line) {}

  std::string str(const char* key) const {
    const json& v = require(key);
    if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
  }
  std::optional<std::string> opt_str(const char* key) const {
    if (!obj_.contains(key)) return std::nullopt;
    return str(key);
  }
  int integer(const char* key) const {
    const json& v = require(key);
    if (!v.is_number_integer()) fail(std::string("field '") + key + "' must be an integer");
    return v.get<int>();
  }
  std::optional<int> opt_integer(const char* key) const {
    if (!obj_.contains(key)) return std::nullopt;
    return integer(key);
  }
  double number(const char* key) const {
    const json& v = require(key);
    if (!v.is_number()) fail(std::string("field '") + key + "' must be a number");
    return v.get<double>();
  }
  std::optional<std::vector<std::string>> opt_str_list(const char* key) const {
    if (!obj_.contains(key)) return std::nullopt;
    const json& v = obj_.at(key);
    if (!v.is_array()) fail(std::string("field '") + key + "' must be an array");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) fail(std::string("field '") + key + "' must hold strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }
  std::map<std::string, std::string> opt_str_map(const char* key) const {
    std::map<std::string, std::string> out;
    if (!obj_.contains(key)) return out;
    const json& v = obj_.at(key);
    if (!v.is_object()) fail(std::string("field '") + key + "' must be an object");
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (!it.value().is_string()) fail(std::string("field '") + key + "' must hold strings");
      out.emplace(it.key(), it.value().get<std::string>());
    }
    return out;
  }
  void only(std::initializer_list<const char*> keys) const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      bool known = std::any_of(keys.begin(), keys.end(),
                               [&](const char* k) { return it.key() == k; });
      if (!known) fail("unknown field '" + it.key() + "'");
    }
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_); }

  template <class F>
  auto wrap(F&& f) const {
    try {
      return f();
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      fail(e.what());
    }
  }

 private:
  const json& require(const char* key) const {
    if (!obj_.contains(key)) fail(std::string("missing field '") + key + "'");
    return obj_.at(key);
  }
  const json& obj_;
  std::size_t line_;
};

// ---------------------------------------------------------------------------
// per-type schema

template <class R>
struct Schema;

template <>
struct Schema<PromptRecord> {
  static constexpr const char* kName = "prompt";
  static ojson encode(const PromptRecord& r) {
    ojson o;
    o["id"] = r.id;
    o["task"] = std::string(to_string(r.task));
    o["prompt"] = r.prompt;
    if (r.choices) o["choices"] = *r.choices;
    if (r.table_title) o["table_title"] = *r.table_title;
    if (r.table_content) o["table_content"] = *r.table_content;
    if (r.reference_answer) o["reference_answer"] = *r.reference_answer;
    o["source"] = r.source;
    if (!r.extra.empty()) {
      ojson e = ojson::object();
      for (const auto& [k, v] : r.extra) e[k] = v;
      o["extra"] = e;
    }
    return o;
  }
  static PromptRecord decode(const FieldReader& f) {
    f.only({"id", "task", "prompt", "choices", "table_title", "table_content",
            "reference_answer", "source", "extra"});
    PromptRecord r;
    r.id = f.str("id");
    r.task = f.wrap([&] { return parse_task_kind(f.str("task")); });
    r.prompt = f.str("prompt");
    r.choices = f.opt_str_list("choices");
    r.table_title = f.opt_str("table_title");
    r.table_content = f.opt_str("table_content");
    r.reference_answer = f.opt_str("reference_answer");
    r.source = f.opt_str("source").value_or("");
    r.extra = f.opt_str_map("extra");
    return r;
  }
  static auto key(const PromptRecord& r) { return std::tie(r.id); }
  static std::string describe(const PromptRecord& r) { return "id '" + r.id + "'"; }
};

template <>
struct Schema<ResponseRecord> {
  static constexpr const char* kName = "response";
  static ojson encode(const ResponseRecord& r) {
    ojson o;
    o["prompt_id"] = r.prompt_id;
    o["actor_id"] = r.actor_id;
    o["turn"] = r.turn;
    o["text"] = r.text;
    return o;
  }
  static ResponseRecord decode(const FieldReader& f) {
    f.only({"prompt_id", "actor_id", "turn", "text"});
    return {f.str("prompt_id"), f.str("actor_id"), f.integer("turn"), f.str("text")};
  }
  static auto key(const ResponseRecord& r) { return std::tie(r.prompt_id, r.actor_id, r.turn); }
  static std::string describe(const ResponseRecord& r) {
    return "(" + r.prompt_id + ", " + r.actor_id + ", turn " + std::to_string(r.turn) + ")";
  }
};

template <>
struct Schema<CritiqueRecord> {
  static constexpr const char* kName = "critique";
  static ojson encode(const CritiqueRecord& r) {
    ojson o;
    o["prompt_id"] = r.prompt_id;
    o["critic_id"] = r.critic_id;
    o["index"] = r.index;
    o["text"] = r.text;
    return o;
  }
  static CritiqueRecord decode(const FieldReader& f) {
    f.only({"prompt_id", "critic_id", "index", "text"});
    return {f.str("prompt_id"), f.str("critic_id"), f.integer("index"), f.str("text")};
  }
  static auto key(const CritiqueRecord& r) { return std::tie(r.prompt_id, r.critic_id, r.index); }
  static std::string describe(const CritiqueRecord& r) {
    return "(" + r.prompt_id + ", " + r.critic_id + ", " + std::to_string(r.index) + ")";
  }
};

template <>
struct Schema<RefinementRecord> {
  static constexpr const char* kName = "refinement";
  static ojson encode(const RefinementRecord& r) {
    ojson o;
    o["prompt_id"] = r.prompt_id;
    o["critique_index"] = r.critique_index;
    o["refinement_index"] = r.refinement_index;
    o["text"] = r.text;
    return o;
  }
  static RefinementRecord decode(const FieldReader& f) {
    f.only({"prompt_id", "critique_index", "refinement_index", "text"});
    return {f.str("prompt_id"), f.integer("critique_index"), f.integer("refinement_index"),
            f.str("text")};
  }
  static auto key(const RefinementRecord& r) {
    return std::tie(r.prompt_id, r.critique_index, r.refinement_index);
  }
  static std::string describe(const RefinementRecord& r) {
    return "(" + r.prompt_id + ", " + std::to_string(r.critique_index) + ", " +
           std::to_string(r.refinement_index) + ")";
  }
};

template <>
struct Schema<JudgmentRecord> {
  static constexpr const char* kName = "judgment";
  static ojson encode(const JudgmentRecord& r) {
    ojson o;
    o["prompt_id"] = r.prompt_id;
    o["critique_index"] = r.critique_index;
    o["refinement_index"] = r.refinement_index;
    o["order"] = std::string(to_string(r.order));
    o["verdict"] = std::string(to_string(r.verdict));
    o["ps"] = r.ps;
    o["raw"] = r.raw;
    return o;
  }
  static JudgmentRecord decode(const FieldReader& f) {
    f.only({"prompt_id", "critique_index", "refinement_index", "order", "verdict", "ps", "raw"});
    JudgmentRecord r;
    r.prompt_id = f.str("prompt_id");
    r.critique_index = f.integer("critique_index");
    r.refinement_index = f.integer("refinement_index");
    r.order = f.wrap([&] { return parse_judge_order(f.str("order")); });
    r.verdict = f.wrap([&] { return parse_verdict_name(f.str("verdict")); });
    r.ps = f.number("ps");
    r.raw = f.opt_str("raw").value_or("");
    return r;
  }
  static auto key(const JudgmentRecord& r) {
    return std::tie(r.prompt_id, r.critique_index, r.refinement_index, r.order);
  }
  static std::string describe(const JudgmentRecord& r) {
    return "(" + r.prompt_id + ", " + std::to_string(r.critique_index) + ", " +
           std::to_string(r.refinement_index) + ", " + std::string(to_string(r.order)) + ")";
  }
};

template <>
struct Schema<RatingRecord> {
  static constexpr const char* kName = "rating";
  static ojson encode(const RatingRecord& r) {
    ojson o;
    o["prompt_id"] = r.prompt_id;
    o["subject"] = std::string(to_string(r.subject));
    if (r.critique_index) o["critique_index"] = *r.critique_index;
    if (r.refinement_index) o["refinement_index"] = *r.refinement_index;
    o["rating"] = r.rating;
    o["raw"] = r.raw;
    return o;
  }
  static RatingRecord decode(const FieldReader& f) {
    f.only({"prompt_id", "subject", "critique_index", "refinement_index", "rating", "raw"});
    RatingRecord r;
    r.prompt_id = f.str("prompt_id");
    r.subject = f.wrap([&] { return parse_rating_subject(f.str("subject")); });
    r.critique_index = f.opt_integer("critique_index");
    r.refinement_index = f.opt_integer("refinement_index");
    r.rating = f.integer("rating");
    r.raw = f.opt_str("raw").value_or("");
    return r;
  }
  static auto key(const RatingRecord& r) {
    return std::make_tuple(r.prompt_id, r.subject, r.critique_index.value_or(0),
                           r.refinement_index.value_or(0));
  }
  static std::string describe(const RatingRecord& r) {
    return "(" + r.prompt_id + ", " + std::string(to_string(r.subject)) + ")";
  }
};

template <>
struct Schema<RewardRecord> {
  static constexpr const char* kName = "reward";
  static ojson encode(const RewardRecord& r) {
    ojson o;
    o["prompt_id"] = r.prompt_id;
    o["critique_index"] = r.critique_index;
    o["cu"] = r.cu;
    o["valid_judgments"] = r.valid_judgments;
    o["log_z"] = r.log_z;
    o["target"] = r.target;
    return o;
  }
  static RewardRecord decode(const FieldReader& f) {
    f.only({"prompt_id", "critique_index", "cu", "valid_judgments", "log_z", "target"});
    return {f.str("prompt_id"), f.integer("critique_index"), f.number("cu"),
            f.integer("valid_judgments"), f.number("log_z"), f.number("target")};
  }
  static auto key(const RewardRecord& r) { return std::tie(r.prompt_id, r.critique_index); }
  static std::string describe(const RewardRecord& r) {
    return "(" + r.prompt_id + ", " + std::to_string(r.critique_index) + ")";
  }
};

template <>
struct Schema<DpcoPair> {
  static constexpr const char* kName = "dpco_pair";
  static ojson encode(const DpcoPair& r) {
    ojson o;
    o["prompt_id"] = r.prompt_id;
    o["chosen_index"] = r.chosen_index;
    o["rejected_index"] = r.rejected_index;
    return o;
  }
  static DpcoPair decode(const FieldReader& f) {
    f.only({"prompt_id", "chosen_index", "rejected_index"});
    return {f.str("prompt_id"), f.integer("chosen_index"), f.integer("rejected_index")};
  }
  static auto key(const DpcoPair& r) {
    return std::make_tuple(r.prompt_id, std::min(r.chosen_index, r.rejected_index));
  }
  static std::string describe(const DpcoPair& r) {
    return "(" + r.prompt_id + ", " + std::to_string(r.chosen_index) + " > " +
           std::to_string(r.rejected_index) + ")";
  }
};

template <class R>
void check_unique(const std::vector<R>& records) {
  // Keys may hold references into `records`, which outlives the set.
  using Key = decltype(Schema<R>::key(records.front()));
  std::set<Key> seen;
  for (const auto& r : records) {
    if (!seen.insert(Schema<R>::key(r)).second) {
      throw ValidationError(std::string("duplicate ") + Schema<R>::kName + " " +
                            Schema<R>::describe(r));
    }
  }
}

[[noreturn]] void invalid(const std::string& msg) { throw ValidationError(msg); }

}  // namespace

// ---------------------------------------------------------------------------
// single-record invariants

void validate(const PromptRecord& r) {
  if (r.id.empty()) invalid("prompt record has empty id");
  if (r.prompt.empty()) invalid("prompt record '" + r.id + "' has empty prompt");
  const bool choice_task = r.task == TaskKind::question_answering || r.task == TaskKind::math;
  if (r.choices && !choice_task)
    invalid("prompt record '" + r.id + "': choices are only allowed for QA and math");
  if ((r.table_title || r.table_content) && r.task != TaskKind::math)
    invalid("prompt record '" + r.id + "': table fields are only allowed for math");
  if (r.choices && (r.table_title || r.table_content))
    invalid("prompt record '" + r.id + "': choices and table fields are exclusive");
}

void validate(const ResponseRecord& r) {
  if (r.prompt_id.empty()) invalid("response record has empty prompt_id");
  if (r.turn < 0) invalid("response " + Schema<ResponseRecord>::describe(r) + ": negative turn");
}

void validate(const CritiqueRecord& r) {
  if (r.prompt_id.empty()) invalid("critique record has empty prompt_id");
  if (r.index < 1) invalid("critique " + Schema<CritiqueRecord>::describe(r) + ": index < 1");
}

void validate(const RefinementRecord& r) {
  if (r.prompt_id.empty()) invalid("refinement record has empty prompt_id");
  if (r.critique_index < 1 || r.refinement_index < 1)
    invalid("refinement " + Schema<RefinementRecord>::describe(r) + ": index < 1");
}

void validate(const JudgmentRecord& r) {
  if (r.prompt_id.empty()) invalid("judgment record has empty prompt_id");
  if (r.critique_index < 1 || r.refinement_index < 1)
    invalid("judgment " + Schema<JudgmentRecord>::describe(r) + ": index < 1");
  if (!is_preference_score(r.ps))
    invalid("judgment " + Schema<JudgmentRecord>::describe(r) + ": ps not in {0, 0.5, 1}");
  double expected = r.verdict == Verdict::C ? 0.5
                    : (r.verdict == Verdict::A) == (r.order == JudgeOrder::refined_first) ? 1.0
                                                                                          : 0.0;
  if (r.ps != expected)
    invalid("judgment " + Schema<JudgmentRecord>::describe(r) +
            ": ps inconsistent with verdict and order");
}

void validate(const RatingRecord& r) {
  if (r.prompt_id.empty()) invalid("rating record has empty prompt_id");
  if (r.rating < 1 || r.rating > 10)
    invalid("rating " + Schema<RatingRecord>::describe(r) + ": rating outside 1..10");
  const bool has_idx = r.critique_index.has_value() && r.refinement_index.has_value();
  if (r.subject == RatingSubject::refinement && !has_idx)
    invalid("rating " + Schema<RatingRecord>::describe(r) + ": refinement subject needs indices");
  if (r.subject == RatingSubject::initial && (r.critique_index || r.refinement_index))
    invalid("rating " + Schema<RatingRecord>::describe(r) + ": initial subject has indices");
}

void validate(const RewardRecord& r) {
  if (r.prompt_id.empty()) invalid("reward record has empty prompt_id");
  if (r.critique_index < 1) invalid("reward " + Schema<RewardRecord>::describe(r) + ": index < 1");
  if (!(r.cu >= 0.0 && r.cu <= 1.0))
    invalid("reward " + Schema<RewardRecord>::describe(r) + ": cu outside [0, 1]");
  if (r.valid_judgments < 1)
    invalid("reward " + Schema<RewardRecord>::describe(r) + ": no valid judgments");
}

void validate(const DpcoPair& r) {
  if (r.prompt_id.empty()) invalid("dpco pair has empty prompt_id");
  if (r.chosen_index == r.rejected_index)
    invalid("dpco pair " + Schema<DpcoPair>::describe(r) + ": chosen equals rejected");
  const int lo = std::min(r.chosen_index, r.rejected_index);
  const int hi = std::max(r.chosen_index, r.rejected_index);
  if (lo < 1 || hi != lo + 1 || lo % 2 != 1)
    invalid("dpco pair " + Schema<DpcoPair>::describe(r) + ": not a fixed (odd, even) grouping");
}

// ---------------------------------------------------------------------------
// file I/O

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

template <class R>
std::vector<R> parse_records(std::string_view text) {
  std::vector<R> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed ") + Schema<R>::kName + " record: " + e.what(),
                       line_no);
    }
    if (!obj.is_object()) throw ParseError("record is not an object", line_no);
    FieldReader f(obj, line_no);
    R rec = Schema<R>::decode(f);
    try {
      validate(rec);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(rec));
  }
  if (!out.empty()) check_unique(out);
  return out;
}

template <class R>
std::string serialize_records(std::vector<R> records) {
  for (const auto& r : records) validate(r);
  std::stable_sort(records.begin(), records.end(), [](const R& a, const R& b) {
    return Schema<R>::key(a) < Schema<R>::key(b);
  });
  if (!records.empty()) check_unique(records);
  std::string out;
  for (const auto& r : records) {
    out += Schema<R>::encode(r).dump(-1, ' ', false, ojson::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

template <class R>
std::vector<R> load_records(const std::filesystem::path& path) {
  return parse_records<R>(read_file(path));
}

template <class R>
void write_records(std::vector<R> records, const std::filesystem::path& path) {
  write_file(path, serialize_records(std::move(records)));
}

#define RCO_INSTANTIATE_RECORD(R)                                                   \
  template std::vector<R> parse_records<R>(std::string_view);                       \
  template std::string serialize_records<R>(std::vector<R>);                        \
  template std::vector<R> load_records<R>(const std::filesystem::path&);            \
  template void write_records<R>(std::vector<R>, const std::filesystem::path&);

RCO_INSTANTIATE_RECORD(PromptRecord)
RCO_INSTANTIATE_RECORD(ResponseRecord)
RCO_INSTANTIATE_RECORD(CritiqueRecord)
RCO_INSTANTIATE_RECORD(RefinementRecord)
RCO_INSTANTIATE_RECORD(JudgmentRecord)
RCO_INSTANTIATE_RECORD(RatingRecord)
RCO_INSTANTIATE_RECORD(RewardRecord)
RCO_INSTANTIATE_RECORD(DpcoPair)

#undef RCO_INSTANTIATE_RECORD

// ---------------------------------------------------------------------------
// cross-record references

std::vector<std::string> dangling_references(const RecordSet& set) {
  std::vector<std::string> problems;
  std::set<std::string> prompt_ids;
  for (const auto& p : set.prompts) prompt_ids.insert(p.id);
  const bool have_prompts = !set.prompts.empty();

  std::set<std::string> initial_ids;
  for (const auto& r : set.responses) {
    if (have_prompts && !prompt_ids.count(r.prompt_id))
      problems.push_back("response references unknown prompt '" + r.prompt_id + "'");
    if (r.turn == 0) initial_ids.insert(r.prompt_id);
  }
  std::set<std::pair<std::string, int>> critique_keys;
  for (const auto& c : set.critiques) {
    if (have_prompts && !prompt_ids.count(c.prompt_id))
      problems.push_back("critique references unknown prompt '" + c.prompt_id + "'");
    if (!set.responses.empty() && !initial_ids.count(c.prompt_id))
      problems.push_back("critique for '" + c.prompt_id + "' has no initial response");
    critique_keys.emplace(c.prompt_id, c.index);
  }
  std::set<std::tuple<std::string, int, int>> refinement_keys;
  for (const auto& r : set.refinements) {
    if (have_prompts && !prompt_ids.count(r.prompt_id))
      problems.push_back("refinement references unknown prompt '" + r.prompt_id + "'");
    if (!set.critiques.empty() && !critique_keys.count({r.prompt_id, r.critique_index}))
      problems.push_back("refinement " + Schema<RefinementRecord>::describe(r) +
                         " references unknown critique");
    refinement_keys.emplace(r.prompt_id, r.critique_index, r.refinement_index);
  }
  for (const auto& j : set.judgments) {
    if (have_prompts && !prompt_ids.count(j.prompt_id))
      problems.push_back("judgment references unknown prompt '" + j.prompt_id + "'");
    if (!set.critiques.empty() && !critique_keys.count({j.prompt_id, j.critique_index}))
      problems.push_back("judgment " + Schema<JudgmentRecord>::describe(j) +
                         " references unknown critique");
    if (!set.refinements.empty() &&
        !refinement_keys.count({j.prompt_id, j.critique_index, j.refinement_index}))
      problems.push_back("judgment " + Schema<JudgmentRecord>::describe(j) +
                         " references unknown refinement");
  }
  return problems;
}

void validate_references(const RecordSet& set) {
  auto problems = dangling_references(set);
  if (problems.empty()) return;
  std::string msg = "dangling references:";
  for (const auto& p : problems) msg += "\n  " + p;
  throw ValidationError(msg);
}

void validate_index_limits(std::span<const CritiqueRecord> critiques,
                           std::span<const RefinementRecord> refinements, int n_critiques,
                           int m_refinements) {
  for (const auto& c : critiques)
    if (c.index > n_critiques)
      invalid("critique " + Schema<CritiqueRecord>::describe(c) + ": index exceeds N = " +
              std::to_string(n_critiques));
  for (const auto& r : refinements) {
    if (r.critique_index > n_critiques)
      invalid("refinement " + Schema<RefinementRecord>::describe(r) +
              ": critique_index exceeds N = " + std::to_string(n_critiques));
    if (r.refinement_index > m_refinements)
      invalid("refinement " + Schema<RefinementRecord>::describe(r) +
              ": refinement_index exceeds M = " + std::to_string(m_refinements));
  }
}

}  // namespace rco
