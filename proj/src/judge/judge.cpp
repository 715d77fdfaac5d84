// SPDX-License-Identifier: Apache-2.0
#include "rco/judge.hpp"

#include <cctype>
#include <map>

#include "rco/error.hpp"

namespace rco {

namespace {

CompletionRequest judge_request(const JudgeContext& ctx, const RenderedPrompt& prompt) {
  CompletionRequest req;
  req.role = Role::judge;
  if (!prompt.system.empty()) req.messages.push_back({Speaker::system, prompt.system});
  req.messages.push_back({Speaker::user, prompt.user});
  req.temperature = ctx.temperature;
  req.max_tokens = ctx.max_tokens;
  return req;
}

void require(const JudgeContext& ctx) {
  if (!ctx.endpoint || !ctx.templates) throw ConfigError("judge context is incomplete");
}

Slots judge_slots(const PromptRecord& record) {
  Slots s = record_slots(record);
  s["prompt"] = question_text(record);
  return s;
}

std::optional<Verdict> reply_verdict(const CompletionResult& r) {
  if (!r.ok()) return std::nullopt;
  try {
    return parse_verdict(r.text);
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

}  // namespace

Verdict parse_verdict(std::string_view text) {
  std::optional<Verdict> last;
  for (std::size_t i = 0; i + 5 <= text.size(); ++i) {
    if (text[i] != '[' || text[i + 1] != '[' || text[i + 3] != ']' || text[i + 4] != ']') continue;
    const char c = text[i + 2];
    if (c == 'A') last = Verdict::A;
    else if (c == 'B') last = Verdict::B;
    else if (c == 'C') last = Verdict::C;
  }
  if (!last) throw ParseError("no [[A]]/[[B]]/[[C]] verdict in judge output");
  return *last;
}

int parse_rating(std::string_view text) {
  std::optional<long> last;
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    if (text[i] != '[' || text[i + 1] != '[') continue;
    std::size_t j = i + 2;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i + 2 || j - (i + 2) > 9) continue;
    if (j + 1 < text.size() && text[j] == ']' && text[j + 1] == ']')
      last = std::stol(std::string(text.substr(i + 2, j - (i + 2))));
  }
  if (!last) throw ParseError("no [[rating]] marker in judge output");
  if (*last < 1 || *last > 10)
    throw ParseError("rating " + std::to_string(*last) + " outside 1..10");
  return static_cast<int>(*last);
}

PreferenceScore verdict_to_ps(Verdict verdict, JudgeOrder order) {
  if (verdict == Verdict::C) return 0.5;
  const bool slot_a_is_refined = order == JudgeOrder::refined_first;
  return (verdict == Verdict::A) == slot_a_is_refined ? 1.0 : 0.0;
}

std::string question_text(const PromptRecord& record) {
  std::string q = record.prompt;
  if (record.choices) q += "\nAnswer choices: " + format_choices(*record.choices);
  if (record.table_title || record.table_content) {
    q += "\nTable: " + record.table_title.value_or("");
    if (record.table_content) q += "\n" + *record.table_content;
  }
  return q;
}

CompletionRequest pair_request(const JudgeContext& ctx, const PromptRecord& record,
                               std::string_view initial, std::string_view refinement,
                               JudgeOrder order) {
  require(ctx);
  Slots slots = judge_slots(record);
  slots["answer_0"] = std::string(refinement);
  slots["answer_1"] = std::string(initial);
  if (order == JudgeOrder::initial_first) slots = swap_candidates(std::move(slots));
  return judge_request(ctx, ctx.templates->render(
                                TemplateKey{TemplateStage::judge_pair, record.task}, slots));
}

JudgmentSlot interpret_pair_reply(const CompletionResult& result, JudgeOrder order) {
  JudgmentSlot slot;
  slot.order = order;
  slot.raw = result.text;
  if (!result.ok()) {
    slot.error = result.error->message;
    return slot;
  }
  try {
    slot.verdict = parse_verdict(result.text);
    slot.ps = verdict_to_ps(*slot.verdict, order);
  } catch (const ParseError& e) {
    slot.error = e.what();
  }
  return slot;
}

DebiasedJudgment judge_pair_debiased(const JudgeContext& ctx, const PromptRecord& record,
                                     std::string_view initial, std::string_view refinement) {
  const std::vector<CompletionRequest> reqs = {
      pair_request(ctx, record, initial, refinement, JudgeOrder::refined_first),
      pair_request(ctx, record, initial, refinement, JudgeOrder::initial_first)};
  auto results = batch_complete(*ctx.endpoint, reqs, std::min(2, std::max(1, ctx.parallelism)));
  return {interpret_pair_reply(results[0], JudgeOrder::refined_first),
          interpret_pair_reply(results[1], JudgeOrder::initial_first)};
}

std::vector<JudgmentRecord> judgment_records(const std::string& prompt_id, int critique_index,
                                             int refinement_index, const DebiasedJudgment& j) {
  std::vector<JudgmentRecord> out;
  for (const JudgmentSlot* s : {&j.forward, &j.reversed}) {
    if (!s->valid()) continue;
    out.push_back({prompt_id, critique_index, refinement_index, s->order, *s->verdict, *s->ps,
                   s->raw});
  }
  return out;
}

JudgeBatch judge_refinements(const JudgeContext& ctx, std::span<const PromptRecord> prompts,
                             std::span<const ResponseRecord> initials,
                             std::span<const RefinementRecord> refinements) {
  require(ctx);
  std::map<std::string, const PromptRecord*> by_id;
  for (const auto& p : prompts) by_id[p.id] = &p;
  std::map<std::string, const ResponseRecord*> initial_by_id;
  for (const auto& r : initials)
    if (r.turn == 0) initial_by_id.emplace(r.prompt_id, &r);

  JudgeBatch batch;
  struct Pending {
    const RefinementRecord* refinement;
    JudgeOrder order;
  };
  std::vector<Pending> pending;
  std::vector<CompletionRequest> requests;
  for (const auto& ref : refinements) {
    auto p = by_id.find(ref.prompt_id);
    auto i = initial_by_id.find(ref.prompt_id);
    if (p == by_id.end() || i == initial_by_id.end()) {
      batch.failures.push_back({ref.prompt_id, ref.critique_index, ref.refinement_index, "",
                                "missing prompt or initial response"});
      continue;
    }
    for (JudgeOrder order : {JudgeOrder::refined_first, JudgeOrder::initial_first}) {
      try {
        requests.push_back(pair_request(ctx, *p->second, i->second->text, ref.text, order));
        pending.push_back({&ref, order});
      } catch (const TemplateError& e) {
        batch.failures.push_back({ref.prompt_id, ref.critique_index, ref.refinement_index,
                                  std::string(to_string(order)), e.what()});
      }
    }
  }
  const auto results = batch_complete(*ctx.endpoint, requests, ctx.parallelism);
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& ref = *pending[k].refinement;
    JudgmentSlot slot = interpret_pair_reply(results[k], pending[k].order);
    if (slot.valid()) {
      batch.judgments.push_back({ref.prompt_id, ref.critique_index, ref.refinement_index,
                                 slot.order, *slot.verdict, *slot.ps, slot.raw});
    } else {
      batch.failures.push_back({ref.prompt_id, ref.critique_index, ref.refinement_index,
                                std::string(to_string(slot.order)), slot.error});
    }
  }
  return batch;
}

std::string_view to_string(PairStatus s) {
  switch (s) {
    case PairStatus::consistent: return "consistent";
    case PairStatus::inconsistent: return "inconsistent";
    case PairStatus::invalid: return "invalid";
  }
  return "invalid";
}

CritiquePairOutcome combine_critique_verdicts(std::optional<Verdict> forward,
                                              std::optional<Verdict> reversed) {
  CritiquePairOutcome out;
  if (!forward || !reversed) {
    out.status = PairStatus::invalid;
    return out;
  }
  // In the reversed order critique b sits in slot A.
  Verdict mapped = *reversed == Verdict::A   ? Verdict::B
                   : *reversed == Verdict::B ? Verdict::A
                                             : Verdict::C;
  if (mapped != *forward) {
    out.status = PairStatus::inconsistent;
    return out;
  }
  out.status = PairStatus::consistent;
  out.verdict = *forward;
  return out;
}

CritiquePairOutcome judge_critique_pair(const JudgeContext& ctx, const PromptRecord& record,
                                        std::string_view initial, std::string_view critique_a,
                                        std::string_view critique_b) {
  require(ctx);
  Slots slots = judge_slots(record);
  slots["answer"] = std::string(initial);
  slots["critique_0"] = std::string(critique_a);
  slots["critique_1"] = std::string(critique_b);
  const TemplateKey key{TemplateStage::critique_pref, record.task};
  const std::vector<CompletionRequest> reqs = {
      judge_request(ctx, ctx.templates->render(key, slots)),
      judge_request(ctx, ctx.templates->render(key, swap_candidates(slots)))};
  auto results = batch_complete(*ctx.endpoint, reqs, std::min(2, std::max(1, ctx.parallelism)));
  CritiquePairOutcome out = combine_critique_verdicts(reply_verdict(results[0]),
                                                      reply_verdict(results[1]));
  out.raw_forward = results[0].text;
  out.raw_reversed = results[1].text;
  for (const auto& r : results)
    if (!r.ok() && out.error.empty()) out.error = r.error->message;
  return out;
}

RatingOutcome score_response(const JudgeContext& ctx, const PromptRecord& record,
                             std::string_view response, RatingSubject subject,
                             std::optional<int> critique_index,
                             std::optional<int> refinement_index) {
  require(ctx);
  Slots slots = judge_slots(record);
  slots["answer"] = std::string(response);
  RatingOutcome out;
  CompletionRequest req;
  try {
    req = judge_request(ctx, ctx.templates->render(
                                 TemplateKey{TemplateStage::judge_score, record.task}, slots));
  } catch (const TemplateError& e) {
    out.error = e.what();
    return out;
  }
  const CompletionResult result = complete(*ctx.endpoint, req);
  out.raw = result.text;
  if (!result.ok()) {
    out.error = result.error->message;
    return out;
  }
  try {
    RatingRecord r;
    r.prompt_id = record.id;
    r.subject = subject;
    if (subject == RatingSubject::refinement) {
      r.critique_index = critique_index;
      r.refinement_index = refinement_index;
    }
    r.rating = parse_rating(result.text);
    r.raw = result.text;
    out.rating = std::move(r);
  } catch (const ParseError& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace rco
