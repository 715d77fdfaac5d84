// SPDX-License-Identifier: Apache-2.0
#include "rco/sampler.hpp"

#include <algorithm>

#include "rco/error.hpp"
#include "rco/hash.hpp"

namespace rco {

namespace {

void require(const SamplerContext& ctx, bool need_actor, bool need_critic) {
  if (!ctx.templates || (need_actor && !ctx.actor) || (need_critic && !ctx.critic))
    throw ConfigError("sampler context is incomplete");
}

CompletionRequest make_request(Role role, const RenderedPrompt& prompt, double temperature,
                               int max_tokens, std::uint64_t seed) {
  CompletionRequest req;
  req.role = role;
  if (!prompt.system.empty()) req.messages.push_back({Speaker::system, prompt.system});
  req.messages.push_back({Speaker::user, prompt.user});
  req.temperature = temperature;
  req.max_tokens = max_tokens;
  req.seed = seed;
  return req;
}

TemplateKey key_for(TemplateStage stage, const PromptRecord& record) {
  return {stage, record.task, select_variant(record), CriticStyle::generic};
}

std::map<std::string, const ResponseRecord*> initial_index(std::span<const ResponseRecord> initials) {
  std::map<std::string, const ResponseRecord*> out;
  for (const auto& r : initials)
    if (r.turn == 0) out.emplace(r.prompt_id, &r);
  return out;
}

// A batch of requests tagged with where each result goes.
template <typename Tag>
struct Batch {
  std::vector<CompletionRequest> requests;
  std::vector<Tag> tags;
};

std::string failure_text(const CompletionResult& r) {
  return r.error ? r.error->message : std::string("empty completion");
}

}  // namespace

std::uint64_t request_seed(std::uint64_t seed, std::string_view prompt_id, std::string_view stage,
                           int critique_index, int refinement_index) {
  std::uint64_t h = hash_combine(seed, prompt_id);
  h = hash_combine(h, stage);
  h = hash_combine(h, static_cast<std::uint64_t>(critique_index));
  return hash_combine(h, static_cast<std::uint64_t>(refinement_index));
}

std::string extract_refinement(std::string_view text) {
  static constexpr std::string_view kMarker = "My revised response:";
  auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  text.remove_prefix(b);
  if (text.substr(0, kMarker.size()) == kMarker) text.remove_prefix(kMarker.size());
  b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(b, e - b + 1));
}

RenderedPrompt initial_prompt(const TemplateLibrary& lib, const PromptRecord& record) {
  return lib.render(key_for(TemplateStage::initial, record), record_slots(record));
}

RenderedPrompt critique_prompt(const TemplateLibrary& lib, const PromptRecord& record,
                               std::string_view response, CriticStyle style) {
  Slots slots = record_slots(record);
  slots["response"] = std::string(response);
  TemplateKey key = key_for(TemplateStage::critique, record);
  if (style != CriticStyle::generic) {
    // Off-the-shelf critic formats take the bare question and answer.
    key.style = style;
    slots["answer"] = std::string(response);
  }
  return lib.render(key, slots);
}

RenderedPrompt refinement_prompt(const TemplateLibrary& lib, const PromptRecord& record,
                                 std::string_view response, std::string_view critique) {
  Slots slots = record_slots(record);
  slots["response"] = std::string(response);
  slots["critique"] = std::string(critique);
  return lib.render(key_for(TemplateStage::refinement, record), slots);
}

RenderedPrompt self_refinement_prompt(const TemplateLibrary& lib, const PromptRecord& record,
                                      std::string_view response) {
  Slots slots = record_slots(record);
  slots["response"] = std::string(response);
  return lib.render(key_for(TemplateStage::self_refinement, record), slots);
}

StageResult<ResponseRecord> generate_initial(const SamplerContext& ctx,
                                             std::span<const PromptRecord> records) {
  require(ctx, true, false);
  StageResult<ResponseRecord> out;
  Batch<const PromptRecord*> batch;
  for (const auto& rec : records) {
    try {
      batch.requests.push_back(make_request(Role::actor, initial_prompt(*ctx.templates, rec),
                                            ctx.actor_temperature, ctx.max_tokens,
                                            request_seed(ctx.seed, rec.id, "initial")));
      batch.tags.push_back(&rec);
    } catch (const TemplateError& e) {
      out.failures.push_back({rec.id, "initial", 0, 0, e.what()});
    }
  }
  const auto results = batch_complete(*ctx.actor, batch.requests, ctx.parallelism);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& rec = *batch.tags[i];
    if (!results[i].ok() || results[i].text.empty()) {
      out.failures.push_back({rec.id, "initial", 0, 0, failure_text(results[i])});
      continue;
    }
    out.records.push_back({rec.id, ctx.actor_id, 0, results[i].text});
  }
  return out;
}

StageResult<CritiqueRecord> generate_critiques(const SamplerContext& ctx,
                                               std::span<const PromptRecord> records,
                                               std::span<const ResponseRecord> initials, int n) {
  require(ctx, false, true);
  if (n < 1) throw ValidationError("n_critiques must be at least 1");
  const auto init = initial_index(initials);
  StageResult<CritiqueRecord> out;
  struct Tag {
    const PromptRecord* rec;
    int index;
  };
  Batch<Tag> batch;
  for (const auto& rec : records) {
    auto it = init.find(rec.id);
    if (it == init.end()) {
      out.failures.push_back({rec.id, "critique", 0, 0, "no initial response"});
      continue;
    }
    RenderedPrompt prompt;
    try {
      prompt = critique_prompt(*ctx.templates, rec, it->second->text, ctx.style);
    } catch (const TemplateError& e) {
      out.failures.push_back({rec.id, "critique", 0, 0, e.what()});
      continue;
    }
    for (int k = 1; k <= n; ++k) {
      batch.requests.push_back(make_request(Role::critic, prompt, ctx.critique_temperature,
                                            ctx.max_tokens,
                                            request_seed(ctx.seed, rec.id, "critique", k)));
      batch.tags.push_back({&rec, k});
    }
  }
  const auto results = batch_complete(*ctx.critic, batch.requests, ctx.parallelism);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& [rec, k] = batch.tags[i];
    if (!results[i].ok() || results[i].text.empty()) {
      out.failures.push_back({rec->id, "critique", k, 0, failure_text(results[i])});
      continue;
    }
    out.records.push_back({rec->id, ctx.critic_id, k, results[i].text});
  }
  return out;
}

StageResult<RefinementRecord> generate_refinements(const SamplerContext& ctx,
                                                   std::span<const PromptRecord> records,
                                                   std::span<const ResponseRecord> initials,
                                                   std::span<const CritiqueRecord> critiques, int m,
                                                   std::optional<double> temperature) {
  require(ctx, true, false);
  if (m < 1) throw ValidationError("m_refinements must be at least 1");
  const double temp = temperature.value_or(ctx.actor_temperature);
  std::map<std::string, const PromptRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  const auto init = initial_index(initials);

  StageResult<RefinementRecord> out;
  struct Tag {
    const CritiqueRecord* critique;
    int index;
  };
  Batch<Tag> batch;
  for (const auto& c : critiques) {
    auto rec = by_id.find(c.prompt_id);
    auto ini = init.find(c.prompt_id);
    if (rec == by_id.end() || ini == init.end()) {
      out.failures.push_back({c.prompt_id, "refine", c.index, 0, "missing prompt or initial response"});
      continue;
    }
    RenderedPrompt prompt;
    try {
      prompt = refinement_prompt(*ctx.templates, *rec->second, ini->second->text, c.text);
    } catch (const TemplateError& e) {
      out.failures.push_back({c.prompt_id, "refine", c.index, 0, e.what()});
      continue;
    }
    for (int j = 1; j <= m; ++j) {
      batch.requests.push_back(make_request(Role::actor, prompt, temp, ctx.max_tokens,
                                            request_seed(ctx.seed, c.prompt_id, "refine", c.index, j)));
      batch.tags.push_back({&c, j});
    }
  }
  const auto results = batch_complete(*ctx.actor, batch.requests, ctx.parallelism);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& [c, j] = batch.tags[i];
    std::string text = results[i].ok() ? extract_refinement(results[i].text) : std::string();
    if (text.empty()) {
      out.failures.push_back({c->prompt_id, "refine", c->index, j, failure_text(results[i])});
      continue;
    }
    out.records.push_back({c->prompt_id, c->index, j, std::move(text)});
  }
  return out;
}

StageResult<ResponseRecord> self_refine(const SamplerContext& ctx,
                                        std::span<const PromptRecord> records,
                                        std::span<const ResponseRecord> initials) {
  require(ctx, true, false);
  const auto init = initial_index(initials);
  StageResult<ResponseRecord> out;
  Batch<const PromptRecord*> batch;
  for (const auto& rec : records) {
    auto it = init.find(rec.id);
    if (it == init.end()) {
      out.failures.push_back({rec.id, "self-refine", 0, 0, "no initial response"});
      continue;
    }
    try {
      batch.requests.push_back(make_request(
          Role::actor, self_refinement_prompt(*ctx.templates, rec, it->second->text),
          ctx.actor_temperature, ctx.max_tokens, request_seed(ctx.seed, rec.id, "self-refine")));
      batch.tags.push_back(&rec);
    } catch (const TemplateError& e) {
      out.failures.push_back({rec.id, "self-refine", 0, 0, e.what()});
    }
  }
  const auto results = batch_complete(*ctx.actor, batch.requests, ctx.parallelism);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& rec = *batch.tags[i];
    std::string text = results[i].ok() ? extract_refinement(results[i].text) : std::string();
    if (text.empty()) {
      out.failures.push_back({rec.id, "self-refine", 0, 0, failure_text(results[i])});
      continue;
    }
    out.records.push_back({rec.id, ctx.actor_id, 1, std::move(text)});
  }
  return out;
}

StageResult<IterationTurn> iterate(const SamplerContext& ctx, const PromptRecord& record,
                                   const ResponseRecord& initial, int turns) {
  require(ctx, true, true);
  if (turns < 1) throw ValidationError("turns must be at least 1");
  StageResult<IterationTurn> out;
  std::string latest = initial.text;
  for (int t = 1; t <= turns; ++t) {
    auto fail = [&](std::string msg) { out.failures.push_back({record.id, "iterate", t, 0, std::move(msg)}); };
    CompletionResult crit;
    CompletionResult ref;
    try {
      crit = complete(*ctx.critic,
                      make_request(Role::critic, critique_prompt(*ctx.templates, record, latest, ctx.style),
                                   0.0, ctx.max_tokens, request_seed(ctx.seed, record.id, "iterate-critique", t)));
      if (!crit.ok() || crit.text.empty()) {
        fail(failure_text(crit));
        break;
      }
      ref = complete(*ctx.actor,
                     make_request(Role::actor, refinement_prompt(*ctx.templates, record, latest, crit.text),
                                  0.0, ctx.max_tokens, request_seed(ctx.seed, record.id, "iterate-refine", t)));
    } catch (const TemplateError& e) {
      fail(e.what());
      break;
    }
    std::string text = ref.ok() ? extract_refinement(ref.text) : std::string();
    if (text.empty()) {
      fail(failure_text(ref));
      break;
    }
    out.records.push_back({{record.id, ctx.critic_id, t, crit.text}, {record.id, ctx.actor_id, t, text}});
    latest = std::move(text);
  }
  return out;
}

bool SampleBundle::complete(int n, int m) const {
  if (static_cast<int>(critiques.size()) != n) return false;
  for (int k = 1; k <= n; ++k) {
    auto it = refinements.find(k);
    if (it == refinements.end() || static_cast<int>(it->second.size()) != m) return false;
  }
  return true;
}

BundleRun sample_bundles(const SamplerContext& ctx, std::span<const PromptRecord> records, int n,
                         int m) {
  BundleRun run;
  auto append = [&](auto& failures) {
    run.failures.insert(run.failures.end(), failures.begin(), failures.end());
  };
  auto initial = generate_initial(ctx, records);
  append(initial.failures);
  auto critiques = generate_critiques(ctx, records, initial.records, n);
  append(critiques.failures);
  auto refinements = generate_refinements(ctx, records, initial.records, critiques.records, m);
  append(refinements.failures);

  std::map<std::string, const PromptRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  std::map<std::string, SampleBundle> bundles;
  for (const auto& r : initial.records) bundles[r.prompt_id] = {*by_id.at(r.prompt_id), r, {}, {}};
  for (const auto& c : critiques.records) bundles.at(c.prompt_id).critiques.push_back(c);
  for (const auto& r : refinements.records)
    bundles.at(r.prompt_id).refinements[r.critique_index].push_back(r);
  for (auto& [id, b] : bundles) {
    std::sort(b.critiques.begin(), b.critiques.end(),
              [](const auto& x, const auto& y) { return x.index < y.index; });
    for (auto& [k, v] : b.refinements)
      std::sort(v.begin(), v.end(),
                [](const auto& x, const auto& y) { return x.refinement_index < y.refinement_index; });
    run.bundles.push_back(std::move(b));
  }
  return run;
}

}  // namespace rco
