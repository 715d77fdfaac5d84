// SPDX-License-Identifier: Apache-2.0
#include "rco/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "rco/config.hpp"
#include "rco/error.hpp"
#include "rco/evalharness.hpp"
#include "rco/gateway.hpp"
#include "rco/judge.hpp"
#include "rco/records.hpp"
#include "rco/reward.hpp"
#include "rco/sampler.hpp"
#include "rco/templates.hpp"
#include "rco/trainer.hpp"

namespace rco {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Common {
  std::string config_file;
  std::string out_dir;
  bool force = false;
  std::map<std::string, std::vector<std::string>> flags;
};

struct Failure {
  std::string prompt_id;
  std::string stage;
  int critique_index = 0;
  int refinement_index = 0;
  std::string order;
  std::string message;
};

struct Outcome {
  std::vector<std::pair<std::string, std::string>> outputs;  // file name, bytes
  std::vector<Failure> failures;
  std::vector<std::string> warnings;
  std::map<std::string, std::string> stats;
  int exit_code = kExitOk;
};

struct Plan {
  std::string stage;
  std::vector<fs::path> inputs;
  std::string options;
  std::map<std::string, std::string> endpoints;
};

std::string jsonl(const std::vector<Failure>& failures) {
  std::string out;
  for (const auto& f : failures) {
    ojson j;
    j["prompt_id"] = f.prompt_id;
    j["stage"] = f.stage;
    if (f.critique_index) j["critique_index"] = f.critique_index;
    if (f.refinement_index) j["refinement_index"] = f.refinement_index;
    if (!f.order.empty()) j["order"] = f.order;
    j["message"] = f.message;
    out += j.dump(-1, ' ', false, ojson::error_handler_t::replace) + "\n";
  }
  return out;
}

std::string jsonl(const std::vector<std::string>& warnings) {
  std::string out;
  for (const auto& w : warnings) out += ojson{{"warning", w}}.dump(-1, ' ', false, ojson::error_handler_t::replace) + "\n";
  return out;
}

template <typename F>
void append_failures(Outcome& o, const std::vector<F>& in) {
  for (const auto& f : in) o.failures.push_back({f.prompt_id, f.stage, f.critique_index, f.refinement_index, "", f.message});
}

void write_log(const fs::path& dir, const std::string& sub, const std::string& stage, const std::string& bytes,
               StageEntry& entry) {
  const fs::path path = dir / sub / (stage + ".jsonl");
  std::error_code ec;
  if (bytes.empty()) {
    fs::remove(path, ec);
    return;
  }
  write_file(path, bytes);
  entry.outputs.push_back(digest_file(path, dir));
}

int run_stage(const Common& c, const PipelineConfig& cfg, const Plan& plan, const std::function<Outcome()>& body,
              std::ostream& out, std::ostream& err) {
  if (c.out_dir.empty()) throw ConfigError("--out is required");
  for (const auto& in : plan.inputs)
    if (!fs::is_regular_file(in)) throw ValidationError("input '" + in.string() + "' not found");
  const fs::path dir = c.out_dir;
  std::unique_ptr<DirectoryLock> lock;
  try {
    lock = std::make_unique<DirectoryLock>(dir);
  } catch (const IoError& e) {
    err << "error: lock: " << e.what() << "\n";
    return kExitFailure;
  }

  StageEntry entry;
  entry.stage = plan.stage;
  entry.config_hash = config_hash(cfg);
  entry.options = plan.options;
  entry.seed = cfg.seed;
  entry.endpoints = plan.endpoints;
  for (const auto& in : plan.inputs) entry.inputs.push_back(digest_file(in, dir));

  RunManifest manifest = RunManifest::load(dir);
  if (const StageEntry* prev = manifest.find(plan.stage); prev && !c.force && up_to_date(*prev, entry, dir)) {
    out << plan.stage << ": up to date (use --force to rerun)\n";
    return kExitOk;
  }
  entry.started_at = timestamp_now();
  Outcome o = body();
  for (const auto& [name, bytes] : o.outputs) {
    write_file(dir / name, bytes);
    entry.outputs.push_back(digest_file(dir / name, dir));
    out << plan.stage << ": wrote " << (dir / name).string() << "\n";
  }
  write_log(dir, "failures", plan.stage, jsonl(o.failures), entry);
  write_log(dir, "warnings", plan.stage, jsonl(o.warnings), entry);
  entry.failures = static_cast<long>(o.failures.size());
  entry.stats = o.stats;
  entry.finished_at = timestamp_now();
  manifest.put(entry);
  manifest.save(dir);

  for (const auto& [k, v] : o.stats) out << plan.stage << ": " << k << " = " << v << "\n";
  for (const auto& w : o.warnings) err << "warning: " << w << "\n";
  if (!o.failures.empty()) {
    err << "error: endpoint: " << o.failures.size() << " failed request(s) in " << plan.stage << "; see "
        << (dir / "failures" / (plan.stage + ".jsonl")).string() << "\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(o.failures.size(), 5); ++i)
      err << "  " << o.failures[i].prompt_id << ": " << o.failures[i].message << "\n";
    return kExitEndpoint;
  }
  return o.exit_code;
}

RetryPolicy retry_from(const PipelineConfig& cfg) {
  RetryPolicy r;
  r.max_attempts = cfg.max_attempts;
  r.initial_backoff = std::chrono::milliseconds(cfg.retry_backoff_ms);
  return r;
}

Endpoint endpoint_for(Role role, const PipelineConfig& cfg) {
  const std::string& model = role == Role::actor    ? cfg.actor_model
                             : role == Role::critic ? cfg.critic_model
                                                    : cfg.judge_model;
  return endpoint_from_environment(role, model, retry_from(cfg), cfg.seed);
}

SamplerContext sampler_context(const PipelineConfig& cfg, const Endpoint* actor, const Endpoint* critic,
                               const TemplateLibrary& lib) {
  SamplerContext ctx;
  ctx.actor = actor;
  ctx.critic = critic;
  ctx.templates = &lib;
  ctx.style = cfg.critic_style;
  ctx.actor_temperature = cfg.refine_temperature;
  ctx.critique_temperature = cfg.critique_temperature;
  ctx.max_tokens = cfg.max_tokens;
  ctx.seed = cfg.seed;
  ctx.parallelism = cfg.parallelism;
  ctx.actor_id = cfg.actor_model;
  ctx.critic_id = cfg.critic_model;
  return ctx;
}

JudgeContext judge_context(const PipelineConfig& cfg, const Endpoint* judge, const TemplateLibrary& lib) {
  return {judge, &lib, cfg.judge_temperature, cfg.judge_max_tokens, cfg.parallelism};
}

template <typename R>
std::string bytes_of(std::vector<R> records) {
  return serialize_records(std::move(records));
}

std::string fmt(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

// ---- commands --------------------------------------------------------------

struct Paths {
  std::string prompts, responses, critiques, refinements, judgments, rewards, fixture, code_exec;
  bool greedy = false;
  double learning_rate = 0.5;
  int max_steps = 100000;
  double tolerance = 1e-10;
  int patience = 1000;
};

int cmd_collect(const Common& c, const PipelineConfig& cfg, const Paths& p, std::ostream& out, std::ostream& err) {
  const auto lib = TemplateLibrary::load(TemplateLibrary::default_dir());
  const Endpoint actor = endpoint_for(Role::actor, cfg);
  return run_stage(c, cfg, {"collect-responses", {p.prompts}, "", {{"actor", actor.id}}}, [&] {
    const auto prompts = load_records<PromptRecord>(p.prompts);
    auto res = generate_initial(sampler_context(cfg, &actor, nullptr, lib), prompts);
    Outcome o;
    o.stats["responses"] = std::to_string(res.records.size());
    o.outputs.emplace_back("responses.jsonl", bytes_of(std::move(res.records)));
    append_failures(o, res.failures);
    return o;
  }, out, err);
}

int cmd_critique(const Common& c, const PipelineConfig& cfg, const Paths& p, std::ostream& out, std::ostream& err) {
  const auto lib = TemplateLibrary::load(TemplateLibrary::default_dir());
  const Endpoint critic = endpoint_for(Role::critic, cfg);
  return run_stage(c, cfg, {"critique", {p.prompts, p.responses}, "", {{"critic", critic.id}}}, [&] {
    const auto prompts = load_records<PromptRecord>(p.prompts);
    const auto responses = load_records<ResponseRecord>(p.responses);
    validate_references({prompts, responses, {}, {}, {}});
    auto res = generate_critiques(sampler_context(cfg, nullptr, &critic, lib), prompts, responses,
                                  cfg.n_critiques);
    Outcome o;
    o.stats["critiques"] = std::to_string(res.records.size());
    o.outputs.emplace_back("critiques.jsonl", bytes_of(std::move(res.records)));
    append_failures(o, res.failures);
    return o;
  }, out, err);
}

int cmd_refine(const Common& c, const PipelineConfig& cfg, const Paths& p, std::ostream& out, std::ostream& err) {
  const auto lib = TemplateLibrary::load(TemplateLibrary::default_dir());
  const Endpoint actor = endpoint_for(Role::actor, cfg);
  return run_stage(c, cfg, {"refine", {p.prompts, p.responses, p.critiques}, p.greedy ? "greedy" : "",
                            {{"actor", actor.id}}},
                   [&] {
    const auto prompts = load_records<PromptRecord>(p.prompts);
    const auto responses = load_records<ResponseRecord>(p.responses);
    const auto critiques = load_records<CritiqueRecord>(p.critiques);
    validate_references({prompts, responses, critiques, {}, {}});
    validate_index_limits(critiques, {}, cfg.n_critiques, cfg.m_refinements);
    auto res = p.greedy ? generate_refinements(sampler_context(cfg, &actor, nullptr, lib), prompts, responses,
                                               critiques, 1, 0.0)
                        : generate_refinements(sampler_context(cfg, &actor, nullptr, lib), prompts, responses,
                                               critiques, cfg.m_refinements);
    Outcome o;
    o.stats["refinements"] = std::to_string(res.records.size());
    o.outputs.emplace_back("refinements.jsonl", bytes_of(std::move(res.records)));
    append_failures(o, res.failures);
    return o;
  }, out, err);
}

int cmd_self_refine(const Common& c, const PipelineConfig& cfg, const Paths& p, std::ostream& out,
                    std::ostream& err) {
  const auto lib = TemplateLibrary::load(TemplateLibrary::default_dir());
  const Endpoint actor = endpoint_for(Role::actor, cfg);
  return run_stage(c, cfg, {"self-refine", {p.prompts, p.responses}, "", {{"actor", actor.id}}}, [&] {
    const auto prompts = load_records<PromptRecord>(p.prompts);
    const auto responses = load_records<ResponseRecord>(p.responses);
    validate_references({prompts, responses, {}, {}, {}});
    auto res = self_refine(sampler_context(cfg, &actor, nullptr, lib), prompts, responses);
    Outcome o;
    o.stats["self_refinements"] = std::to_string(res.records.size());
    o.outputs.emplace_back("self_refinements.jsonl", bytes_of(std::move(res.records)));
    append_failures(o, res.failures);
    return o;
  }, out, err);
}

int cmd_judge(const Common& c, const PipelineConfig& cfg, const Paths& p, std::ostream& out, std::ostream& err) {
  const auto lib = TemplateLibrary::load(TemplateLibrary::default_dir());
  const Endpoint judge = endpoint_for(Role::judge, cfg);
  return run_stage(c, cfg, {"judge", {p.prompts, p.responses, p.refinements}, "", {{"judge", judge.id}}}, [&] {
    const auto prompts = load_records<PromptRecord>(p.prompts);
    const auto responses = load_records<ResponseRecord>(p.responses);
    const auto refinements = load_records<RefinementRecord>(p.refinements);
    validate_references({prompts, responses, {}, refinements, {}});
    validate_index_limits({}, refinements, cfg.n_critiques, cfg.m_refinements);
    auto batch = judge_refinements(judge_context(cfg, &judge, lib), prompts, responses, refinements);
    Outcome o;
    o.stats["judgments"] = std::to_string(batch.judgments.size());
    o.outputs.emplace_back("judgments.jsonl", bytes_of(std::move(batch.judgments)));
    for (const auto& f : batch.failures)
      o.failures.push_back({f.prompt_id, "judge", f.critique_index, f.refinement_index, f.order, f.message});
    return o;
  }, out, err);
}

int cmd_reward(const Common& c, const PipelineConfig& cfg, const Paths& p, std::ostream& out, std::ostream& err) {
  std::map<std::string, std::string> endpoints;
  // Carry the judge endpoint id over from the judgments' own manifest.
  const fs::path jdir = fs::path(p.judgments).parent_path();
  const RunManifest upstream = RunManifest::load(jdir.empty() ? fs::path(".") : jdir);
  if (const auto* prev = upstream.find("judge"))
    if (auto it = prev->endpoints.find("judge"); it != prev->endpoints.end()) endpoints["judge"] = it->second;
  return run_stage(c, cfg, {"reward", {p.judgments}, "", endpoints}, [&] {
    const auto judgments = load_records<JudgmentRecord>(p.judgments);
    RewardOptions opt{cfg.n_critiques, cfg.m_refinements, cfg.beta, cfg.effective_min_valid_judgments()};
    auto batch = build_rewards(judgments, opt);
    Outcome o;
    o.stats["n_critiques"] = std::to_string(cfg.n_critiques);
    o.stats["m_refinements"] = std::to_string(cfg.m_refinements);
    o.stats["beta"] = fmt(cfg.beta);
    o.stats["rewards"] = std::to_string(batch.rewards.size());
    o.stats["excluded_groups"] = std::to_string(batch.excluded.size());
    for (const auto& e : batch.excluded) o.warnings.push_back("prompt '" + e.prompt_id + "' excluded: " + e.reason);
    o.outputs.emplace_back("rewards.jsonl", bytes_of(std::move(batch.rewards)));
    return o;
  }, out, err);
}

int cmd_dpco(const Common& c, const PipelineConfig& cfg, const Paths& p, std::ostream& out, std::ostream& err) {
  if (cfg.n_critiques % 2 != 0) throw ConfigError("dpco-pairs needs an even n_critiques");
  const auto lib = TemplateLibrary::load(TemplateLibrary::default_dir());
  const Endpoint judge = endpoint_for(Role::judge, cfg);
  return run_stage(c, cfg, {"dpco-pairs", {p.prompts, p.responses, p.critiques}, "", {{"judge", judge.id}}}, [&] {
    const auto prompts = load_records<PromptRecord>(p.prompts);
    const auto responses = load_records<ResponseRecord>(p.responses);
    const auto critiques = load_records<CritiqueRecord>(p.critiques);
    validate_references({prompts, responses, critiques, {}, {}});
    validate_index_limits(critiques, {}, cfg.n_critiques, cfg.m_refinements);

    std::map<std::string, const ResponseRecord*> initial;
    for (const auto& r : responses)
      if (r.turn == 0) initial.emplace(r.prompt_id, &r);
    std::map<std::string, std::map<int, const CritiqueRecord*>> by_prompt;
    for (const auto& cr : critiques) by_prompt[cr.prompt_id][cr.index] = &cr;

    Outcome o;
    struct Job {
      const PromptRecord* record;
      int group;
    };
    std::vector<Job> jobs;
    for (const auto& rec : prompts) {
      auto it = by_prompt.find(rec.id);
      if (it == by_prompt.end() || static_cast<int>(it->second.size()) != cfg.n_critiques) {
        o.warnings.push_back("prompt '" + rec.id + "' does not have " + std::to_string(cfg.n_critiques) +
                             " critiques, skipped");
        continue;
      }
      for (int g = 0; g < cfg.n_critiques / 2; ++g) jobs.push_back({&rec, g});
    }
    std::vector<CritiquePairOutcome> outcomes(jobs.size());
    JudgeContext ctx = judge_context(cfg, &judge, lib);
    ctx.parallelism = 1;
    parallel_for(jobs.size(), cfg.parallelism, [&](std::size_t i) {
      const auto& [rec, g] = jobs[i];
      const auto& cs = by_prompt.at(rec->id);
      outcomes[i] = judge_critique_pair(ctx, *rec, initial.at(rec->id)->text, cs.at(2 * g + 1)->text,
                                        cs.at(2 * g + 2)->text);
    });

    std::map<std::string, std::vector<std::optional<Verdict>>> verdicts;
    std::map<std::string, long> counts{{"consistent", 0}, {"inconsistent", 0}, {"invalid", 0}, {"ties", 0}};
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto& oc = outcomes[i];
      const std::string& id = jobs[i].record->id;
      ++counts[std::string(to_string(oc.status))];
      if (oc.verdict == Verdict::C) ++counts["ties"];
      if (!oc.error.empty())
        o.failures.push_back({id, "dpco-pairs", 2 * jobs[i].group + 1, 0, "", oc.error});
      verdicts[id].push_back(oc.status == PairStatus::consistent ? oc.verdict : std::nullopt);
    }
    std::vector<DpcoPair> pairs;
    for (const auto& [id, v] : verdicts) {
      auto ps = dpco_pairs(id, static_cast<std::size_t>(cfg.n_critiques), v);
      pairs.insert(pairs.end(), ps.begin(), ps.end());
    }
    for (const auto& [k, v] : counts) o.stats[k] = std::to_string(v);
    o.stats["pairs"] = std::to_string(pairs.size());
    o.outputs.emplace_back("dpco_pairs.jsonl", bytes_of(std::move(pairs)));
    return o;
  }, out, err);
}

ojson fit_json(const std::string& id, const ToyInstance& inst, const FitResult& r) {
  ojson j;
  j["id"] = id;
  j["status"] = std::string(to_string(r.report.status));
  j["steps"] = r.report.steps;
  j["initial_loss"] = r.report.initial_loss;
  j["final_loss"] = r.report.final_loss;
  j["grad_norm"] = r.report.grad_norm;
  if (r.report.kl_to_closed_form) j["kl_to_closed_form"] = *r.report.kl_to_closed_form;
  if (r.report.subset_max_log_error) j["subset_max_log_error"] = *r.report.subset_max_log_error;
  j["fitted"] = r.policy.probabilities();
  j["closed_form"] = inst.sampled_indices ? subset_closed_form(inst) : closed_form_policy(inst);
  return j;
}

int cmd_train(const Common& c, const PipelineConfig& cfg, const Paths& p, std::ostream& out, std::ostream& err) {
  if (p.fixture.empty() == p.rewards.empty()) throw ConfigError("train-toy needs exactly one of --fixture or --rewards");
  const std::string input = p.fixture.empty() ? p.rewards : p.fixture;
  const std::string options = "lr=" + fmt(p.learning_rate) + " max_steps=" + std::to_string(p.max_steps) +
                              " tol=" + fmt(p.tolerance) + " patience=" + std::to_string(p.patience);
  return run_stage(c, cfg, {"train-toy", {input}, options, {}}, [&] {
    std::vector<std::pair<std::string, ToyInstance>> instances;
    if (!p.fixture.empty()) {
      instances.emplace_back(fs::path(p.fixture).stem().string(), parse_toy_instance(read_file(p.fixture)));
    } else {
      instances = instances_from_rewards(load_records<RewardRecord>(p.rewards), cfg.beta);
    }
    const FitOptions opt{p.learning_rate, p.max_steps, p.tolerance, p.patience};
    Outcome o;
    std::string lines;
    std::string table = "instance                 status        steps      final_loss   grad_norm    oracle_gap\n";
    long converged = 0;
    for (const auto& [id, inst] : instances) {
      const auto init = CategoricalPolicy::from_probabilities(inst.reference.probabilities);
      const FitResult r = fit(inst, init, opt);
      if (r.report.status == FitStatus::converged) ++converged;
      lines += fit_json(id, inst, r).dump() + "\n";
      const double gap = r.report.kl_to_closed_form.value_or(r.report.subset_max_log_error.value_or(0.0));
      char row[256];
      std::snprintf(row, sizeof row, "%-24s %-12s %6d %15.6e %11.3e %13.3e\n", id.c_str(),
                    std::string(to_string(r.report.status)).c_str(), r.report.steps, r.report.final_loss,
                    r.report.grad_norm, gap);
      table += row;
    }
    out << table;
    o.stats["instances"] = std::to_string(instances.size());
    o.stats["converged"] = std::to_string(converged);
    o.outputs.emplace_back("train_report.jsonl", lines);
    o.outputs.emplace_back("train_report.txt", table);
    if (converged != static_cast<long>(instances.size())) {
      o.warnings.push_back(std::to_string(instances.size() - converged) + " instance(s) did not converge");
      o.exit_code = kExitFailure;
    }
    return o;
  }, out, err);
}

int cmd_eval(const Common& c, const PipelineConfig& cfg, const Paths& p, std::ostream& out, std::ostream& err) {
  const auto lib = TemplateLibrary::load(TemplateLibrary::default_dir());
  const Endpoint actor = endpoint_for(Role::actor, cfg);
  const Endpoint judge = endpoint_for(Role::judge, cfg);
  return run_stage(c, cfg, {"eval", {p.prompts, p.responses, p.critiques}, "code_exec=" + p.code_exec,
                            {{"actor", actor.id}, {"judge", judge.id}}},
                   [&] {
    const auto prompts = load_records<PromptRecord>(p.prompts);
    const auto responses = load_records<ResponseRecord>(p.responses);
    const auto critiques = load_records<CritiqueRecord>(p.critiques);
    validate_references({prompts, responses, critiques, {}, {}});
    Outcome o;

    // One greedy refinement per critique.
    auto refined = generate_refinements(sampler_context(cfg, &actor, nullptr, lib), prompts, responses,
                                        critiques, 1, 0.0);
    append_failures(o, refined.failures);
    const JudgeContext jctx = judge_context(cfg, &judge, lib);
    auto judged = judge_refinements(jctx, prompts, responses, refined.records);
    for (const auto& f : judged.failures)
      o.failures.push_back({f.prompt_id, "eval-judge", f.critique_index, f.refinement_index, f.order, f.message});

    std::map<std::string, const PromptRecord*> by_id;
    for (const auto& r : prompts) by_id.emplace(r.id, &r);
    std::vector<RatingOutcome> rated(refined.records.size());
    JudgeContext single = jctx;
    single.parallelism = 1;
    parallel_for(rated.size(), cfg.parallelism, [&](std::size_t i) {
      const auto& r = refined.records[i];
      rated[i] = score_response(single, *by_id.at(r.prompt_id), r.text, RatingSubject::refinement,
                                r.critique_index, r.refinement_index);
    });
    std::vector<RatingRecord> ratings;
    for (std::size_t i = 0; i < rated.size(); ++i) {
      if (rated[i].rating) ratings.push_back(*rated[i].rating);
      else
        o.warnings.push_back("rating for prompt '" + refined.records[i].prompt_id + "' critique " +
                             std::to_string(refined.records[i].critique_index) + " excluded: " + rated[i].error);
    }

    const auto cu = aggregate_cu(judged.judgments, prompts);
    const auto rqs = aggregate_rqs(ratings, prompts);
    const auto acc = consistency_accuracy(refined.records, prompts, jctx,
                                          p.code_exec.empty() ? CodeExecutor() : make_command_executor(p.code_exec));
    for (const auto* w : {&cu.warnings, &rqs.warnings, &acc.warnings})
      o.warnings.insert(o.warnings.end(), w->begin(), w->end());
    const MetricReport report = build_report(cu.per_task, rqs.per_task, acc.per_task);
    out << format_report(report);

    o.stats["refinements"] = std::to_string(refined.records.size());
    o.stats["judgments"] = std::to_string(judged.judgments.size());
    o.stats["ratings"] = std::to_string(ratings.size());
    o.outputs.emplace_back("eval_refinements.jsonl", bytes_of(std::move(refined.records)));
    o.outputs.emplace_back("eval_judgments.jsonl", bytes_of(std::move(judged.judgments)));
    o.outputs.emplace_back("eval_ratings.jsonl", bytes_of(std::move(ratings)));
    o.outputs.emplace_back("report.txt", format_report(report));
    o.outputs.emplace_back("report.jsonl", report_jsonl(report));
    return o;
  }, out, err);
}

int cmd_iterate(const Common& c, const PipelineConfig& cfg, const Paths& p, std::ostream& out, std::ostream& err) {
  const auto lib = TemplateLibrary::load(TemplateLibrary::default_dir());
  const Endpoint actor = endpoint_for(Role::actor, cfg);
  const Endpoint critic = endpoint_for(Role::critic, cfg);
  return run_stage(c, cfg, {"iterate", {p.prompts, p.responses}, "", {{"actor", actor.id}, {"critic", critic.id}}},
                   [&] {
    const auto prompts = load_records<PromptRecord>(p.prompts);
    const auto responses = load_records<ResponseRecord>(p.responses);
    validate_references({prompts, responses, {}, {}, {}});
    std::map<std::string, const ResponseRecord*> initial;
    for (const auto& r : responses)
      if (r.turn == 0) initial.emplace(r.prompt_id, &r);

    Outcome o;
    std::vector<const PromptRecord*> todo;
    for (const auto& rec : prompts) {
      if (initial.count(rec.id)) todo.push_back(&rec);
      else o.failures.push_back({rec.id, "iterate", 0, 0, "", "no initial response"});
    }
    std::vector<StageResult<IterationTurn>> results(todo.size());
    SamplerContext ctx = sampler_context(cfg, &actor, &critic, lib);
    ctx.parallelism = 1;
    parallel_for(todo.size(), cfg.parallelism, [&](std::size_t i) {
      results[i] = iterate(ctx, *todo[i], *initial.at(todo[i]->id), cfg.turns);
    });
    std::vector<CritiqueRecord> crit;
    std::vector<ResponseRecord> resp;
    for (auto& r : results) {
      for (auto& t : r.records) {
        crit.push_back(std::move(t.critique));
        resp.push_back(std::move(t.response));
      }
      append_failures(o, r.failures);
    }
    o.stats["turns"] = std::to_string(cfg.turns);
    o.stats["responses"] = std::to_string(resp.size());
    o.outputs.emplace_back("iterate_critiques.jsonl", bytes_of(std::move(crit)));
    o.outputs.emplace_back("iterate_responses.jsonl", bytes_of(std::move(resp)));
    return o;
  }, out, err);
}

// ---- argument parsing -------------------------------------------------------

void add_common(CLI::App* sub, Common& c, bool with_out) {
  sub->add_option("--config", c.config_file, "flat key = value configuration file");
  if (with_out) {
    sub->add_option("-o,--out", c.out_dir, "output directory")->required();
    sub->add_flag("--force", c.force, "rerun even when outputs are up to date");
  }
  for (const auto& key : config_keys()) {
    std::string names = "--" + key;
    if (key.find('_') != std::string::npos) {
      std::string dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      names += ",--" + dashed;
    }
    if (key == "n_critiques") names = "-N," + names;
    if (key == "m_refinements") names = "-M," + names;
    sub->add_option(names, c.flags[key], "configuration key '" + key + "'")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->group("Configuration");
  }
}

PipelineConfig load_config(const Common& c) {
  const fs::path file(c.config_file);
  PipelineConfig cfg = resolve_config(c.config_file.empty() ? nullptr : &file, c.flags);
  const auto problems = validate_config(cfg);
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return cfg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Critique data pipeline: sampling, judging, reward targets and toy training"};
  app.name("rco");
  app.require_subcommand(1);
  Common common;
  Paths paths;

  struct Spec {
    const char* name;
    const char* help;
    std::vector<std::pair<const char*, std::string*>> inputs;
    std::function<int(const Common&, const PipelineConfig&, const Paths&, std::ostream&, std::ostream&)> run;
  };
  std::vector<Spec> specs = {
      {"collect-responses", "generate one initial response per prompt", {{"--prompts", &paths.prompts}}, cmd_collect},
      {"critique", "generate N critiques per initial response",
       {{"--prompts", &paths.prompts}, {"--responses", &paths.responses}}, cmd_critique},
      {"refine", "generate M refinements per critique",
       {{"--prompts", &paths.prompts}, {"--responses", &paths.responses}, {"--critiques", &paths.critiques}},
       cmd_refine},
      {"self-refine", "refine initial responses without a critique",
       {{"--prompts", &paths.prompts}, {"--responses", &paths.responses}}, cmd_self_refine},
      {"judge", "judge every refinement against its initial response in both orders",
       {{"--prompts", &paths.prompts}, {"--responses", &paths.responses}, {"--refinements", &paths.refinements}},
       cmd_judge},
      {"reward", "compute critique utility, log Z and regression targets", {{"--judgments", &paths.judgments}},
       cmd_reward},
      {"dpco-pairs", "judge critique pairs (1,2), (3,4) and emit preference pairs",
       {{"--prompts", &paths.prompts}, {"--responses", &paths.responses}, {"--critiques", &paths.critiques}},
       cmd_dpco},
      {"train-toy", "fit a categorical critic to the regression targets", {}, cmd_train},
      {"eval", "greedy refinement per critique, then CU, RQS and accuracy",
       {{"--prompts", &paths.prompts}, {"--responses", &paths.responses}, {"--critiques", &paths.critiques}},
       cmd_eval},
      {"iterate", "multi-turn greedy critique and refinement",
       {{"--prompts", &paths.prompts}, {"--responses", &paths.responses}}, cmd_iterate},
  };

  std::vector<CLI::App*> subs;
  for (auto& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, common, true);
    for (auto& [flag, target] : s.inputs) sub->add_option(flag, *target, "input record file")->required();
    subs.push_back(sub);
  }
  CLI::App* refine = subs[2];
  refine->add_flag("--greedy", paths.greedy, "one refinement per critique at temperature 0");
  CLI::App* train = subs[7];
  train->add_option("--fixture", paths.fixture, "toy instance file (reference, cus, beta, sampled)");
  train->add_option("--rewards", paths.rewards, "reward record file");
  train->add_option("--learning-rate", paths.learning_rate, "gradient descent step")->capture_default_str();
  train->add_option("--max-steps", paths.max_steps, "step limit")->capture_default_str();
  train->add_option("--tolerance", paths.tolerance, "gradient norm threshold")->capture_default_str();
  train->add_option("--patience", paths.patience, "steps above the best loss before giving up")
      ->capture_default_str();
  CLI::App* eval = subs[8];
  eval->add_option("--code-exec", paths.code_exec, "command run as `CMD <test_suite>` with code on stdin");

  CLI::App* explain = app.add_subcommand("explain-config", "print the resolved configuration and its hash");
  add_common(explain, common, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const PipelineConfig cfg = load_config(common);
    if (explain->parsed()) {
      out << dump_config(cfg) << "config_hash = " << config_hash(cfg) << "\n";
      return kExitOk;
    }
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return specs[i].run(common, cfg, paths, out, err);
    err << "error: usage: no command\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "error: data: " << e.what() << "\n";
    return kExitData;
  } catch (const ValidationError& e) {
    err << "error: data: " << e.what() << "\n";
    return kExitData;
  } catch (const TemplateError& e) {
    err << "error: data: " << e.what() << "\n";
    return kExitData;
  } catch (const DomainError& e) {
    err << "error: data: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace rco
