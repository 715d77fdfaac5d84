// SPDX-License-Identifier: Apache-2.0
#include "rco/evalharness.hpp"

#include <pthread.h>
#include <sys/wait.h>

#include <csignal>
#include <ctime>

#include <cstdio>
#include <iomanip>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "rco/error.hpp"
#include "rco/records.hpp"
#include "rco/templates.hpp"

namespace rco {

namespace {

std::map<std::string, const PromptRecord*> by_id(std::span<const PromptRecord> prompts) {
  std::map<std::string, const PromptRecord*> out;
  for (const auto& p : prompts) out.emplace(p.id, &p);
  return out;
}

std::string shell_quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string fixed(std::optional<double> v, int precision) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << *v;
  return os.str();
}

}  // namespace

AggregateResult aggregate_cu(std::span<const JudgmentRecord> judgments,
                             std::span<const PromptRecord> prompts) {
  const auto ids = by_id(prompts);
  std::map<std::tuple<std::string, int, int>, MeanAccumulator> pairs;
  AggregateResult out;
  for (const auto& j : judgments) {
    if (!is_preference_score(j.ps))
      throw ValidationError("judgment for " + j.prompt_id + " has ps outside {0, 0.5, 1}");
    pairs[{j.prompt_id, j.critique_index, j.refinement_index}].add(j.ps);
  }
  for (const auto& [key, acc] : pairs) {
    const auto& [pid, c, r] = key;
    auto it = ids.find(pid);
    if (it == ids.end()) {
      out.warnings.push_back("judgments for unknown prompt '" + pid + "' skipped");
      continue;
    }
    if (acc.count == 1)
      out.warnings.push_back("prompt '" + pid + "' critique " + std::to_string(c) + " refinement " +
                             std::to_string(r) + " has a single valid order");
    out.per_task[it->second->task].add(*acc.mean());
  }
  return out;
}

AggregateResult aggregate_rqs(std::span<const RatingRecord> ratings,
                              std::span<const PromptRecord> prompts) {
  const auto ids = by_id(prompts);
  AggregateResult out;
  for (const auto& r : ratings) {
    auto it = ids.find(r.prompt_id);
    if (it == ids.end()) {
      out.warnings.push_back("rating for unknown prompt '" + r.prompt_id + "' skipped");
      continue;
    }
    if (r.rating < 1 || r.rating > 10) throw ValidationError("rating outside 1..10 for " + r.prompt_id);
    out.per_task[it->second->task].add(r.rating);
  }
  return out;
}

CodeExecutor make_command_executor(std::string command) {
  return [command = std::move(command)](std::string_view code, std::string_view suite) {
    const std::string cmd = shell_quote(command) + " " + shell_quote(suite) + " >/dev/null 2>&1";
    // A checker that exits without reading stdin must not kill us with SIGPIPE.
    sigset_t pipe_set, old_set;
    sigemptyset(&pipe_set);
    sigaddset(&pipe_set, SIGPIPE);
    pthread_sigmask(SIG_BLOCK, &pipe_set, &old_set);
    FILE* pipe = ::popen(cmd.c_str(), "w");
    if (!pipe) {
      pthread_sigmask(SIG_SETMASK, &old_set, nullptr);
      throw IoError("cannot start code executor '" + command + "'");
    }
    std::fwrite(code.data(), 1, code.size(), pipe);
    const int status = ::pclose(pipe);
    const timespec zero{0, 0};
    while (sigtimedwait(&pipe_set, nullptr, &zero) > 0) {
    }
    pthread_sigmask(SIG_SETMASK, &old_set, nullptr);
    return status != -1 && WIFEXITED(status) && WEXITSTATUS(status) == 0;
  };
}

bool parse_consistency(std::string_view text) {
  const auto yes = text.rfind("[[CONSISTENT]]");
  const auto no = text.rfind("[[INCONSISTENT]]");
  if (yes == std::string_view::npos && no == std::string_view::npos)
    throw ParseError("no [[CONSISTENT]]/[[INCONSISTENT]] marker in judge output");
  if (no == std::string_view::npos) return true;
  if (yes == std::string_view::npos) return false;
  return yes > no;
}

std::optional<double> AccuracyResult::accuracy() const {
  MeanAccumulator all;
  for (const auto& [task, acc] : per_task) {
    all.sum += acc.sum;
    all.count += acc.count;
  }
  return all.mean();
}

AccuracyResult consistency_accuracy(std::span<const RefinementRecord> refinements,
                                    std::span<const PromptRecord> prompts, const JudgeContext& judge,
                                    const CodeExecutor& executor) {
  const auto ids = by_id(prompts);
  AccuracyResult out;

  struct Pending {
    const RefinementRecord* refinement;
    TaskKind task;
  };
  std::vector<Pending> pending;
  std::vector<CompletionRequest> requests;
  auto label = [](const RefinementRecord& r) {
    return "prompt '" + r.prompt_id + "' critique " + std::to_string(r.critique_index) + " refinement " +
           std::to_string(r.refinement_index);
  };

  for (const auto& ref : refinements) {
    auto it = ids.find(ref.prompt_id);
    if (it == ids.end()) {
      out.warnings.push_back(label(ref) + ": unknown prompt, skipped");
      continue;
    }
    const PromptRecord& rec = *it->second;
    if (rec.task == TaskKind::code) {
      if (!executor) {
        out.warnings.push_back(label(ref) + ": no code executor, skipped");
        continue;
      }
      auto suite = rec.extra.find("test_suite");
      out.per_task[TaskKind::code].add(executor(ref.text, suite != rec.extra.end() ? suite->second : rec.id));
      continue;
    }
    if (rec.task != TaskKind::question_answering && rec.task != TaskKind::math) continue;
    if (!rec.reference_answer) {
      out.warnings.push_back(label(ref) + ": no gold answer, skipped");
      continue;
    }
    if (!judge.endpoint || !judge.templates) throw ConfigError("accuracy check needs a judge endpoint");
    Slots slots = record_slots(rec);
    slots["prompt"] = question_text(rec);
    slots["answer"] = ref.text;
    const RenderedPrompt p = judge.templates->render("answer_check/default", slots);
    CompletionRequest req;
    req.role = Role::judge;
    if (!p.system.empty()) req.messages.push_back({Speaker::system, p.system});
    req.messages.push_back({Speaker::user, p.user});
    req.temperature = judge.temperature;
    req.max_tokens = judge.max_tokens;
    requests.push_back(std::move(req));
    pending.push_back({&ref, rec.task});
  }

  const auto results = batch_complete(*judge.endpoint, requests, judge.parallelism);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.ok()) {
      out.warnings.push_back(label(*pending[i].refinement) + ": " + r.error->message);
      continue;
    }
    try {
      out.per_task[pending[i].task].add(parse_consistency(r.text) ? 1.0 : 0.0);
    } catch (const ParseError& e) {
      out.warnings.push_back(label(*pending[i].refinement) + ": " + e.what());
    }
  }
  return out;
}

MetricReport build_report(const TaskMeans& cu, const TaskMeans& rqs, const TaskMeans& accuracy) {
  MetricReport report;
  MeanAccumulator all_cu, all_rqs, all_acc;
  auto fold = [](MeanAccumulator& into, const TaskMeans& m, TaskKind t, std::optional<double>& mean,
                 long& count, double scale) {
    auto it = m.find(t);
    if (it == m.end() || it->second.count == 0) return;
    mean = *it->second.mean() * scale;
    count = it->second.count;
    into.sum += it->second.sum;
    into.count += it->second.count;
  };
  for (TaskKind t : kAllTasks) {
    if (!cu.count(t) && !rqs.count(t) && !accuracy.count(t)) continue;
    MetricRow row;
    row.task = std::string(to_string(t));
    fold(all_cu, cu, t, row.mean_cu_x100, row.cu_count, 100.0);
    fold(all_rqs, rqs, t, row.mean_rqs, row.rqs_count, 1.0);
    fold(all_acc, accuracy, t, row.accuracy, row.accuracy_count, 1.0);
    report.rows.push_back(std::move(row));
  }
  MetricRow overall;
  overall.task = "Overall";
  if (auto m = all_cu.mean()) overall.mean_cu_x100 = *m * 100.0;
  overall.cu_count = all_cu.count;
  overall.mean_rqs = all_rqs.mean();
  overall.rqs_count = all_rqs.count;
  overall.accuracy = all_acc.mean();
  overall.accuracy_count = all_acc.count;
  report.rows.push_back(std::move(overall));
  return report;
}

std::string format_report(const MetricReport& report) {
  std::ostringstream os;
  auto line = [&](const std::string& task, const std::string& cu, const std::string& ncu,
                  const std::string& rqs, const std::string& nrqs, const std::string& acc,
                  const std::string& nacc) {
    os << std::left << std::setw(20) << task << std::right << std::setw(10) << cu << std::setw(8) << ncu
       << std::setw(8) << rqs << std::setw(8) << nrqs << std::setw(10) << acc << std::setw(8) << nacc
       << "\n";
  };
  line("Task", "CU(x100)", "n", "RQS", "n", "Accuracy", "n");
  for (const auto& r : report.rows)
    line(r.task, fixed(r.mean_cu_x100, 2), std::to_string(r.cu_count), fixed(r.mean_rqs, 2),
         std::to_string(r.rqs_count), fixed(r.accuracy, 4), std::to_string(r.accuracy_count));
  return os.str();
}

std::string report_jsonl(const MetricReport& report) {
  std::string out;
  for (const auto& r : report.rows) {
    nlohmann::ordered_json j;
    j["task"] = r.task;
    j["mean_cu_x100"] = r.mean_cu_x100 ? nlohmann::ordered_json(*r.mean_cu_x100) : nullptr;
    j["cu_count"] = r.cu_count;
    j["mean_rqs"] = r.mean_rqs ? nlohmann::ordered_json(*r.mean_rqs) : nullptr;
    j["rqs_count"] = r.rqs_count;
    j["accuracy"] = r.accuracy ? nlohmann::ordered_json(*r.accuracy) : nullptr;
    j["accuracy_count"] = r.accuracy_count;
    out += j.dump() + "\n";
  }
  return out;
}

void emit_report(const MetricReport& report, const std::filesystem::path& text_path,
                 const std::filesystem::path& jsonl_path) {
  write_file(text_path, format_report(report));
  write_file(jsonl_path, report_jsonl(report));
}

}  // namespace rco
