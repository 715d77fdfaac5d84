// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics: mean critique utility (x100), mean 1-10 response rating,
// and answer-consistency accuracy, per task and overall.
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rco/judge.hpp"
#include "rco/types.hpp"

namespace rco {

/// Running sum and count; means are sum / count.
struct MeanAccumulator {
  double sum = 0.0;
  long count = 0;

  void add(double x) {
    sum += x;
    ++count;
  }
  std::optional<double> mean() const {
    return count ? std::optional<double>(sum / static_cast<double>(count)) : std::nullopt;
  }
};

using TaskMeans = std::map<TaskKind, MeanAccumulator>;

struct AggregateResult {
  TaskMeans per_task;
  std::vector<std::string> warnings;
};

/// Averages the valid orders of each (prompt, critique, refinement) pair, then
/// averages pairs per task. Values are in [0,1]; the report scales by 100.
AggregateResult aggregate_cu(std::span<const JudgmentRecord> judgments,
                             std::span<const PromptRecord> prompts);

/// Mean rating per task over the given ratings.
AggregateResult aggregate_rqs(std::span<const RatingRecord> ratings,
                              std::span<const PromptRecord> prompts);

/// Runs code against a test suite id; true on pass.
using CodeExecutor = std::function<bool(std::string_view code, std::string_view test_suite)>;

/// Executor that pipes the code to `command <test_suite>` on stdin; exit
/// status 0 is a pass.
CodeExecutor make_command_executor(std::string command);

/// Last [[CONSISTENT]] or [[INCONSISTENT]] marker. Throws ParseError when
/// neither is present.
bool parse_consistency(std::string_view text);

struct AccuracyResult {
  TaskMeans per_task;  // 1 for consistent, 0 otherwise
  std::vector<std::string> warnings;

  std::optional<double> accuracy() const;
};

/// Question-answering and math refinements are checked against the gold
/// answer by the judge; code refinements go to `executor` with the record's
/// `test_suite` extra (or its id). Records without gold, dialog and
/// summarization tasks, and judge parse failures are skipped with a warning.
AccuracyResult consistency_accuracy(std::span<const RefinementRecord> refinements,
                                    std::span<const PromptRecord> prompts, const JudgeContext& judge,
                                    const CodeExecutor& executor = nullptr);

struct MetricRow {
  std::string task;  // task name or "Overall"
  std::optional<double> mean_cu_x100;
  long cu_count = 0;
  std::optional<double> mean_rqs;
  long rqs_count = 0;
  std::optional<double> accuracy;
  long accuracy_count = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;  // tasks in canonical order, then Overall
};

/// Rows for every task present in any input, plus the count-weighted overall
/// row.
MetricReport build_report(const TaskMeans& cu, const TaskMeans& rqs, const TaskMeans& accuracy);

/// Aligned text table.
std::string format_report(const MetricReport& report);

/// One JSON object per row.
std::string report_jsonl(const MetricReport& report);

/// Writes the text table to `text_path` and the rows to `jsonl_path`.
void emit_report(const MetricReport& report, const std::filesystem::path& text_path,
                 const std::filesystem::path& jsonl_path);

}  // namespace rco
