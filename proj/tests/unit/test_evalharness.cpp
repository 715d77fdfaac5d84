// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "json.hpp"
#include "rco/error.hpp"
#include "rco/evalharness.hpp"
#include "rco/records.hpp"
#include "support.hpp"

using namespace rco;

namespace {

JudgmentRecord jr(const std::string& pid, int c, int r, JudgeOrder o, double ps) {
  Verdict v = Verdict::C;
  if (ps != 0.5) v = (ps == 1.0) == (o == JudgeOrder::refined_first) ? Verdict::A : Verdict::B;
  return {pid, c, r, o, v, ps, ""};
}

}  // namespace

TEST_CASE("critique utility aggregates pairs, then tasks") {
  const auto prompts = testing::prompts20();
  const std::string d = testing::prompt_for(TaskKind::dialog).id;
  const std::string m = testing::prompt_for(TaskKind::math).id;
  std::vector<JudgmentRecord> js{
      jr(d, 1, 1, JudgeOrder::refined_first, 1.0), jr(d, 1, 1, JudgeOrder::initial_first, 1.0),
      jr(m, 1, 1, JudgeOrder::refined_first, 1.0), jr(m, 1, 1, JudgeOrder::initial_first, 0.0),
      // one-sided pair still counts with its single valid order
      jr(m, 2, 1, JudgeOrder::refined_first, 0.5)};
  const auto agg = aggregate_cu(js, prompts);
  CHECK(*agg.per_task.at(TaskKind::dialog).mean() == 1.0);
  CHECK(agg.per_task.at(TaskKind::math).count == 2);
  CHECK(*agg.per_task.at(TaskKind::math).mean() == 0.5);
  CHECK(agg.per_task.count(TaskKind::code) == 0);

  const auto report = build_report(agg.per_task, {}, {});
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].task == "dialog");
  CHECK(*report.rows[0].mean_cu_x100 == 100.0);
  CHECK(*report.rows[1].mean_cu_x100 == 50.0);
  CHECK(report.rows[2].task == "Overall");
  CHECK(*report.rows[2].mean_cu_x100 == doctest::Approx(200.0 / 3.0));
  CHECK(report.rows[2].cu_count == 3);
}

TEST_CASE("rating means per task") {
  const auto prompts = testing::prompts20();
  const std::string q = testing::prompt_for(TaskKind::question_answering).id;
  std::vector<RatingRecord> rs{{q, RatingSubject::refinement, 1, 1, 6, ""}, {q, RatingSubject::refinement, 2, 1, 8, ""}};
  const auto agg = aggregate_rqs(rs, prompts);
  CHECK(*agg.per_task.at(TaskKind::question_answering).mean() == 7.0);
}

TEST_CASE("unknown prompts are warned about, not counted") {
  const auto prompts = testing::prompts20();
  std::vector<JudgmentRecord> js{jr("ghost", 1, 1, JudgeOrder::refined_first, 1.0)};
  const auto agg = aggregate_cu(js, prompts);
  CHECK(agg.per_task.empty());
  CHECK(agg.warnings.size() == 1);
}

TEST_CASE("consistency markers") {
  CHECK(parse_consistency("[[CONSISTENT]]"));
  CHECK_FALSE(parse_consistency("[[CONSISTENT]] no wait [[INCONSISTENT]]"));
  CHECK(parse_consistency("[[INCONSISTENT]]... actually [[CONSISTENT]]"));
  CHECK_THROWS_AS(parse_consistency("they agree"), ParseError);
}

TEST_CASE("accuracy over scripted answer checks and code runs") {
  const auto prompts = testing::prompts20();
  MockScript script;
  script.rules = {{"RIGHT", "Same final answer. [[CONSISTENT]]"}, {"WRONG", "Different. [[INCONSISTENT]]"}};
  const Endpoint ep = make_mock_endpoint(0, script, "judge");
  JudgeContext ctx;
  ctx.endpoint = &ep;
  ctx.templates = &testing::templates();

  std::vector<RefinementRecord> refs;
  int n = 0;
  for (const auto& p : prompts) {
    if (p.task != TaskKind::question_answering && p.task != TaskKind::math) continue;
    if (!p.reference_answer) continue;
    for (int k = 1; k <= 2; ++k) refs.push_back({p.id, k, 1, (n++ % 10 < 7 ? "RIGHT " : "WRONG ") + p.id});
  }
  refs.resize(10);
  std::vector<RefinementRecord> all = refs;
  all.push_back({testing::prompt_for(TaskKind::dialog).id, 1, 1, "chat"});
  const auto result = consistency_accuracy(all, prompts, ctx);
  REQUIRE(result.accuracy());
  CHECK(*result.accuracy() == doctest::Approx(0.7));

  std::vector<RefinementRecord> code;
  for (const auto& p : prompts)
    if (p.task == TaskKind::code) code.push_back({p.id, 1, 1, p.id == "code-2" ? "broken" : "ok"});
  std::vector<std::string> suites;
  const CodeExecutor exec = [&](std::string_view c, std::string_view suite) {
    suites.emplace_back(suite);
    return c == "ok";
  };
  const auto cr = consistency_accuracy(code, prompts, ctx, exec);
  CHECK(cr.per_task.at(TaskKind::code).count == 4);
  CHECK(*cr.accuracy() == 0.75);
  CHECK(suites.size() == 4);
  CHECK(suites[0] == testing::prompt_for(TaskKind::code).extra.at("test_suite"));

  const auto skipped = consistency_accuracy(code, prompts, ctx);
  CHECK_FALSE(skipped.accuracy());
  CHECK_FALSE(skipped.warnings.empty());
}

TEST_CASE("command executor uses the exit status") {
  testing::TempDir dir;
  const auto script = dir.path / "check.sh";
  write_file(script, "#!/bin/sh\ngrep -q \"$1\"\n");
  std::filesystem::permissions(script, std::filesystem::perms::owner_all);
  const CodeExecutor exec = make_command_executor(script.string());
  CHECK(exec("def f(): return 'needle'\n", "needle"));
  CHECK_FALSE(exec("def f(): return 1\n", "needle"));
}

TEST_CASE("reports are deterministic and count-weighted") {
  TaskMeans cu;
  cu[TaskKind::dialog].add(1.0);
  cu[TaskKind::code].add(0.5);
  cu[TaskKind::code].add(0.0);
  cu[TaskKind::code].add(0.5);
  TaskMeans rqs;
  rqs[TaskKind::code].add(6);
  rqs[TaskKind::code].add(8);
  TaskMeans acc;
  acc[TaskKind::math].add(1);
  acc[TaskKind::math].add(0);

  const auto report = build_report(cu, rqs, acc);
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].task == "dialog");
  CHECK(report.rows[1].task == "math");
  CHECK(report.rows[2].task == "code");
  const auto& overall = report.rows[3];
  CHECK(*overall.mean_cu_x100 == doctest::Approx(50.0));
  CHECK(*overall.mean_rqs == 7.0);
  CHECK(*overall.accuracy == 0.5);
  CHECK_FALSE(report.rows[0].mean_rqs);

  const std::string text = format_report(report);
  CHECK(text == format_report(build_report(cu, rqs, acc)));
  CHECK(text.find("Overall") != std::string::npos);
  const std::string jsonl = report_jsonl(report);
  std::size_t lines = 0;
  for (std::size_t pos = 0; (pos = jsonl.find('\n', pos)) != std::string::npos; ++pos) ++lines;
  CHECK(lines == 4);
  const auto first = nlohmann::json::parse(jsonl.substr(0, jsonl.find('\n')));
  CHECK(first["task"] == "dialog");

  testing::TempDir dir;
  emit_report(report, dir.path / "r.txt", dir.path / "r.jsonl");
  CHECK(read_file(dir.path / "r.txt") == text);
  CHECK(read_file(dir.path / "r.jsonl") == jsonl);
}
