// SPDX-License-Identifier: Apache-2.0
#include <sys/wait.h>

#include <cstdio>

#include "doctest.h"
#include "json.hpp"
#include "pipeline.hpp"
#include "rco/cli.hpp"
#include "rco/config.hpp"
#include "rco/records.hpp"

using namespace rco;
using testing::cli;
namespace fs = std::filesystem;

namespace {

std::string prompts_path() { return (testing::data_dir() / "fixtures" / "prompts20.jsonl").string(); }

}  // namespace

TEST_CASE("full chain writes the expected record counts") {
  testing::use_mock_endpoints();
  testing::TempDir dir;
  REQUIRE(testing::run_chain(dir.path) == kExitOk);
  CHECK(load_records<ResponseRecord>(dir.path / "responses.jsonl").size() == 20);
  CHECK(load_records<CritiqueRecord>(dir.path / "critiques.jsonl").size() == 80);
  CHECK(load_records<RefinementRecord>(dir.path / "refinements.jsonl").size() == 400);
  CHECK(load_records<JudgmentRecord>(dir.path / "judgments.jsonl").size() == 800);
  CHECK(load_records<RewardRecord>(dir.path / "rewards.jsonl").size() == 80);
  CHECK(fs::exists(dir.path / RunManifest::kFileName));
  CHECK_FALSE(fs::exists(dir.path / DirectoryLock::kFileName));

  const RunManifest m = RunManifest::load(dir.path);
  for (const char* stage : {"collect-responses", "critique", "refine", "judge", "reward"}) {
    CAPTURE(stage);
    const StageEntry* e = m.find(stage);
    REQUIRE(e);
    CHECK(e->failures == 0);
    CHECK(e->started_at == "2023-11-14T22:13:20Z");
    CHECK_FALSE(e->outputs.empty());
  }
  CHECK(m.find("reward")->endpoints.at("judge") == "mock://consistent,rating=7,answers=consistent");
}

TEST_CASE("reruns are no-ops until forced or inputs change") {
  testing::use_mock_endpoints();
  testing::TempDir dir;
  const std::string d = dir.path.string();
  const std::vector<std::string> collect{"collect-responses", "--prompts", prompts_path(), "--out", d};
  REQUIRE(cli(collect).code == 0);
  const std::string first = read_file(dir.path / "responses.jsonl");

  auto again = cli(collect);
  CHECK(again.code == 0);
  CHECK(again.out.find("up to date") != std::string::npos);

  auto forced = collect;
  forced.push_back("--force");
  again = cli(forced);
  CHECK(again.out.find("up to date") == std::string::npos);
  CHECK(read_file(dir.path / "responses.jsonl") == first);

  auto reseeded = collect;
  reseeded.insert(reseeded.end(), {"--seed", "7"});
  again = cli(reseeded);
  CHECK(again.out.find("up to date") == std::string::npos);
  CHECK(read_file(dir.path / "responses.jsonl") != first);

  // Tampering with an output invalidates the entry.
  write_file(dir.path / "responses.jsonl", "");
  CHECK(cli(reseeded).out.find("up to date") == std::string::npos);
}

TEST_CASE("exit codes") {
  testing::use_mock_endpoints();
  testing::TempDir dir;
  const std::string d = dir.path.string();

  SUBCASE("usage and config") {
    CHECK(cli({}).code == kExitConfig);
    CHECK(cli({"collect-responses", "--out", d}).code == kExitConfig);
    CHECK(cli({"collect-responses", "--prompts", prompts_path(), "--out", d, "--beta", "0.1", "--beta", "0.2"}).code ==
          kExitConfig);
    CHECK(cli({"collect-responses", "--prompts", prompts_path(), "--out", d, "--beta", "-1"}).code == kExitConfig);
    ::unsetenv("RCO_ACTOR_URL");
    CHECK(cli({"collect-responses", "--prompts", prompts_path(), "--out", d}).code == kExitConfig);
  }
  SUBCASE("data") {
    CHECK(cli({"collect-responses", "--prompts", d + "/nope.jsonl", "--out", d}).code == kExitData);
    write_file(dir.path / "bad.jsonl", "{\"id\": 1}\n");
    const auto r = cli({"collect-responses", "--prompts", d + "/bad.jsonl", "--out", d});
    CHECK(r.code == kExitData);
    CHECK(r.err.find("line 1") != std::string::npos);
  }
  SUBCASE("endpoint failures leave a failure log") {
    REQUIRE(testing::run_chain(dir.path) == 0);
    ::setenv("RCO_JUDGE_URL", "mock://unreachable", 1);
    const auto r = cli({"judge", "--prompts", prompts_path(), "--responses", d + "/responses.jsonl", "--refinements",
                        d + "/refinements.jsonl", "--out", d, "--force", "--retry-backoff-ms", "0",
                        "--max-attempts", "1"});
    CHECK(r.code == kExitEndpoint);
    CHECK(fs::exists(dir.path / "failures" / "judge.jsonl"));
    CHECK(load_records<JudgmentRecord>(dir.path / "judgments.jsonl").empty());
    // a failed stage is never considered up to date
    ::setenv("RCO_JUDGE_URL", "mock://consistent", 1);
    const auto retry = cli({"judge", "--prompts", prompts_path(), "--responses", d + "/responses.jsonl",
                            "--refinements", d + "/refinements.jsonl", "--out", d, "--retry-backoff-ms", "0",
                            "--max-attempts", "1"});
    CHECK(retry.code == 0);
    CHECK_FALSE(fs::exists(dir.path / "failures" / "judge.jsonl"));
  }
  SUBCASE("lock held") {
    DirectoryLock held(dir.path);
    const auto r = cli({"collect-responses", "--prompts", prompts_path(), "--out", d});
    CHECK(r.code == kExitFailure);
    CHECK(r.err.find("lock") != std::string::npos);
  }
}

TEST_CASE("explain-config shows the resolved values and hash") {
  testing::TempDir dir;
  write_file(dir.path / "run.cfg", "beta = 0.25\n");
  const auto r = cli({"explain-config", "--config", (dir.path / "run.cfg").string(), "-N", "6"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("beta = 0.25\n") != std::string::npos);
  CHECK(r.out.find("n_critiques = 6\n") != std::string::npos);
  PipelineConfig c;
  c.beta = 0.25;
  c.n_critiques = 6;
  CHECK(r.out.find("config_hash = " + config_hash(c)) != std::string::npos);
  CHECK(cli({"explain-config", "--n_critiques", "6", "--n-critiques", "5"}).code == kExitConfig);
}

TEST_CASE("dpco pairs, self-refine, iterate and eval commands") {
  testing::use_mock_endpoints();
  testing::TempDir dir;
  const std::string d = dir.path.string();
  REQUIRE(testing::run_chain(dir.path) == 0);
  const std::vector<std::string> base{"--prompts", prompts_path(), "--responses", d + "/responses.jsonl", "--out", d};
  auto cmd = [&](std::vector<std::string> head, std::vector<std::string> more = {}) {
    head.insert(head.end(), base.begin(), base.end());
    head.insert(head.end(), more.begin(), more.end());
    return cli(head);
  };

  auto r = cmd({"dpco-pairs"}, {"--critiques", d + "/critiques.jsonl"});
  CHECK(r.code == 0);
  const auto pairs = load_records<DpcoPair>(dir.path / "dpco_pairs.jsonl");
  CHECK(pairs.size() == 40);
  for (const auto& p : pairs) CHECK((p.chosen_index + 1) / 2 == (p.rejected_index + 1) / 2);

  r = cmd({"self-refine"});
  CHECK(r.code == 0);
  for (const auto& s : load_records<ResponseRecord>(dir.path / "self_refinements.jsonl")) CHECK(s.turn == 1);

  r = cmd({"iterate"}, {"--turns", "2"});
  CHECK(r.code == 0);
  CHECK(load_records<ResponseRecord>(dir.path / "iterate_responses.jsonl").size() == 40);

  r = cmd({"eval"}, {"--critiques", d + "/critiques.jsonl", "--code-exec", "true"});
  CHECK(r.code == 0);
  CHECK(r.out.find("Overall") != std::string::npos);
  CHECK(fs::exists(dir.path / "report.txt"));
  CHECK(load_records<RefinementRecord>(dir.path / "eval_refinements.jsonl").size() == 80);
}

TEST_CASE("train-toy on a fixture and on reward output") {
  testing::use_mock_endpoints();
  testing::TempDir dir;
  const std::string d = dir.path.string();
  auto r = cli({"train-toy", "--fixture", (testing::data_dir() / "fixtures" / "k4.toy").string(), "--out", d});
  CHECK(r.code == 0);
  const auto line = read_file(dir.path / "train_report.jsonl");
  const auto j = nlohmann::json::parse(line.substr(0, line.find('\n')));
  CHECK(j["status"] == "converged");
  CHECK(j["kl_to_closed_form"].get<double>() < 1e-6);

  r = cli({"train-toy", "--fixture", (testing::data_dir() / "fixtures" / "k4.toy").string(), "--out", d,
           "--max-steps", "2", "--force"});
  CHECK(r.code == kExitFailure);

  REQUIRE(testing::run_chain(dir.path) == 0);
  r = cli({"train-toy", "--rewards", d + "/rewards.jsonl", "--out", d, "--force"});
  CHECK(r.code == 0);
  CHECK(cli({"train-toy", "--out", d}).code == kExitConfig);
}

TEST_CASE("the installed binary maps errors to exit codes") {
  const char* bin = std::getenv("RCO_CLI");
  if (!bin || !*bin) return;
  const std::string cmd = std::string("'") + bin + "' explain-config --beta 0 >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == kExitConfig);
  const int ok = std::system((std::string("'") + bin + "' explain-config >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(ok) == 0);
}
