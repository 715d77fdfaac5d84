// SPDX-License-Identifier: Apache-2.0
#include <mutex>
#include <set>

#include "doctest.h"
#include "rco/error.hpp"
#include "rco/sampler.hpp"
#include "support.hpp"

using namespace rco;

namespace {

// Wraps the mock and keeps every request text it saw.
class Recorder : public Backend {
 public:
  explicit Recorder(std::uint64_t seed) : inner_(make_mock_backend(seed, {})) {}
  BackendReply send(const CompletionRequest& r, std::string_view model) override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      std::string all;
      for (const auto& m : r.messages) all += m.text + "\n";
      seen.push_back(all);
    }
    return inner_->send(r, model);
  }
  std::vector<std::string> seen;

 private:
  std::mutex mu_;
  std::shared_ptr<Backend> inner_;
};

// Fails every request whose text contains `needle`.
class Picky : public Backend {
 public:
  explicit Picky(std::string needle) : needle_(std::move(needle)), inner_(make_mock_backend(0, {})) {}
  BackendReply send(const CompletionRequest& r, std::string_view model) override {
    for (const auto& m : r.messages)
      if (m.text.find(needle_) != std::string::npos) return TransportFailure{FailureKind::fatal, "refused"};
    return inner_->send(r, model);
  }

 private:
  std::string needle_;
  std::shared_ptr<Backend> inner_;
};

Endpoint endpoint(std::shared_ptr<Backend> b, std::string id) {
  Endpoint ep;
  ep.id = std::move(id);
  ep.model = "m";
  ep.backend = std::move(b);
  ep.retry.max_attempts = 1;
  return ep;
}

struct Rig {
  Endpoint actor = make_mock_endpoint(11, {}, "actor");
  Endpoint critic = make_mock_endpoint(12, {}, "critic");
  SamplerContext ctx;
  Rig(int parallelism = 1) {
    ctx.actor = &actor;
    ctx.critic = &critic;
    ctx.templates = &testing::templates();
    ctx.seed = 99;
    ctx.parallelism = parallelism;
  }
};

}  // namespace

TEST_CASE("request seeds differ by index and are stable") {
  CHECK(request_seed(1, "p", "critique", 1) == request_seed(1, "p", "critique", 1));
  std::set<std::uint64_t> seeds;
  for (int k = 1; k <= 4; ++k)
    for (int j = 0; j <= 5; ++j) seeds.insert(request_seed(1, "p", "refine", k, j));
  CHECK(seeds.size() == 24);
  CHECK(request_seed(1, "p", "critique", 1) != request_seed(2, "p", "critique", 1));
  CHECK(request_seed(1, "p", "critique", 1) != request_seed(1, "q", "critique", 1));
}

TEST_CASE("refinement text extraction") {
  CHECK(extract_refinement("My revised response: better.") == "better.");
  CHECK(extract_refinement("  \nplain\n") == "plain");
  CHECK(extract_refinement("Not My revised response: x") == "Not My revised response: x");
}

TEST_CASE("bundle cardinality is N critiques and N*M refinements") {
  Rig rig;
  const auto prompts = testing::prompts20();
  const BundleRun run = sample_bundles(rig.ctx, prompts, 4, 5);
  CHECK(run.failures.empty());
  REQUIRE(run.bundles.size() == prompts.size());
  for (const auto& b : run.bundles) {
    CAPTURE(b.record.id);
    CHECK(b.complete(4, 5));
    CHECK(b.initial.turn == 0);
    std::set<std::string> texts;
    for (const auto& [k, refs] : b.refinements)
      for (const auto& r : refs) {
        CHECK(r.critique_index == k);
        texts.insert(r.text);
      }
    CHECK(texts.size() == 20);  // distinct draws per index
    CHECK_FALSE(b.complete(4, 4));
  }
}

TEST_CASE("refinement prompts carry the initial response and their critique") {
  auto actor_rec = std::make_shared<Recorder>(1);
  auto critic_rec = std::make_shared<Recorder>(2);
  const Endpoint actor = endpoint(actor_rec, "actor");
  const Endpoint critic = endpoint(critic_rec, "critic");
  SamplerContext ctx;
  ctx.actor = &actor;
  ctx.critic = &critic;
  ctx.templates = &testing::templates();
  const std::vector<PromptRecord> one{testing::prompt_for(TaskKind::math)};

  const auto initial = generate_initial(ctx, one);
  REQUIRE(initial.records.size() == 1);
  CHECK(actor_rec->seen.at(0).find(one[0].prompt) != std::string::npos);

  const auto critiques = generate_critiques(ctx, one, initial.records, 2);
  REQUIRE(critiques.records.size() == 2);
  for (const auto& text : critic_rec->seen) CHECK(text.find(initial.records[0].text) != std::string::npos);

  actor_rec->seen.clear();
  const auto refs = generate_refinements(ctx, one, initial.records, critiques.records, 3);
  REQUIRE(refs.records.size() == 6);
  int with_first = 0;
  for (const auto& text : actor_rec->seen) {
    CHECK(text.find(initial.records[0].text) != std::string::npos);
    if (text.find(critiques.records[0].text) != std::string::npos) ++with_first;
  }
  CHECK(with_first == 3);
  for (const auto& r : refs.records) CHECK(r.text.rfind("mock refinement", 0) == 0);
}

TEST_CASE("stages are deterministic for a fixed seed and parallelism does not matter") {
  const auto prompts = testing::prompts20();
  Rig serial(1);
  Rig wide(4);
  const auto a = sample_bundles(serial.ctx, prompts, 2, 2);
  const auto b = sample_bundles(wide.ctx, prompts, 2, 2);
  REQUIRE(a.bundles.size() == b.bundles.size());
  for (std::size_t i = 0; i < a.bundles.size(); ++i) {
    CHECK(a.bundles[i].initial == b.bundles[i].initial);
    CHECK(a.bundles[i].critiques == b.bundles[i].critiques);
    CHECK(a.bundles[i].refinements == b.bundles[i].refinements);
  }
  Rig other;
  other.ctx.seed = 100;
  const auto c = sample_bundles(other.ctx, prompts, 2, 2);
  CHECK(c.bundles[0].critiques != a.bundles[0].critiques);
}

TEST_CASE("greedy refinement with m = 1") {
  Rig rig;
  const std::vector<PromptRecord> one{testing::prompt_for(TaskKind::dialog)};
  const auto init = generate_initial(rig.ctx, one);
  const auto crit = generate_critiques(rig.ctx, one, init.records, 2);
  const auto r1 = generate_refinements(rig.ctx, one, init.records, crit.records, 1, 0.0);
  rig.ctx.seed = 12345;
  const auto r2 = generate_refinements(rig.ctx, one, init.records, crit.records, 1, 0.0);
  CHECK(r1.records == r2.records);
}

TEST_CASE("a failing slot is reported without sinking the stage") {
  const Endpoint actor = make_mock_endpoint(1, {}, "actor");
  const Endpoint critic = endpoint(std::make_shared<Picky>(testing::prompt_for(TaskKind::code).prompt), "critic");
  SamplerContext ctx;
  ctx.actor = &actor;
  ctx.critic = &critic;
  ctx.templates = &testing::templates();
  const auto prompts = testing::prompts20();
  const auto run = sample_bundles(ctx, prompts, 2, 2);
  CHECK(run.failures.size() == 2);
  for (const auto& f : run.failures) {
    CHECK(f.stage == "critique");
    CHECK(f.prompt_id == testing::prompt_for(TaskKind::code).id);
  }
  int complete = 0;
  for (const auto& b : run.bundles) complete += b.complete(2, 2);
  CHECK(complete == 19);
}

TEST_CASE("self-refinement and iteration") {
  Rig rig;
  const std::vector<PromptRecord> one{testing::prompt_for(TaskKind::question_answering)};
  const auto init = generate_initial(rig.ctx, one);
  const auto self = self_refine(rig.ctx, one, init.records);
  REQUIRE(self.records.size() == 1);
  CHECK(self.records[0].turn == 1);
  CHECK(self.records[0].text != init.records[0].text);

  const auto it = iterate(rig.ctx, one[0], init.records[0], 3);
  CHECK(it.failures.empty());
  REQUIRE(it.records.size() == 3);
  for (int t = 0; t < 3; ++t) {
    CHECK(it.records[t].critique.index == t + 1);
    CHECK(it.records[t].response.turn == t + 1);
  }
  CHECK(it.records[0].response.text != it.records[1].response.text);
  CHECK_THROWS_AS(iterate(rig.ctx, one[0], init.records[0], 0), ValidationError);
}

TEST_CASE("critic styles use their own template") {
  const auto& lib = testing::templates();
  const PromptRecord& p = testing::prompt_for(TaskKind::dialog);
  const auto generic = critique_prompt(lib, p, "ANSWER", CriticStyle::generic);
  const auto autoj = critique_prompt(lib, p, "ANSWER", CriticStyle::auto_j);
  CHECK(generic.user != autoj.user);
  CHECK(autoj.user.find("ANSWER") != std::string::npos);
}

TEST_CASE("incomplete contexts are rejected") {
  SamplerContext ctx;
  const auto prompts = testing::prompts20();
  CHECK_THROWS_AS(generate_initial(ctx, prompts), ConfigError);
  Rig rig;
  rig.ctx.actor = nullptr;
  CHECK_NOTHROW(generate_critiques(rig.ctx, prompts, {}, 1));
}
