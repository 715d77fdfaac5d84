// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <set>

#include "doctest.h"
#include "rco/error.hpp"
#include "rco/records.hpp"
#include "rco/templates.hpp"
#include "support.hpp"

using namespace rco;
namespace fs = std::filesystem;

namespace {

Slots sentinel_slots(std::string_view text) {
  Slots s;
  for (const auto& name : placeholders(text)) s[name] = "<<" + name + ">>";
  return s;
}

fs::path golden_dir() { return testing::data_dir() / "golden" / "templates"; }

}  // namespace

TEST_CASE("every asset renders to its golden text") {
  const auto& lib = testing::templates();
  REQUIRE_FALSE(lib.assets().empty());
  for (const auto& [name, text] : lib.assets()) {
    CAPTURE(name);
    const fs::path golden = golden_dir() / (name + ".txt");
    REQUIRE(fs::exists(golden));
    CHECK(substitute(text, sentinel_slots(text)) == testing::read_golden(golden));
  }
}

TEST_CASE("asset set and golden set coincide") {
  std::set<std::string> goldens;
  for (const auto& e : fs::recursive_directory_iterator(golden_dir())) {
    if (!e.is_regular_file()) continue;
    std::string rel = fs::relative(e.path(), golden_dir()).generic_string();
    goldens.insert(rel.substr(0, rel.size() - 4));
  }
  std::set<std::string> assets;
  for (const auto& [name, text] : testing::templates().assets()) assets.insert(name);
  CHECK(assets == goldens);
}

TEST_CASE("every stage, task, variant and style has a template") {
  const auto& lib = testing::templates();
  int count = 0;
  for (TemplateStage stage : kAllStages) {
    for (TaskKind task : kAllTasks) {
      for (TemplateVariant v : variants_for(task)) {
        const std::string name = template_name({stage, task, v, CriticStyle::generic});
        CAPTURE(name);
        CHECK(lib.contains(name));
        ++count;
      }
    }
  }
  CHECK(count == 7 * 10);
  CHECK(lib.contains(template_name({TemplateStage::critique, TaskKind::math, TemplateVariant::open, CriticStyle::auto_j})));
  CHECK(lib.contains(template_name({TemplateStage::critique, TaskKind::code, TemplateVariant::ds1000, CriticStyle::ultra_cm})));
  CHECK(lib.contains("answer_check/default"));
  CHECK_THROWS_AS(template_name({TemplateStage::refinement, TaskKind::math, TemplateVariant::open, CriticStyle::auto_j}),
                  TemplateError);
  CHECK_THROWS_AS(template_name({TemplateStage::initial, TaskKind::math, TemplateVariant::news, CriticStyle::generic}),
                  TemplateError);
}

TEST_CASE("judge-stage names ignore the variant") {
  CHECK(template_name({TemplateStage::judge_pair, TaskKind::math, TemplateVariant::table, CriticStyle::generic}) ==
        "judge_pair/math");
  CHECK(template_name({TemplateStage::initial, TaskKind::summarization, TemplateVariant::reddit, CriticStyle::generic}) ==
        "initial/summarization_tldr");
}

TEST_CASE("substitution and escapes") {
  CHECK(substitute("a {x} b", {{"x", "1"}}) == "a 1 b");
  CHECK(substitute("{{x}} {x}", {{"x", "{y}"}}) == "{x} {y}");
  // Substituted values are not rescanned.
  CHECK(substitute("{x}", {{"x", "{x}"}}) == "{x}");
  CHECK(substitute("\\boxed{}", {}) == "\\boxed{}");
  CHECK(placeholders("{a} {{b}} {c} {a}") == std::vector<std::string>{"a", "c"});
  try {
    substitute("{a} {missing}", {{"a", ""}});
    FAIL("expected TemplateError");
  } catch (const TemplateError& e) {
    CHECK(std::string(e.what()).find("missing") != std::string::npos);
  }
}

TEST_CASE("render names the template on a missing slot") {
  const auto& lib = testing::templates();
  try {
    lib.render("critique/dialog", {});
    FAIL("expected TemplateError");
  } catch (const TemplateError& e) {
    CHECK(std::string(e.what()).find("critique/dialog") != std::string::npos);
  }
  CHECK_THROWS_AS(lib.render("critique/nonesuch", {}), TemplateError);
}

TEST_CASE("variant selection from fixture prompts") {
  for (const auto& p : testing::prompts20()) {
    CAPTURE(p.id);
    const TemplateVariant v = select_variant(p);
    if (p.id == "sum-1" || p.id == "sum-2") CHECK(v == TemplateVariant::reddit);
    if (p.id == "sum-3" || p.id == "sum-4") CHECK(v == TemplateVariant::news);
    if (p.id == "qa-1" || p.id == "math-3") CHECK(v == TemplateVariant::choices);
    if (p.id == "qa-3" || p.id == "math-1") CHECK(v == TemplateVariant::open);
    if (p.id == "math-4") CHECK(v == TemplateVariant::table);
    if (p.id == "code-1") CHECK(v == TemplateVariant::humaneval);
    if (p.id == "code-3") CHECK(v == TemplateVariant::ds1000);
  }
}

TEST_CASE("record slots render every data-construction template") {
  const auto& lib = testing::templates();
  for (const auto& p : testing::prompts20()) {
    CAPTURE(p.id);
    Slots s = record_slots(p);
    s["response"] = "R";
    s["critique"] = "C";
    s["answer"] = "X";
    const TemplateVariant v = select_variant(p);
    for (TemplateStage st : {TemplateStage::initial, TemplateStage::critique, TemplateStage::refinement,
                             TemplateStage::self_refinement})
      CHECK_NOTHROW(lib.render(TemplateKey{st, p.task, v, CriticStyle::generic}, s));
  }
}

TEST_CASE("choices and candidate swapping") {
  CHECK(format_choices({"x", "y", "z"}) == "(A) x (B) y (C) z");
  Slots s{{"answer_0", "first"}, {"answer_1", "second"}};
  const Slots t = swap_candidates(s);
  CHECK(t.at("answer_0") == "second");
  CHECK(t.at("answer_1") == "first");
  CHECK(swap_candidates(t) == s);
  CHECK_THROWS_AS(swap_candidates({{"answer_0", "x"}}), TemplateError);
}
