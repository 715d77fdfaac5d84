// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracle.hpp"
#include "rco/error.hpp"
#include "rco/reward.hpp"

using namespace rco;

namespace {

std::vector<JudgmentRecord> full_group(const std::string& pid, int n, int m, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> v(0, 2);
  std::vector<JudgmentRecord> out;
  for (int c = 1; c <= n; ++c)
    for (int r = 1; r <= m; ++r)
      for (JudgeOrder o : {JudgeOrder::refined_first, JudgeOrder::initial_first}) {
        const Verdict verdict = static_cast<Verdict>(v(rng));
        out.push_back({pid, c, r, o, verdict, verdict == Verdict::C ? 0.5
                                              : (verdict == Verdict::A) == (o == JudgeOrder::refined_first) ? 1.0
                                                                                                           : 0.0,
                       ""});
      }
  return out;
}

}  // namespace

TEST_CASE("critique utility examples") {
  const std::vector<double> ps{1, 0, 0.5, 0.5, 1, 1, 0, 1, 1, 1};
  const auto u = critique_utility(ps);
  CHECK(u.value == 0.7);
  CHECK(u.valid_judgments == 10);
  CHECK(critique_utility(std::vector<double>{0.5}).value == 0.5);
  CHECK_THROWS_AS(critique_utility(std::vector<double>{}), DomainError);
  CHECK_THROWS_AS(critique_utility(std::vector<double>{0.25}), DomainError);
}

TEST_CASE("property: utility equals the exact rational mean in any order") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> half(0, 2);
  std::uniform_int_distribution<int> count(1, 40);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> ps(static_cast<std::size_t>(count(rng)));
    int twice = 0;
    for (double& p : ps) {
      const int h = half(rng);
      p = h / 2.0;
      twice += h;
    }
    const double expected = static_cast<double>(twice) / (2.0 * static_cast<double>(ps.size()));
    CHECK(critique_utility(ps).value == expected);
    std::shuffle(ps.begin(), ps.end(), rng);
    CHECK(critique_utility(ps).value == expected);
  }
}

TEST_CASE("log partition worked example") {
  const std::vector<double> cus{1, 0, 0.5, 0.5};
  CHECK(log_partition(cus, 0.1) == doctest::Approx(8.6271).epsilon(1e-5));
  CHECK(log_partition(std::vector<double>{0.3}, 0.1) == doctest::Approx(3.0));
  CHECK_THROWS_AS(log_partition(std::vector<double>{}, 0.1), DomainError);
  CHECK_THROWS_AS(log_partition(cus, 0.0), DomainError);
  CHECK_THROWS_AS(log_partition(cus, -1.0), DomainError);
}

TEST_CASE("log partition matches a 50-digit oracle on the grid") {
  for (double beta : {0.05, 0.1, 1.0}) {
    for (int n : {1, 2, 4}) {
      double worst = 0.0;
      testing::for_each_grid_point(n, 10, [&](std::span<const double> cus) {
        const double got = log_partition(cus, beta);
        const double want = static_cast<double>(testing::big_log_partition(cus, beta));
        worst = std::max(worst, std::abs(got - want));
      });
      CAPTURE(beta);
      CAPTURE(n);
      CHECK(worst <= 1e-12);
    }
  }
}

TEST_CASE("targets are normalised: mean of exp(target) is one") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (double beta : {0.01, 0.1, 1.0, 10.0}) {
    std::vector<double> cus(8);
    for (double& c : cus) c = u(rng);
    const auto t = rco_targets(cus, beta);
    double mean = 0.0;
    for (double x : t) mean += std::exp(x);
    CHECK(mean / 8.0 == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < cus.size(); ++i)
      CHECK(t[i] == doctest::Approx(cus[i] / beta - log_partition(cus, beta)));
  }
}

TEST_CASE("property: log partition lies between the mean and the max") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> k(1, 9);
  for (int trial = 0; trial < 500; ++trial) {
    const double beta = std::pow(10.0, -3.0 + 4.0 * u(rng));
    std::vector<double> cus(static_cast<std::size_t>(k(rng)));
    for (double& c : cus) c = u(rng);
    const double lz = log_partition(cus, beta);
    const double mx = *std::max_element(cus.begin(), cus.end()) / beta;
    const double mean = std::accumulate(cus.begin(), cus.end(), 0.0) / beta / static_cast<double>(cus.size());
    CHECK(lz <= mx + 1e-12 * std::abs(mx));
    CHECK(lz >= mean - 1e-12 * std::abs(mean));
    std::shuffle(cus.begin(), cus.end(), rng);
    CHECK(log_partition(cus, beta) == doctest::Approx(lz).epsilon(1e-14));
  }
}

TEST_CASE("small beta stays finite") {
  const std::vector<double> cus{1, 1, 0, 0.999};
  const double lz = log_partition(cus, 1e-3);
  CHECK(std::isfinite(lz));
  // exp(1000) overflows a double; the shifted sum does not.
  const double want = 1000.0 + std::log((2.0 + std::exp(-1.0)) / 4.0);
  CHECK(lz == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("dpco pairs from fixed groupings") {
  const std::vector<std::optional<Verdict>> v{Verdict::A, Verdict::B, Verdict::C, std::nullopt};
  const auto pairs = dpco_pairs("p", 8, v);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == DpcoPair{"p", 1, 2});
  CHECK(pairs[1] == DpcoPair{"p", 4, 3});
  CHECK_THROWS_AS(dpco_pairs("p", 7, v), ValidationError);
  CHECK(dpco_pairs("p", 0, std::span<const std::optional<Verdict>>{}).empty());
}

TEST_CASE("reward batches") {
  std::mt19937_64 rng(6);
  auto js = full_group("a", 4, 5, rng);
  auto more = full_group("b", 4, 5, rng);
  // Drop one judgment of b's third critique: below the default threshold.
  more.erase(std::find_if(more.begin(), more.end(), [](const auto& j) { return j.critique_index == 3; }));
  js.insert(js.end(), more.begin(), more.end());

  const RewardBatch batch = build_rewards(js, {});
  REQUIRE(batch.rewards.size() == 4);
  REQUIRE(batch.excluded.size() == 1);
  CHECK(batch.excluded[0].prompt_id == "b");
  std::vector<double> cus;
  for (const auto& r : batch.rewards) {
    CHECK(r.prompt_id == "a");
    CHECK(r.valid_judgments == 10);
    cus.push_back(r.cu);
  }
  const auto t = rco_targets(cus, 0.1);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(batch.rewards[i].critique_index == static_cast<int>(i) + 1);
    CHECK(batch.rewards[i].target == t[i]);
    CHECK(batch.rewards[i].log_z == log_partition(cus, 0.1));
  }

  RewardOptions lenient;
  lenient.min_valid_judgments = 5;
  CHECK(build_rewards(js, lenient).rewards.size() == 8);

  auto extra = js;
  extra.push_back(js.front());
  CHECK_THROWS_AS(build_rewards(extra, {}), ValidationError);
  auto wide = js;
  wide.front().critique_index = 5;
  CHECK_THROWS_AS(build_rewards(wide, {}), ValidationError);
}
