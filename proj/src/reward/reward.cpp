// SPDX-License-Identifier: Apache-2.0
#include "rco/reward.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rco/error.hpp"

namespace rco {

CritiqueUtility critique_utility(std::span<const double> ps_values) {
  if (ps_values.empty()) throw DomainError("critique utility needs at least one valid judgment");
  // Scores are multiples of 0.5, so summing twice the value is exact in any order.
  long twice = 0;
  for (double ps : ps_values) {
    if (!is_preference_score(ps)) throw DomainError("preference score must be 0, 0.5 or 1");
    twice += static_cast<long>(ps * 2.0);
  }
  const auto n = static_cast<double>(ps_values.size());
  return {static_cast<double>(twice) / (2.0 * n), static_cast<int>(ps_values.size())};
}

double log_partition(std::span<const double> cus, double beta) {
  if (cus.empty()) throw DomainError("log partition needs at least one critique");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw DomainError("beta must be positive");
  double mx = -INFINITY;
  for (double c : cus) mx = std::max(mx, c / beta);
  double acc = 0.0;
  for (double c : cus) acc += std::exp(c / beta - mx);
  return mx + std::log(acc / static_cast<double>(cus.size()));
}

std::vector<double> rco_targets(std::span<const double> cus, double beta) {
  const double log_z = log_partition(cus, beta);
  std::vector<double> out;
  out.reserve(cus.size());
  for (double c : cus) out.push_back(c / beta - log_z);
  return out;
}

std::vector<DpcoPair> dpco_pairs(const std::string& prompt_id, std::size_t critique_count,
                                 std::span<const std::optional<Verdict>> group_verdicts) {
  if (critique_count != 2 * group_verdicts.size())
    throw ValidationError("dpco pairs need two critiques per grouping, got " +
                          std::to_string(critique_count) + " critiques for " +
                          std::to_string(group_verdicts.size()) + " groups");
  std::vector<DpcoPair> out;
  for (std::size_t g = 0; g < group_verdicts.size(); ++g) {
    const auto& v = group_verdicts[g];
    if (!v || *v == Verdict::C) continue;
    const int lo = static_cast<int>(2 * g + 1);
    const int hi = lo + 1;
    if (*v == Verdict::A) out.push_back({prompt_id, lo, hi});
    else out.push_back({prompt_id, hi, lo});
  }
  return out;
}

RewardBatch build_rewards(std::span<const JudgmentRecord> judgments, const RewardOptions& options) {
  if (options.n_critiques < 1 || options.m_refinements < 1)
    throw ConfigError("n_critiques and m_refinements must be at least 1");
  const int max_per_critique = 2 * options.m_refinements;

  // prompt -> critique index -> scores
  std::map<std::string, std::map<int, std::vector<double>>> groups;
  for (const auto& j : judgments) {
    if (j.critique_index < 1 || j.critique_index > options.n_critiques)
      throw ValidationError("judgment for " + j.prompt_id + " has critique_index " +
                            std::to_string(j.critique_index) + " outside 1.." +
                            std::to_string(options.n_critiques));
    if (j.refinement_index < 1 || j.refinement_index > options.m_refinements)
      throw ValidationError("judgment for " + j.prompt_id + " has refinement_index " +
                            std::to_string(j.refinement_index) + " outside 1.." +
                            std::to_string(options.m_refinements));
    auto& scores = groups[j.prompt_id][j.critique_index];
    scores.push_back(j.ps);
    if (static_cast<int>(scores.size()) > max_per_critique)
      throw ValidationError("more than " + std::to_string(max_per_critique) +
                            " judgments for " + j.prompt_id + " critique " +
                            std::to_string(j.critique_index));
  }

  RewardBatch batch;
  for (const auto& [prompt_id, by_critique] : groups) {
    std::string reason;
    for (int c = 1; c <= options.n_critiques && reason.empty(); ++c) {
      auto it = by_critique.find(c);
      const int have = it == by_critique.end() ? 0 : static_cast<int>(it->second.size());
      if (have == 0 || have < options.min_valid_judgments)
        reason = "critique " + std::to_string(c) + " has " + std::to_string(have) +
                 " valid judgments, need " + std::to_string(std::max(1, options.min_valid_judgments));
    }
    if (!reason.empty()) {
      batch.excluded.push_back({prompt_id, reason});
      continue;
    }
    std::vector<CritiqueUtility> utils;
    std::vector<double> cus;
    for (int c = 1; c <= options.n_critiques; ++c) {
      utils.push_back(critique_utility(by_critique.at(c)));
      cus.push_back(utils.back().value);
    }
    const double log_z = log_partition(cus, options.beta);
    for (int c = 1; c <= options.n_critiques; ++c) {
      const auto& u = utils[c - 1];
      batch.rewards.push_back(
          {prompt_id, c, u.value, u.valid_judgments, log_z, u.value / options.beta - log_z});
    }
  }
  return batch;
}

}  // namespace rco
