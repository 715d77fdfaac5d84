// SPDX-License-Identifier: Apache-2.0
//
// Critique utility, the sampled log-partition, regression targets and DPCO
// preference pairs.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rco/types.hpp"

namespace rco {

struct CritiqueUtility {
  double value = 0.0;
  int valid_judgments = 0;
};

/// Mean of the valid preference scores. Throws DomainError on an empty list or
/// a value outside {0, 0.5, 1}.
CritiqueUtility critique_utility(std::span<const double> ps_values);

/// log((1/N) sum_i exp(cu_i / beta)), stabilized by the max term. Throws
/// DomainError for an empty list or beta <= 0.
double log_partition(std::span<const double> cus, double beta);

/// cu_i / beta - log_partition(cus, beta), in input order.
std::vector<double> rco_targets(std::span<const double> cus, double beta);

/// Pairs from the fixed groupings (1,2), (3,4), ... given one verdict per group
/// (nullopt for an inconsistent or invalid judgment). A picks the lower index,
/// B the higher; ties and missing verdicts emit nothing. Throws
/// ValidationError unless critique_count == 2 * group_verdicts.size().
std::vector<DpcoPair> dpco_pairs(const std::string& prompt_id, std::size_t critique_count,
                                 std::span<const std::optional<Verdict>> group_verdicts);

struct RewardOptions {
  int n_critiques = 4;
  int m_refinements = 5;
  double beta = 0.1;
  int min_valid_judgments = 10;  // per critique
};

struct ExcludedGroup {
  std::string prompt_id;
  std::string reason;
};

struct RewardBatch {
  std::vector<RewardRecord> rewards;
  std::vector<ExcludedGroup> excluded;
};

/// Groups judgments by prompt and emits one RewardRecord per critique. A group
/// is kept only when each of its N critiques has at least min_valid_judgments
/// valid scores; log Z is taken over those N critiques. Throws ValidationError
/// for indices beyond N/M or more than 2M judgments per critique.
RewardBatch build_rewards(std::span<const JudgmentRecord> judgments, const RewardOptions& options);

}  // namespace rco
