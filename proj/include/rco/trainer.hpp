// SPDX-License-Identifier: Apache-2.0
//
// Categorical stand-in for the critic: a softmax policy over an enumerable
// critique set, trained on the squared log-ratio residual and checked against
// the closed-form optimum. Index vectors (sampled subsets, DPCO pairs) are
// 1-based like critique indices on disk.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rco/types.hpp"

namespace rco {

struct CategoricalPolicy {
  std::vector<double> logits;

  std::vector<double> log_probabilities() const;
  std::vector<double> probabilities() const;
  std::size_t size() const noexcept { return logits.size(); }

  /// Logits equal to log(p). Throws DomainError for non-positive entries.
  static CategoricalPolicy from_probabilities(std::span<const double> p);
};

struct ReferencePolicy {
  std::vector<double> probabilities;

  static ReferencePolicy uniform(std::size_t k);
};

struct ToyInstance {
  ReferencePolicy reference;
  std::vector<double> cus;
  double beta = 0.1;
  std::optional<std::vector<int>> sampled_indices;  // 1-based, distinct
};

/// Throws ValidationError/DomainError for size mismatches, a reference that is
/// not a positive distribution, cus outside [0,1], beta <= 0, or bad indices.
void validate(const ToyInstance& instance);

/// Indices entering the loss (0-based): the sampled subset or all K.
std::vector<std::size_t> index_set(const ToyInstance& instance);

/// log Z for the loss. Full set: log sum_k ref_k exp(cu_k/beta), the exact
/// normalizer. Subset: log of the sample mean of exp(cu_i/beta) over it.
double instance_log_partition(const ToyInstance& instance);

/// p*_k proportional to ref_k exp(cu_k/beta), over all K.
std::vector<double> closed_form_policy(const ToyInstance& instance);

/// ref_i exp(cu_i/beta) / Z for the indices the loss sees (0 elsewhere). For
/// the full set this is the closed form.
std::vector<double> subset_closed_form(const ToyInstance& instance);

/// (1/2N) sum_i (log(p_i/ref_i) + log Z - cu_i/beta)^2 over the index set.
double rco_loss(const CategoricalPolicy& policy, const ToyInstance& instance);

/// Gradient of rco_loss with respect to the logits.
std::vector<double> rco_grad(const CategoricalPolicy& policy, const ToyInstance& instance);

struct FitOptions {
  double learning_rate = 0.5;
  int max_steps = 100000;
  double tolerance = 1e-10;  // on the Euclidean gradient norm
  int patience = 1000;       // steps above the best loss before giving up
};

enum class FitStatus { converged, max_steps, diverged };
std::string_view to_string(FitStatus s);

struct FitReport {
  FitStatus status = FitStatus::max_steps;
  int steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double grad_norm = 0.0;
  // KL(fitted || closed form) on the full index set; max |log p_i - log q_i|
  // against the subset oracle otherwise.
  std::optional<double> kl_to_closed_form;
  std::optional<double> subset_max_log_error;
};

struct FitResult {
  CategoricalPolicy policy;
  FitReport report;
};

/// Plain gradient descent from `init`. Throws DomainError when the learning
/// rate is not positive or sizes disagree.
FitResult fit(const ToyInstance& instance, const CategoricalPolicy& init, const FitOptions& options);

/// Mean over pairs of -log sigmoid(beta * (log-ratio of chosen - log-ratio of
/// rejected)). Throws DomainError for an empty list or out-of-range indices.
double dpo_loss(const CategoricalPolicy& policy, const ReferencePolicy& reference,
                std::span<const DpcoPair> pairs, double beta);

/// KL(p || q) = sum p log(p/q); terms with p = 0 contribute 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Parses a `key = value` fixture with keys reference, cus (space separated),
/// beta and optional sampled. `reference = uniform` is accepted.
ToyInstance parse_toy_instance(std::string_view text);

/// One full-set instance per prompt group of a reward file: uniform reference,
/// cus from the records. Throws ValidationError when a stored target disagrees
/// with cu/beta - log_z or critique indices are not 1..N.
std::vector<std::pair<std::string, ToyInstance>> instances_from_rewards(
    std::span<const RewardRecord> rewards, double beta);

}  // namespace rco
