// SPDX-License-Identifier: Apache-2.0
#include "rco/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "rco/error.hpp"
#include "rco/reward.hpp"

namespace rco {

namespace {

double log_sum_exp(std::span<const double> v) {
  double mx = -INFINITY;
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

void check_policy(const CategoricalPolicy& policy, const ToyInstance& instance) {
  if (policy.size() != instance.cus.size())
    throw DomainError("policy has " + std::to_string(policy.size()) + " logits, instance has " +
                      std::to_string(instance.cus.size()) + " critiques");
  for (double l : policy.logits)
    if (!std::isfinite(l)) throw DomainError("policy logits must be finite");
}

// Residuals log(p_i/ref_i) + log Z - cu_i/beta over the index set.
std::vector<double> residuals(const CategoricalPolicy& policy, const ToyInstance& instance,
                              const std::vector<std::size_t>& idx, double log_z) {
  const auto logp = policy.log_probabilities();
  std::vector<double> r;
  r.reserve(idx.size());
  for (std::size_t i : idx) {
    if (!std::isfinite(logp[i])) throw DomainError("policy assigns zero probability to critique " +
                                                   std::to_string(i + 1));
    r.push_back(logp[i] - std::log(instance.reference.probabilities[i]) + log_z -
                instance.cus[i] / instance.beta);
  }
  return r;
}

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> parse_numbers(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string tok;
  while (in >> tok) {
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw ParseError("'" + key + "' has non-numeric entry '" + tok + "'");
    out.push_back(x);
  }
  if (out.empty()) throw ParseError("'" + key + "' is empty");
  return out;
}

}  // namespace

std::vector<double> CategoricalPolicy::log_probabilities() const {
  const double lse = log_sum_exp(logits);
  std::vector<double> out;
  out.reserve(logits.size());
  for (double l : logits) out.push_back(l - lse);
  return out;
}

std::vector<double> CategoricalPolicy::probabilities() const {
  auto out = log_probabilities();
  for (double& x : out) x = std::exp(x);
  return out;
}

CategoricalPolicy CategoricalPolicy::from_probabilities(std::span<const double> p) {
  CategoricalPolicy out;
  for (double x : p) {
    if (!(x > 0.0)) throw DomainError("probabilities must be strictly positive");
    out.logits.push_back(std::log(x));
  }
  return out;
}

ReferencePolicy ReferencePolicy::uniform(std::size_t k) {
  if (k == 0) throw DomainError("reference needs at least one critique");
  return {std::vector<double>(k, 1.0 / static_cast<double>(k))};
}

void validate(const ToyInstance& instance) {
  const std::size_t k = instance.cus.size();
  if (k == 0) throw ValidationError("instance needs at least one critique");
  if (instance.reference.probabilities.size() != k)
    throw ValidationError("reference has " + std::to_string(instance.reference.probabilities.size()) +
                          " entries, cus has " + std::to_string(k));
  double sum = 0.0;
  for (double p : instance.reference.probabilities) {
    if (!(p > 0.0) || !std::isfinite(p)) throw DomainError("reference must have full support");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("reference must sum to 1");
  for (double c : instance.cus)
    if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("cus must lie in [0, 1]");
  if (!(instance.beta > 0.0) || !std::isfinite(instance.beta))
    throw DomainError("beta must be positive");
  if (instance.sampled_indices) {
    const auto& s = *instance.sampled_indices;
    if (s.empty()) throw ValidationError("sampled_indices must not be empty");
    std::set<int> seen;
    for (int i : s) {
      if (i < 1 || static_cast<std::size_t>(i) > k)
        throw ValidationError("sampled index " + std::to_string(i) + " outside 1.." + std::to_string(k));
      if (!seen.insert(i).second) throw ValidationError("sampled index " + std::to_string(i) + " repeated");
    }
  }
}

std::vector<std::size_t> index_set(const ToyInstance& instance) {
  std::vector<std::size_t> out;
  if (instance.sampled_indices) {
    for (int i : *instance.sampled_indices) out.push_back(static_cast<std::size_t>(i - 1));
  } else {
    out.resize(instance.cus.size());
    std::iota(out.begin(), out.end(), std::size_t{0});
  }
  return out;
}

double instance_log_partition(const ToyInstance& instance) {
  validate(instance);
  if (instance.sampled_indices) {
    std::vector<double> sub;
    for (std::size_t i : index_set(instance)) sub.push_back(instance.cus[i]);
    return log_partition(sub, instance.beta);
  }
  std::vector<double> terms;
  for (std::size_t k = 0; k < instance.cus.size(); ++k)
    terms.push_back(std::log(instance.reference.probabilities[k]) + instance.cus[k] / instance.beta);
  return log_sum_exp(terms);
}

std::vector<double> closed_form_policy(const ToyInstance& instance) {
  validate(instance);
  std::vector<double> terms;
  for (std::size_t k = 0; k < instance.cus.size(); ++k)
    terms.push_back(std::log(instance.reference.probabilities[k]) + instance.cus[k] / instance.beta);
  const double lse = log_sum_exp(terms);
  for (double& t : terms) t = std::exp(t - lse);
  return terms;
}

std::vector<double> subset_closed_form(const ToyInstance& instance) {
  const double log_z = instance_log_partition(instance);
  std::vector<double> out(instance.cus.size(), 0.0);
  for (std::size_t i : index_set(instance))
    out[i] = std::exp(std::log(instance.reference.probabilities[i]) + instance.cus[i] / instance.beta - log_z);
  return out;
}

double rco_loss(const CategoricalPolicy& policy, const ToyInstance& instance) {
  check_policy(policy, instance);
  const auto idx = index_set(instance);
  const auto r = residuals(policy, instance, idx, instance_log_partition(instance));
  double s = 0.0;
  for (double x : r) s += x * x;
  return s / (2.0 * static_cast<double>(idx.size()));
}

std::vector<double> rco_grad(const CategoricalPolicy& policy, const ToyInstance& instance) {
  check_policy(policy, instance);
  const auto idx = index_set(instance);
  const auto r = residuals(policy, instance, idx, instance_log_partition(instance));
  const auto p = policy.probabilities();
  const double n = static_cast<double>(idx.size());
  const double rsum = std::accumulate(r.begin(), r.end(), 0.0);
  std::vector<double> g(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) g[j] = -p[j] * rsum / n;
  for (std::size_t a = 0; a < idx.size(); ++a) g[idx[a]] += r[a] / n;
  return g;
}

std::string_view to_string(FitStatus s) {
  switch (s) {
    case FitStatus::converged: return "converged";
    case FitStatus::max_steps: return "max_steps";
    case FitStatus::diverged: return "diverged";
  }
  return "max_steps";
}

FitResult fit(const ToyInstance& instance, const CategoricalPolicy& init, const FitOptions& options) {
  if (!(options.learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  if (options.max_steps < 0) throw DomainError("max steps must be non-negative");
  validate(instance);
  check_policy(init, instance);

  FitResult out{init, {}};
  auto& rep = out.report;
  double loss = rco_loss(out.policy, instance);
  rep.initial_loss = loss;
  double best = loss;
  int above = 0;
  rep.status = FitStatus::max_steps;
  for (;;) {
    const auto g = rco_grad(out.policy, instance);
    rep.grad_norm = l2(g);
    if (!std::isfinite(loss) || !std::isfinite(rep.grad_norm)) {
      rep.status = FitStatus::diverged;
      break;
    }
    if (rep.grad_norm < options.tolerance) {
      rep.status = FitStatus::converged;
      break;
    }
    if (rep.steps >= options.max_steps) break;
    for (std::size_t j = 0; j < g.size(); ++j) out.policy.logits[j] -= options.learning_rate * g[j];
    ++rep.steps;
    bool finite = std::all_of(out.policy.logits.begin(), out.policy.logits.end(),
                              [](double l) { return std::isfinite(l); });
    loss = finite ? rco_loss(out.policy, instance) : INFINITY;
    if (loss <= best) {
      best = loss;
      above = 0;
    } else if (++above > options.patience || !finite) {
      rep.status = FitStatus::diverged;
      break;
    }
  }
  rep.final_loss = loss;

  const auto p = out.policy.probabilities();
  if (!instance.sampled_indices) {
    rep.kl_to_closed_form = kl_divergence(p, closed_form_policy(instance));
  } else {
    const auto q = subset_closed_form(instance);
    double worst = 0.0;
    for (std::size_t i : index_set(instance)) worst = std::max(worst, std::abs(std::log(p[i]) - std::log(q[i])));
    rep.subset_max_log_error = worst;
  }
  return out;
}

double dpo_loss(const CategoricalPolicy& policy, const ReferencePolicy& reference,
                std::span<const DpcoPair> pairs, double beta) {
  if (pairs.empty()) throw DomainError("dpo loss needs at least one pair");
  if (policy.size() != reference.probabilities.size())
    throw DomainError("policy and reference sizes differ");
  const auto logp = policy.log_probabilities();
  const int k = static_cast<int>(policy.size());
  double total = 0.0;
  for (const auto& pair : pairs) {
    for (int i : {pair.chosen_index, pair.rejected_index})
      if (i < 1 || i > k) throw DomainError("pair index " + std::to_string(i) + " outside 1.." + std::to_string(k));
    const auto w = static_cast<std::size_t>(pair.chosen_index - 1);
    const auto l = static_cast<std::size_t>(pair.rejected_index - 1);
    const double margin = (logp[w] - std::log(reference.probabilities[w])) -
                          (logp[l] - std::log(reference.probabilities[l]));
    // -log sigmoid(z) = softplus(-z)
    const double z = -beta * margin;
    total += z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }
  return total / static_cast<double>(pairs.size());
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("kl: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (!(q[i] > 0.0)) return INFINITY;
    s += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return s;
}

ToyInstance parse_toy_instance(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    if (key != "reference" && key != "cus" && key != "beta" && key != "sampled")
      throw ParseError("unknown key '" + key + "'", lineno);
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second)
      throw ParseError("repeated key '" + key + "'", lineno);
  }
  for (const char* k : {"cus", "beta"})
    if (!kv.count(k)) throw ParseError(std::string("missing key '") + k + "'");

  ToyInstance inst;
  inst.cus = parse_numbers("cus", kv["cus"]);
  const auto beta = parse_numbers("beta", kv["beta"]);
  if (beta.size() != 1) throw ParseError("'beta' must be a single number");
  inst.beta = beta[0];
  if (!kv.count("reference") || kv["reference"] == "uniform")
    inst.reference = ReferencePolicy::uniform(inst.cus.size());
  else
    inst.reference.probabilities = parse_numbers("reference", kv["reference"]);
  if (kv.count("sampled")) {
    std::vector<int> idx;
    for (double x : parse_numbers("sampled", kv["sampled"])) {
      if (x != std::floor(x)) throw ParseError("'sampled' entries must be integers");
      idx.push_back(static_cast<int>(x));
    }
    inst.sampled_indices = std::move(idx);
  }
  validate(inst);
  return inst;
}

std::vector<std::pair<std::string, ToyInstance>> instances_from_rewards(
    std::span<const RewardRecord> rewards, double beta) {
  std::map<std::string, std::vector<const RewardRecord*>> groups;
  for (const auto& r : rewards) groups[r.prompt_id].push_back(&r);
  std::vector<std::pair<std::string, ToyInstance>> out;
  for (auto& [id, recs] : groups) {
    std::sort(recs.begin(), recs.end(),
              [](auto* a, auto* b) { return a->critique_index < b->critique_index; });
    ToyInstance inst;
    inst.beta = beta;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const auto& r = *recs[i];
      if (r.critique_index != static_cast<int>(i + 1))
        throw ValidationError("rewards for " + id + " do not cover critiques 1.." +
                              std::to_string(recs.size()));
      if (std::abs(r.target - (r.cu / beta - r.log_z)) > 1e-9 * std::max(1.0, std::abs(r.target)))
        throw ValidationError("reward target for " + id + " critique " + std::to_string(r.critique_index) +
                              " disagrees with beta " + std::to_string(beta));
      inst.cus.push_back(r.cu);
    }
    inst.reference = ReferencePolicy::uniform(inst.cus.size());
    validate(inst);
    out.emplace_back(id, std::move(inst));
  }
  return out;
}

}  // namespace rco
