// SPDX-License-Identifier: Apache-2.0
//
// Token-level MDP and the two pluggable policies: a tabular softmax policy
// with exact log-probability gradients, and an analytic simulation policy
// whose success probability depends on capability, difficulty and hint ratio.

#ifndef GHPO_POLICY_HPP_
#define GHPO_POLICY_HPP_

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ghpo/core.hpp"
#include "ghpo/rng.hpp"

namespace ghpo {

/// Fixed toy vocabulary: digits, arithmetic operators, tag and box markers and
/// end-of-sequence.
class Vocab {
 public:
  static const Vocab& instance();

  std::size_t size() const noexcept { return tokens_.size(); }
  int eos() const noexcept { return eos_; }
  const std::string& token(int id) const;
  int id(std::string_view token) const;  // throws std::out_of_range

  /// Greedy longest-match tokenization; unknown characters throw.
  std::vector<int> encode(std::string_view text) const;
  /// Concatenates token strings, dropping end-of-sequence.
  std::string decode(std::span<const int> ids) const;

 private:
  Vocab();
  std::vector<std::string> tokens_;
  int eos_ = 0;
};

struct SamplingOptions {
  double temperature = 1.0;
  int max_tokens = 24;
};

/// A differentiable policy over a discrete action set.
///
/// token_logprobs and state_kls walk the states s_t visited by a given token
/// sequence. When `grad` is non-empty they also add
/// sum_t weights[t] * d/dtheta (quantity at t) into it; the policy never
/// clears `grad`.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::unique_ptr<Policy> clone() const = 0;
  virtual PolicyKind kind() const = 0;

  virtual std::span<const double> parameters() const = 0;
  virtual std::span<double> parameters() = 0;

  virtual Rollout sample(const Problem& problem, const PromptSpec& prompt,
                         const SamplingOptions& opts, RngStream& rng) const = 0;

  virtual std::vector<double> token_logprobs(
      const PromptSpec& prompt, std::span<const int> tokens,
      double temperature, std::span<const double> weights = {},
      std::span<double> grad = {}) const = 0;

  /// Exact KL(pi_theta(.|s_t) || pi_ref(.|s_t)) at each visited state.
  /// `ref` must be the same kind of policy with the same shape.
  virtual std::vector<double> state_kls(
      const Policy& ref, const PromptSpec& prompt, std::span<const int> tokens,
      double temperature, std::span<const double> weights = {},
      std::span<double> grad = {}) const = 0;
};

// --- toy softmax policy ----------------------------------------------------

/// Tabular softmax policy. The context feature of state s_t is
/// (previous token, position bucket), where the previous token is the last
/// prompt token at t = 0 (or a begin marker for an empty prompt) and the
/// bucket is min(t, buckets - 1). Logit rows are theta[feature][token].
class SoftmaxPolicy final : public Policy {
 public:
  explicit SoftmaxPolicy(int buckets = 16);

  /// Zero table plus `strength` on the tokens of a
  /// `<think>d+d=d</think><answer>\boxed{d}</answer>` scaffold at each
  /// position, so sampled responses are mostly well-formed.
  static SoftmaxPolicy with_prior(int buckets, double strength);

  std::unique_ptr<Policy> clone() const override;
  PolicyKind kind() const override { return PolicyKind::kSoftmax; }
  std::span<const double> parameters() const override { return theta_; }
  std::span<double> parameters() override { return theta_; }

  int buckets() const noexcept { return buckets_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t feature_row(int prev_token, std::size_t position) const;
  std::span<const double> logits(std::size_t row) const;

  /// Statement followed by hint, tokenized.
  std::vector<int> encode_prompt(const PromptSpec& prompt) const;

  std::vector<double> distribution(std::span<const int> prompt_tokens,
                                   std::span<const int> prefix,
                                   double temperature) const;

  Rollout sample(const Problem& problem, const PromptSpec& prompt,
                 const SamplingOptions& opts, RngStream& rng) const override;
  std::vector<double> token_logprobs(const PromptSpec& prompt,
                                     std::span<const int> tokens,
                                     double temperature,
                                     std::span<const double> weights = {},
                                     std::span<double> grad = {}) const override;
  std::vector<double> state_kls(const Policy& ref, const PromptSpec& prompt,
                                std::span<const int> tokens, double temperature,
                                std::span<const double> weights = {},
                                std::span<double> grad = {}) const override;

 private:
  std::size_t row_for(std::span<const int> prompt_tokens,
                      std::span<const int> prefix) const;

  int buckets_;
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> theta_;
};

/// Softmax of a logit row scaled by 1/temperature. Entries sum to 1.
std::vector<double> softmax(std::span<const double> logits,
                            double temperature = 1.0);

/// Next-token distribution for the state (prompt, prefix). Throws
/// std::out_of_range on token ids outside the vocabulary.
std::vector<double> token_distribution(const SoftmaxPolicy& policy,
                                       std::span<const int> prompt_tokens,
                                       std::span<const int> prefix,
                                       double temperature = 1.0);

struct LogprobGrad {
  std::vector<double> logprobs;
  std::vector<double> grad;  // d/dtheta of sum_t log pi(o_t | s_t)
};

LogprobGrad logprob_and_grad(const SoftmaxPolicy& policy,
                             const PromptSpec& prompt,
                             std::span<const int> token_ids,
                             double temperature = 1.0);

// --- simulation policy -----------------------------------------------------

struct SimPolicyParams {
  double capability = 0.0;
  double alpha = 1.0;  // difficulty sensitivity, > 0
  double gamma = 0.0;  // hint sensitivity, >= 0
};

/// logistic(alpha * (c - d) + gamma * omega)
double sim_success_prob(const SimPolicyParams& params, double difficulty,
                        double omega);

using DifficultyTable = std::unordered_map<std::string, double>;

/// Analytic surrogate policy. Each response is a single decision token
/// (1 = solved, 0 = failed) drawn with probability
/// logistic((alpha * (c - d) + gamma * omega) / temperature); only the
/// capability c is trainable. The rendered text is a well-formed response
/// carrying the gold answer on success and a wrong answer otherwise.
class SimPolicy final : public Policy {
 public:
  SimPolicy(SimPolicyParams params,
            std::shared_ptr<const DifficultyTable> difficulty);

  std::unique_ptr<Policy> clone() const override;
  PolicyKind kind() const override { return PolicyKind::kSim; }
  std::span<const double> parameters() const override {
    return {&params_.capability, 1};
  }
  std::span<double> parameters() override { return {&params_.capability, 1}; }

  const SimPolicyParams& params() const noexcept { return params_; }
  double difficulty(const std::string& problem_id) const;
  double success_prob(const PromptSpec& prompt, double temperature) const;

  Rollout sample(const Problem& problem, const PromptSpec& prompt,
                 const SamplingOptions& opts, RngStream& rng) const override;
  std::vector<double> token_logprobs(const PromptSpec& prompt,
                                     std::span<const int> tokens,
                                     double temperature,
                                     std::span<const double> weights = {},
                                     std::span<double> grad = {}) const override;
  std::vector<double> state_kls(const Policy& ref, const PromptSpec& prompt,
                                std::span<const int> tokens, double temperature,
                                std::span<const double> weights = {},
                                std::span<double> grad = {}) const override;

 private:
  double logit(const PromptSpec& prompt, double temperature) const;

  SimPolicyParams params_;
  std::shared_ptr<const DifficultyTable> difficulty_;
};

// --- synthetic verifiable tasks -------------------------------------------

struct SynthProblemSpec {
  double difficulty = 0.0;
  std::string family = "add2";  // add2 | sub2 | mul2 | add3 | chain
};

const std::vector<std::string>& synth_families();

/// Small arithmetic task whose statement, step-by-step trace and answer agree.
Problem gen_problem(const SynthProblemSpec& spec, RngStream& rng,
                    std::string id = "synth");

/// `<think>trace</think><answer>\boxed{answer}</answer>`
std::string reference_response(const Problem& problem);

struct SyntheticDataset {
  std::vector<Problem> problems;
  std::shared_ptr<const DifficultyTable> difficulty;
};

/// round(synth_hard_fraction * synth_problems) problems with difficulty drawn
/// uniformly from [synth_hard_min, synth_hard_max], the rest from the easy
/// range.
SyntheticDataset make_synthetic_dataset(const TrainConfig& cfg,
                                        std::uint64_t seed);

/// Difficulty table read from difficulty_level metadata (missing -> 0).
std::shared_ptr<const DifficultyTable> difficulty_from_metadata(
    const std::vector<Problem>& problems);

/// Fresh policy as described by cfg.
std::unique_ptr<Policy> make_policy(
    const TrainConfig& cfg, std::shared_ptr<const DifficultyTable> difficulty);

// --- checkpoints -------------------------------------------------------------
//
// Policy file layout, all integers and floats little-endian:
//   0   8  magic "GHPOPOL1"
//   8   4  u32 kind (0 = softmax, 1 = sim)
//   12  4  u32 reserved (0)
//   16  8  u64 rows
//   24  8  u64 cols
//   32  8 * rows * cols  f64 entries, row-major
// Softmax: rows = (|V| + 1) * buckets, cols = |V|, entries = theta.
// Sim: rows = 1, cols = 3, entries = (capability, alpha, gamma).

void save_policy(std::ostream& out, const Policy& policy);
/// The difficulty table is required to restore a sim policy.
std::unique_ptr<Policy> load_policy(
    std::istream& in, std::shared_ptr<const DifficultyTable> difficulty = {});

}  // namespace ghpo

#endif  // GHPO_POLICY_HPP_
