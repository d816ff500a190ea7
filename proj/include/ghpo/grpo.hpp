// SPDX-License-Identifier: Apache-2.0
//
// Group-relative advantages, the clipped surrogate objective, the KL penalty
// and loss/gradient assembly. GRPO and GHPO share this code: the only
// difference between them is the prompt each group was sampled from.

#ifndef GHPO_GRPO_HPP_
#define GHPO_GRPO_HPP_

#include <span>
#include <vector>

#include "ghpo/core.hpp"
#include "ghpo/policy.hpp"

namespace ghpo {

struct AdvantageSet {
  std::vector<double> advantages;  // one per rollout, shared by its tokens
  double mean = 0.0;
  double stddev = 0.0;  // population (divide by G)
};

/// A_i = (R_i - mean) / (stddev + eps_norm). Throws std::invalid_argument for
/// fewer than two rewards or eps_norm <= 0.
AdvantageSet group_advantages(std::span<const double> rewards, double eps_norm);

/// exp(logprob_new - logprob_old) per token; lengths must match.
std::vector<double> prob_ratio(std::span<const double> logprob_new,
                               std::span<const double> logprob_old);

/// min(r * A, clip(r, 1 - eps, 1 + eps) * A)
double clipped_token_term(double ratio, double advantage, double eps_clip);

/// True when the unclipped branch attains the min, i.e. the term's gradient
/// with respect to the ratio is A rather than 0.
bool clipped_token_term_active(double ratio, double advantage, double eps_clip);

/// Exact categorical KL(p || q).
double categorical_kl(std::span<const double> p, std::span<const double> q);

/// Mean over every state visited by the rollouts of
/// KL(pi_theta(.|s) || pi_ref(.|s)).
double kl_term(const Policy& policy, const Policy& ref,
               std::span<const Rollout> rollouts, double temperature = 1.0);

struct LossReport {
  double objective = 0.0;
  std::vector<double> gradient;  // d objective / d theta (ascent direction)
  double grad_norm = 0.0;
  double kl_value = 0.0;
  std::size_t skipped_rollouts = 0;  // zero-length, excluded from the sum
  std::size_t clipped_tokens = 0;
  std::size_t total_tokens = 0;
};

/// Objective of one batch of groups under the current policy:
///   J = mean_groups 1/G sum_i 1/|o_i| sum_t [clip_term(r_it, A_i) - beta KL_it]
/// Token log-probabilities are evaluated under each rollout's own prompt.
/// `ref` may be null when cfg.beta_kl == 0; kl_value is then 0. With
/// beta_kl == 0 and a reference given, kl_value is reported but contributes
/// nothing to the objective or gradient.
LossReport assemble_loss(std::span<const GroupSample> groups,
                         const Policy& policy, const Policy* ref,
                         const TrainConfig& cfg);

}  // namespace ghpo

#endif  // GHPO_GRPO_HPP_
