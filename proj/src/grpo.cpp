// SPDX-License-Identifier: Apache-2.0

#include "ghpo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "parallel.hpp"

namespace ghpo {

AdvantageSet group_advantages(std::span<const double> rewards,
                              double eps_norm) {
  if (rewards.size() < 2)
    throw std::invalid_argument("group too small: need at least 2 rewards");
  if (!(eps_norm > 0)) throw std::invalid_argument("eps_norm must be > 0");

  const auto g = static_cast<double>(rewards.size());
  AdvantageSet out;
  // Rounding in the mean must not turn a flat group into a nonzero signal.
  if (std::all_of(rewards.begin(), rewards.end(),
                  [&](double r) { return r == rewards.front(); })) {
    out.mean = rewards.front();
    out.advantages.assign(rewards.size(), 0.0);
    return out;
  }
  detail::CompensatedSum sum;
  for (double r : rewards) sum.add(r);
  out.mean = sum.value() / g;
  detail::CompensatedSum sq;
  for (double r : rewards) sq.add((r - out.mean) * (r - out.mean));
  out.stddev = std::sqrt(sq.value() / g);

  out.advantages.reserve(rewards.size());
  for (double r : rewards)
    out.advantages.push_back((r - out.mean) / (out.stddev + eps_norm));
  return out;
}

std::vector<double> prob_ratio(std::span<const double> logprob_new,
                               std::span<const double> logprob_old) {
  if (logprob_new.size() != logprob_old.size())
    throw std::invalid_argument("prob_ratio: length mismatch");
  std::vector<double> r(logprob_new.size());
  for (std::size_t t = 0; t < r.size(); ++t)
    r[t] = std::exp(logprob_new[t] - logprob_old[t]);
  return r;
}

double clipped_token_term(double ratio, double advantage, double eps_clip) {
  const double clipped =
      std::clamp(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * advantage;
  return std::min(ratio * advantage, clipped);
}

bool clipped_token_term_active(double ratio, double advantage,
                               double eps_clip) {
  const double clipped =
      std::clamp(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * advantage;
  return ratio * advantage <= clipped;
}

double categorical_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw std::invalid_argument("categorical_kl: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) kl += p[i] * std::log(p[i] / q[i]);
  return kl;
}

double kl_term(const Policy& policy, const Policy& ref,
               std::span<const Rollout> rollouts, double temperature) {
  detail::CompensatedSum sum;
  std::size_t states = 0;
  for (const auto& r : rollouts) {
    for (double kl :
         policy.state_kls(ref, r.prompt, r.token_ids, temperature))
      sum.add(kl);
    states += r.length();
  }
  return states ? sum.value() / static_cast<double>(states) : 0.0;
}

namespace {

struct GroupTerms {
  detail::CompensatedSum objective;
  detail::CompensatedSum kl;
  std::vector<double> gradient;
  std::size_t skipped = 0;
  std::size_t clipped = 0;
  std::size_t tokens = 0;
};

GroupTerms group_terms(const GroupSample& group, const Policy& policy,
                       const Policy* ref, const TrainConfig& cfg,
                       double group_scale) {
  GroupTerms out;
  out.gradient.assign(policy.parameters().size(), 0.0);
  if (group.rewards.size() != group.rollouts.size())
    throw std::invalid_argument("group has mismatched rollouts and rewards");

  std::vector<double> rewards;
  rewards.reserve(group.rewards.size());
  for (const auto& r : group.rewards) rewards.push_back(r.combined);
  const AdvantageSet adv = group_advantages(rewards, cfg.eps_norm);
  const double per_rollout =
      group_scale / static_cast<double>(group.rollouts.size());

  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    const Rollout& ro = group.rollouts[i];
    const std::size_t len = ro.length();
    if (len == 0) {
      ++out.skipped;
      continue;
    }
    if (ro.logprob_old.size() != len)
      throw std::invalid_argument("rollout is missing sampling log-probs");
    const double scale = per_rollout / static_cast<double>(len);
    const double a = adv.advantages[i];

    const auto lp_new =
        policy.token_logprobs(ro.prompt, ro.token_ids, cfg.temperature);
    const auto ratio = prob_ratio(lp_new, ro.logprob_old);
    std::vector<double> weights(len, 0.0);
    bool any_weight = false;
    for (std::size_t t = 0; t < len; ++t) {
      out.objective.add(scale * clipped_token_term(ratio[t], a, cfg.eps_clip));
      if (clipped_token_term_active(ratio[t], a, cfg.eps_clip)) {
        // d(r A)/d theta = A r d log pi / d theta
        weights[t] = scale * a * ratio[t];
        any_weight |= weights[t] != 0.0;
      } else {
        ++out.clipped;
      }
    }
    out.tokens += len;
    if (any_weight)
      policy.token_logprobs(ro.prompt, ro.token_ids, cfg.temperature, weights,
                            out.gradient);

    if (ref) {
      std::vector<double> kl_weights;
      std::span<double> kl_grad;
      if (cfg.beta_kl > 0) {
        kl_weights.assign(len, -cfg.beta_kl * scale);
        kl_grad = out.gradient;
      }
      const auto kls = policy.state_kls(*ref, ro.prompt, ro.token_ids,
                                        cfg.temperature, kl_weights, kl_grad);
      for (double kl : kls) out.kl.add(scale * kl);
    }
  }
  return out;
}

}  // namespace

LossReport assemble_loss(std::span<const GroupSample> groups,
                         const Policy& policy, const Policy* ref,
                         const TrainConfig& cfg) {
  if (cfg.beta_kl > 0 && !ref)
    throw std::invalid_argument("beta_kl > 0 requires a reference policy");
  LossReport report;
  const std::size_t n_params = policy.parameters().size();
  report.gradient.assign(n_params, 0.0);
  if (groups.empty()) return report;

  const double group_scale = 1.0 / static_cast<double>(groups.size());
  std::vector<GroupTerms> terms(groups.size());
  detail::parallel_for(groups.size(), cfg.threads, [&](std::size_t g) {
    terms[g] = group_terms(groups[g], policy, ref, cfg, group_scale);
  });

  detail::CompensatedSum objective, kl;
  for (const auto& t : terms) {
    objective.add(t.objective.value());
    kl.add(t.kl.value());
    report.skipped_rollouts += t.skipped;
    report.clipped_tokens += t.clipped;
    report.total_tokens += t.tokens;
  }
  for (std::size_t j = 0; j < n_params; ++j) {
    detail::CompensatedSum s;
    for (const auto& t : terms) s.add(t.gradient[j]);
    report.gradient[j] = s.value();
  }
  report.kl_value = kl.value();
  report.objective = objective.value() - cfg.beta_kl * report.kl_value;

  double sq = 0.0;
  for (double g : report.gradient) sq += g * g;
  report.grad_norm = std::sqrt(sq);
  return report;
}

}  // namespace ghpo
