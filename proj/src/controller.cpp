// SPDX-License-Identifier: Apache-2.0

#include "ghpo/controller.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ghpo/verifier.hpp"

namespace ghpo {
namespace {

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

std::vector<int> accuracies(const GroupSample& group) {
  std::vector<int> acc;
  acc.reserve(group.rewards.size());
  for (const auto& r : group.rewards) acc.push_back(r.accuracy);
  return acc;
}

PromptSpec prompt_for(const Problem& problem, const HintState& state,
                      const TrainConfig& cfg) {
  if (state.stage == 0) return render_prompt(problem, std::nullopt, 0.0);
  return render_prompt(
      problem,
      extract_hint(problem.solution_trace, state.omega, cfg.hint_snap_whitespace),
      state.omega);
}

}  // namespace

bool detect_difficult(std::span<const int> accuracy_rewards) {
  if (accuracy_rewards.empty())
    throw std::invalid_argument("detect_difficult: empty reward list");
  for (int a : accuracy_rewards)
    if (a != 0) return false;
  return true;
}

std::string extract_hint(std::string_view solution_trace, double omega,
                         bool snap_to_whitespace) {
  if (!(omega >= 0.0 && omega <= 1.0))
    throw std::invalid_argument("hint ratio must lie in [0,1]");
  // Byte offset at which each scalar value starts.
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < solution_trace.size(); ++i)
    if (!is_continuation(static_cast<unsigned char>(solution_trace[i])))
      starts.push_back(i);
  const std::size_t n = starts.size();
  // The 1e-9 slack keeps decimal ratios such as 0.29 * 100 from flooring
  // one short because of binary rounding.
  auto keep = static_cast<std::size_t>(
      std::floor(omega * static_cast<double>(n) + 1e-9));
  keep = std::min(keep, n);
  if (snap_to_whitespace) {
    while (keep < n &&
           !is_ascii_space(solution_trace[starts[keep]]) && keep > 0)
      ++keep;
  }
  const std::size_t bytes = keep < n ? starts[keep] : solution_trace.size();
  return std::string(solution_trace.substr(0, bytes));
}

PromptSpec render_prompt(const Problem& problem,
                         const std::optional<std::string>& hint,
                         double hint_ratio) {
  if (hint && problem.solution_trace.empty())
    throw std::invalid_argument("hint requested for problem '" + problem.id +
                                "' without a solution trace");
  PromptSpec spec;
  spec.problem_id = problem.id;
  spec.statement = problem.statement;
  spec.hint_ratio = hint ? hint_ratio : 0.0;
  spec.hint = hint.value_or("");

  std::string text;
  text += kTemplateHead;
  text += kSystemPrompt;
  text += kTemplateUser;
  text += problem.statement;
  if (hint) {
    text += "\n";
    text += kGuidingSentence;
    text += "\n";
    text += *hint;
  }
  text += kTemplateTail;
  spec.rendered_text = std::move(text);
  return spec;
}

HintState advance_stage(const HintState& state,
                        std::span<const double> schedule) {
  if (state.exhausted || state.stage < 0 ||
      static_cast<std::size_t>(state.stage) >= schedule.size())
    throw std::logic_error("advance_stage: hint schedule exhausted");
  HintState next;
  next.stage = state.stage + 1;
  next.omega = schedule[static_cast<std::size_t>(state.stage)];
  next.exhausted = static_cast<std::size_t>(next.stage) == schedule.size();
  return next;
}

bool cold_start_gate(std::int64_t step_index, std::int64_t n) {
  if (step_index < 0) throw std::invalid_argument("step index must be ≥ 0");
  return step_index < n;
}

GroupSample sample_group(const Problem& problem, const PromptSpec& prompt,
                         const HintState& state, const Policy& policy,
                         const TrainConfig& cfg, std::int64_t step,
                         std::size_t query, int stage) {
  GroupSample group;
  group.problem_id = problem.id;
  group.hint_state = state;
  const SamplingOptions opts{cfg.temperature, cfg.max_tokens};
  for (int k = 0; k < cfg.G; ++k) {
    RngStream rng(cfg.seed,
                  {static_cast<std::uint64_t>(StreamPurpose::kRollout),
                   static_cast<std::uint64_t>(step), query,
                   static_cast<std::uint64_t>(stage),
                   static_cast<std::uint64_t>(k)});
    Rollout r = policy.sample(problem, prompt, opts, rng);
    group.rewards.push_back(score(r.text, problem, cfg));
    group.rollouts.push_back(std::move(r));
  }
  return group;
}

RefinementOutcome refine_and_resample(const Problem& problem,
                                      const Policy& policy,
                                      const TrainConfig& cfg,
                                      std::int64_t step_index,
                                      std::size_t query_index,
                                      const HintState& persisted) {
  const std::span<const double> schedule = cfg.omega_schedule;
  RefinementOutcome out;
  const bool within = cfg.escalation_mode == EscalationMode::kWithinStep;

  HintState state = within ? HintState{} : persisted;
  if (static_cast<std::size_t>(state.stage) > schedule.size())
    throw std::invalid_argument("persisted hint stage beyond schedule");

  // Cold start or no schedule: plain GRPO sampling at the original prompt.
  if (cold_start_gate(step_index, cfg.cold_start_N) || schedule.empty()) {
    const HintState unhinted{};
    out.final_group = sample_group(problem, prompt_for(problem, unhinted, cfg),
                                   unhinted, policy, cfg, step_index,
                                   query_index, 0);
    out.hint_state = within ? unhinted : persisted;
    return out;
  }

  out.detection_ran = true;
  GroupSample group =
      sample_group(problem, prompt_for(problem, state, cfg), state, policy, cfg,
                   step_index, query_index, state.stage);
  bool difficult = detect_difficult(accuracies(group));
  out.was_difficult = difficult || state.stage > 0;

  // Within a step escalate until success or exhaustion; across epochs
  // escalate at most once per visit.
  const int max_escalations = within ? static_cast<int>(schedule.size()) : 1;
  int escalations = 0;
  while (difficult && escalations < max_escalations &&
         static_cast<std::size_t>(state.stage) < schedule.size()) {
    state = advance_stage(state, schedule);
    group = sample_group(problem, prompt_for(problem, state, cfg), state,
                         policy, cfg, step_index, query_index, state.stage);
    difficult = detect_difficult(accuracies(group));
    ++escalations;
  }
  state.exhausted =
      static_cast<std::size_t>(state.stage) == schedule.size() && difficult;
  group.hint_state = state;

  out.final_group = std::move(group);
  out.hint_state = state;
  out.stages_used = state.stage;
  out.resample_count = escalations;
  return out;
}

}  // namespace ghpo
