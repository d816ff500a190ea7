// SPDX-License-Identifier: Apache-2.0
//
// Guided hybrid control: difficulty detection on group accuracy rewards,
// ground-truth hint extraction, hinted prompt rendering, the staged hint
// ratio schedule and the cold-start gate.

#ifndef GHPO_CONTROLLER_HPP_
#define GHPO_CONTROLLER_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ghpo/core.hpp"
#include "ghpo/policy.hpp"

namespace ghpo {

/// Sentence placed between the problem and the hint in a hinted prompt.
inline constexpr std::string_view kGuidingSentence =
    "The following text is the beginning part of the answer, which you can "
    "refer to for solving the problem:";

inline constexpr std::string_view kSystemPrompt =
    "You are a helpful AI Assistant that provides well-reasoned and detailed "
    "responses. You first think about the reasoning process as an internal "
    "monologue and then provide the user with the answer. Respond in the "
    "following format:\n"
    "<think>\n...\n<think>\n<answer>\n...\n<answer>";

/// Chat template; `{problem}` and the optional hint block are substituted by
/// render_prompt.
inline constexpr std::string_view kTemplateHead = "<|im_start|>system\n";
inline constexpr std::string_view kTemplateUser = "<|im_end|>\n<|im_start|>user\n";
inline constexpr std::string_view kTemplateTail =
    "\n<|im_end|>\n<|im_start|>assistant";

struct RefinementOutcome {
  GroupSample final_group;
  HintState hint_state;
  int stages_used = 0;
  // Group samplings after the first one.
  int resample_count = 0;
  bool was_difficult = false;
  bool detection_ran = false;
};

/// True iff every accuracy reward is 0. Throws on an empty list.
bool detect_difficult(std::span<const int> accuracy_rewards);

/// First floor(omega * n) Unicode scalar values of the trace, where n is its
/// scalar count. With snap_to_whitespace the cut moves forward to the next
/// whitespace boundary.
std::string extract_hint(std::string_view solution_trace, double omega,
                         bool snap_to_whitespace = false);

/// Renders q (no hint) or q* (statement, guiding sentence, hint). The hint
/// ratio is recorded for the policy. Throws std::invalid_argument when a
/// hint is requested for a problem with an empty solution trace.
PromptSpec render_prompt(const Problem& problem,
                         const std::optional<std::string>& hint,
                         double hint_ratio = 0.0);

/// Next stage of the schedule. Throws std::logic_error when exhausted.
HintState advance_stage(const HintState& state,
                        std::span<const double> schedule);

/// True (detection disabled) iff step_index < n.
bool cold_start_gate(std::int64_t step_index, std::int64_t n);

/// Samples and scores one group of cfg.G rollouts for `prompt`.
/// Rollout k draws from the stream (seed, rollout, step, query, stage, k).
GroupSample sample_group(const Problem& problem, const PromptSpec& prompt,
                         const HintState& state, const Policy& policy,
                         const TrainConfig& cfg, std::int64_t step,
                         std::size_t query, int stage);

/// Difficulty-aware sampling for one query at one training step.
///
/// Within-step mode: a stage-0 group is sampled; when every accuracy reward
/// is 0 the hint ratio is escalated through the schedule, resampling a full
/// group each time, until some rollout is correct or the schedule runs out.
/// Across-epochs mode: `persisted` carries the query's stage between visits
/// and at most one escalation happens per visit.
RefinementOutcome refine_and_resample(const Problem& problem,
                                      const Policy& policy,
                                      const TrainConfig& cfg,
                                      std::int64_t step_index,
                                      std::size_t query_index,
                                      const HintState& persisted = {});

}  // namespace ghpo

#endif  // GHPO_CONTROLLER_HPP_
