// SPDX-License-Identifier: Apache-2.0
//
// Shared domain types, run configuration and dataset I/O.

#ifndef GHPO_CORE_HPP_
#define GHPO_CORE_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ghpo {

/// Raised for malformed input files. Carries the 1-based line (or row) number
/// when one applies; 0 means "whole file".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised by validate_config with every violated bound listed in what().
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A verifiable task: query text, ground-truth solution trace and answer.
struct Problem {
  std::string id;
  std::string statement;
  std::string solution_trace;
  std::string answer;
  // Dataset metadata only. The training controller never reads it.
  std::optional<int> difficulty_level;

  bool operator==(const Problem&) const = default;
};

/// The rendered query q* for one problem at one hint ratio.
struct PromptSpec {
  std::string problem_id;
  double hint_ratio = 0.0;
  std::string statement;
  std::string hint;  // empty when hint_ratio == 0
  std::string rendered_text;

  bool operator==(const PromptSpec&) const = default;
};

/// One sampled response o_i together with its sampling-time log-probabilities.
struct Rollout {
  PromptSpec prompt;
  std::vector<int> token_ids;
  std::string text;
  std::vector<double> logprob_old;

  std::size_t length() const noexcept { return token_ids.size(); }
};

struct RewardBreakdown {
  int accuracy = 0;
  int format = 0;
  double combined = 0.0;

  bool operator==(const RewardBreakdown&) const = default;
};

/// Per-query refinement stage. Stage 0 is the unhinted prompt; stage k >= 1
/// uses omega = schedule[k - 1].
struct HintState {
  int stage = 0;
  double omega = 0.0;
  bool exhausted = false;

  bool operator==(const HintState&) const = default;
};

/// G rollouts of one query plus their rewards: the unit of advantage
/// normalization.
struct GroupSample {
  std::string problem_id;
  HintState hint_state;
  std::vector<Rollout> rollouts;
  std::vector<RewardBreakdown> rewards;

  std::size_t size() const noexcept { return rollouts.size(); }
};

enum class EscalationMode { kWithinStep, kAcrossEpochs };
enum class Algorithm { kGrpo, kGhpo };
enum class PolicyKind { kSim, kSoftmax };

/// Every tunable of a run. Field names match the keys of the config file.
struct TrainConfig {
  int G = 8;
  int batch_size = 16;
  int grad_accum_steps = 1;
  double lr0 = 1e-6;
  double warmup_frac = 0.1;
  std::int64_t total_steps = 500;
  double temperature = 1.0;
  int max_tokens = 24;
  double eps_norm = 1e-4;
  double eps_clip = 0.2;
  double beta_kl = 0.0;
  double w_acc = 2.0;
  double w_fmt = 1.0;
  std::vector<double> omega_schedule{0.25, 0.5, 0.75};
  std::int64_t cold_start_N = 20;
  EscalationMode escalation_mode = EscalationMode::kWithinStep;
  std::uint64_t seed = 0;

  Algorithm algorithm = Algorithm::kGhpo;
  PolicyKind policy = PolicyKind::kSim;
  bool hint_snap_whitespace = false;
  double weight_decay = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t checkpoint_every = 50;
  int threads = 1;

  // Simulation policy.
  double sim_capability = 0.0;
  double sim_alpha = 1.0;
  double sim_gamma = 8.0;

  // Toy softmax policy.
  int softmax_buckets = 16;
  double softmax_prior = 4.0;

  // Synthetic dataset used when no dataset file is given.
  int synth_problems = 200;
  double synth_hard_fraction = 0.6;
  double synth_easy_min = -2.0;
  double synth_easy_max = 0.0;
  double synth_hard_min = 2.0;
  double synth_hard_max = 4.0;

  bool operator==(const TrainConfig&) const = default;
};

/// One training step's monitoring record.
struct RunMetrics {
  std::int64_t step = 0;
  double lr = 0.0;
  double mean_format_reward = 0.0;
  double mean_accuracy_reward = 0.0;
  double mean_response_length = 0.0;
  double grad_norm = 0.0;
  // Fraction of queries whose stage-0 group had all-zero accuracy.
  double difficult_fraction = 0.0;
  // Group re-samplings beyond the first, summed over the batch.
  std::int64_t resample_count = 0;
  // Fraction of final (trained-on) groups with all-zero accuracy.
  double zero_accuracy_fraction = 0.0;
  std::int64_t skipped_rollouts = 0;
  bool detection_active = false;

  bool operator==(const RunMetrics&) const = default;
};

/// Returns cfg unchanged when every invariant holds; throws ConfigError with
/// one "field: reason" entry per violation otherwise.
const TrainConfig& validate_config(const TrainConfig& cfg);

/// Flat `key = value` text. Lists are comma separated; `#` starts a comment.
TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::filesystem::path& path);
/// Sets one field by its config-file key. Throws std::invalid_argument for
/// an unknown key or unparsable value.
void set_config_value(TrainConfig& cfg, const std::string& key,
                      const std::string& value);
void write_config(std::ostream& out, const TrainConfig& cfg);

std::string to_string(EscalationMode mode);
std::string to_string(Algorithm algo);
std::string to_string(PolicyKind kind);

/// JSON-lines dataset: id, statement, solution, answer and optional
/// difficulty_level per line.
std::vector<Problem> parse_dataset(std::istream& in);
std::vector<Problem> load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const std::vector<Problem>& problems);
void save_dataset(const std::filesystem::path& path,
                  const std::vector<Problem>& problems);

}  // namespace ghpo

#endif  // GHPO_CORE_HPP_
