// SPDX-License-Identifier: Apache-2.0
//
// Optimization loop: batching, micro-batched AdamW updates on a cosine
// schedule with linear warmup, metric logging, checkpointing and evaluation.

#ifndef GHPO_TRAINER_HPP_
#define GHPO_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ghpo/controller.hpp"
#include "ghpo/core.hpp"
#include "ghpo/grpo.hpp"
#include "ghpo/policy.hpp"

namespace ghpo {

/// Linear ramp 0 -> lr0 over round(warmup_frac * total_steps) steps, then
/// lr0 * (1 + cos(pi * progress)) / 2 down to 0 at total_steps.
/// Throws std::out_of_range for step outside [0, total_steps].
double cosine_lr(std::int64_t step, const TrainConfig& cfg);

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  static OptimizerState for_params(std::size_t n, const TrainConfig& cfg);
  bool operator==(const OptimizerState&) const = default;
};

/// Decoupled-weight-decay Adam step minimizing along `loss_grad`.
void adamw_update(std::span<double> params, std::span<const double> loss_grad,
                  OptimizerState& state, double lr);

using HintStateMap = std::map<std::string, HintState>;

/// Everything that evolves during a run.
struct TrainerState {
  std::unique_ptr<Policy> policy;
  std::unique_ptr<Policy> ref;  // frozen copy of the initial policy
  OptimizerState opt;
  HintStateMap hint_states;  // across-epochs escalation only
  std::int64_t step = 0;     // next step to run

  static TrainerState fresh(std::unique_ptr<Policy> policy,
                            const TrainConfig& cfg);
  TrainerState clone() const;
};

/// One optimization step on `batch` at state.step; advances state.step.
RunMetrics train_step(std::span<const Problem> batch, TrainerState& state,
                      const TrainConfig& cfg);

/// Problem indices used at `step`: consecutive slices of per-epoch seeded
/// permutations of [0, n).
std::vector<std::size_t> batch_indices(std::int64_t step, std::size_t n,
                                       const TrainConfig& cfg);

// --- metrics files -------------------------------------------------------------

inline constexpr std::string_view kMetricsHeader =
    "step,lr,format_reward,accuracy_reward,mean_resp_len,grad_norm,"
    "difficult_fraction,resample_count";

std::string metrics_csv_row(const RunMetrics& m);
std::string metrics_json_line(const RunMetrics& m);
/// Parses a metrics CSV written by metrics_csv_row. Fields missing from the
/// CSV (zero_accuracy_fraction and friends) stay at their defaults.
std::vector<RunMetrics> parse_metrics_csv(std::istream& in);
std::vector<RunMetrics> load_metrics_csv(const std::filesystem::path& path);

// --- checkpoints ------------------------------------------------------------------
//
// Little-endian layout:
//   magic "GHPOCKPT", u32 version (1), u32 reserved
//   u64 step, u64 seed, u64 rng cursor (= step * batch_size)
//   policy block (see save_policy), u32 has_ref, [ref policy block]
//   u64 adam step, f64 beta1, f64 beta2, f64 eps, f64 weight_decay,
//   u64 n, f64 m[n], f64 v[n]
//   u64 hint count, then per entry: u32 id length, id bytes, u32 stage,
//   f64 omega, u32 exhausted

void save_checkpoint(std::ostream& out, const TrainerState& state,
                     const TrainConfig& cfg);
TrainerState load_checkpoint(std::istream& in, const TrainConfig& cfg,
                             std::shared_ptr<const DifficultyTable> difficulty);

// --- runs ----------------------------------------------------------------------------

struct RunOptions {
  std::filesystem::path out_dir;  // empty: nothing is written
  std::optional<std::filesystem::path> resume_from;
  /// Stop before this step (exclusive) instead of total_steps; a checkpoint
  /// is written at the stop point.
  std::optional<std::int64_t> stop_at;
  std::function<void(const RunMetrics&)> on_step;
  /// Initial policy; when null one is built from the config.
  std::unique_ptr<Policy> initial_policy;
};

struct RunResult {
  TrainerState state;
  std::vector<RunMetrics> metrics;  // steps run by this call
  std::vector<std::filesystem::path> checkpoints;
};

/// Writes metrics.csv / metrics.jsonl every step and checkpoints every
/// cfg.checkpoint_every steps plus at the end, under opts.out_dir.
RunResult run_training(const std::vector<Problem>& dataset,
                       std::shared_ptr<const DifficultyTable> difficulty,
                       const TrainConfig& cfg, RunOptions opts = {});

// --- evaluation --------------------------------------------------------------------

enum class EvalMode { kPassAt1, kAvgAtK };

struct BenchmarkResult {
  std::string name;
  double value = 0.0;
  std::size_t problems = 0;
  std::size_t samples = 0;
  std::size_t correct = 0;
};

struct EvalReport {
  EvalMode mode = EvalMode::kPassAt1;
  int k = 1;
  std::vector<BenchmarkResult> benchmarks;
};

/// pass@1: fraction of problems whose first sample is correct. avg@k: mean
/// over problems of (correct samples / k). Prompts never carry hints.
/// Sample j of problem i draws from the stream (seed, eval, i, j).
BenchmarkResult evaluate(const Policy& policy, std::span<const Problem> problems,
                         int k, EvalMode mode, const TrainConfig& cfg,
                         std::string name = "eval");

std::string to_string(EvalMode mode);

}  // namespace ghpo

#endif  // GHPO_TRAINER_HPP_
