// SPDX-License-Identifier: Apache-2.0

#include "ghpo/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "ghpo/verifier.hpp"
#include "parallel.hpp"

namespace ghpo {
namespace {

constexpr std::string_view kCheckpointMagic = "GHPOCKPT";
constexpr std::uint32_t kCheckpointVersion = 1;

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double mean_of(double sum, std::size_t n) {
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

double cosine_lr(std::int64_t step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps)
    throw std::out_of_range("cosine_lr: step " + std::to_string(step) +
                            " outside [0, " + std::to_string(cfg.total_steps) +
                            "]");
  if (cfg.total_steps == 0) return 0.0;
  const std::int64_t warmup = std::llround(
      cfg.warmup_frac * static_cast<double>(cfg.total_steps));
  if (step < warmup)
    return cfg.lr0 * (static_cast<double>(step) / static_cast<double>(warmup));
  const std::int64_t decay = cfg.total_steps - warmup;
  if (decay == 0) return 0.0;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(decay);
  return cfg.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState OptimizerState::for_params(std::size_t n,
                                          const TrainConfig& cfg) {
  OptimizerState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.beta1 = cfg.adam_beta1;
  s.beta2 = cfg.adam_beta2;
  s.eps = cfg.adam_eps;
  s.weight_decay = cfg.weight_decay;
  return s;
}

void adamw_update(std::span<double> params, std::span<const double> loss_grad,
                  OptimizerState& state, double lr) {
  if (params.size() != loss_grad.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw std::invalid_argument("adamw_update: shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = loss_grad[i];
    params[i] -= lr * state.weight_decay * params[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

TrainerState TrainerState::fresh(std::unique_ptr<Policy> policy,
                                 const TrainConfig& cfg) {
  TrainerState s;
  s.ref = policy->clone();
  s.opt = OptimizerState::for_params(policy->parameters().size(), cfg);
  s.policy = std::move(policy);
  return s;
}

TrainerState TrainerState::clone() const {
  TrainerState s;
  s.policy = policy ? policy->clone() : nullptr;
  s.ref = ref ? ref->clone() : nullptr;
  s.opt = opt;
  s.hint_states = hint_states;
  s.step = step;
  return s;
}

RunMetrics train_step(std::span<const Problem> batch, TrainerState& state,
                      const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const std::int64_t step = state.step;
  const Policy& policy = *state.policy;

  // Sampling and scoring; queries are independent.
  std::vector<RefinementOutcome> outcomes(batch.size());
  detail::parallel_for(batch.size(), cfg.threads, [&](std::size_t j) {
    const Problem& problem = batch[j];
    if (cfg.algorithm == Algorithm::kGrpo) {
      const PromptSpec prompt = render_prompt(problem, std::nullopt);
      outcomes[j].final_group =
          sample_group(problem, prompt, HintState{}, policy, cfg, step, j, 0);
      return;
    }
    HintState persisted;
    if (cfg.escalation_mode == EscalationMode::kAcrossEpochs) {
      if (const auto it = state.hint_states.find(problem.id);
          it != state.hint_states.end())
        persisted = it->second;
    }
    outcomes[j] = refine_and_resample(problem, policy, cfg, step, j, persisted);
  });

  RunMetrics metrics;
  metrics.step = step;
  metrics.lr = cosine_lr(std::min(step, cfg.total_steps), cfg);

  std::vector<GroupSample> groups;
  groups.reserve(outcomes.size());
  double fmt_sum = 0, acc_sum = 0, len_sum = 0;
  std::size_t rollouts = 0, difficult = 0, zero_acc = 0;
  for (auto& o : outcomes) {
    if (o.was_difficult) ++difficult;
    metrics.detection_active |= o.detection_ran;
    metrics.resample_count += o.resample_count;
    bool any_correct = false;
    for (std::size_t i = 0; i < o.final_group.size(); ++i) {
      fmt_sum += o.final_group.rewards[i].format;
      acc_sum += o.final_group.rewards[i].accuracy;
      len_sum += static_cast<double>(o.final_group.rollouts[i].length());
      any_correct |= o.final_group.rewards[i].accuracy != 0;
      ++rollouts;
    }
    if (!any_correct) ++zero_acc;
    groups.push_back(std::move(o.final_group));
  }
  if (cfg.algorithm == Algorithm::kGhpo &&
      cfg.escalation_mode == EscalationMode::kAcrossEpochs) {
    for (std::size_t j = 0; j < batch.size(); ++j)
      if (outcomes[j].detection_ran)
        state.hint_states[batch[j].id] = outcomes[j].hint_state;
  }
  metrics.mean_format_reward = mean_of(fmt_sum, rollouts);
  metrics.mean_accuracy_reward = mean_of(acc_sum, rollouts);
  metrics.mean_response_length = mean_of(len_sum, rollouts);
  metrics.difficult_fraction = mean_of(static_cast<double>(difficult), batch.size());
  metrics.zero_accuracy_fraction =
      mean_of(static_cast<double>(zero_acc), batch.size());

  // Micro-batches: each one is an AdamW update on the current parameters,
  // so later micro-batches see ratios away from 1.
  const std::size_t n = groups.size();
  const std::size_t micro =
      std::min(n, static_cast<std::size_t>(cfg.grad_accum_steps));
  const Policy* ref = cfg.beta_kl > 0 ? state.ref.get() : nullptr;
  std::vector<double> accumulated(state.policy->parameters().size(), 0.0);
  std::vector<double> loss_grad(accumulated.size());
  for (std::size_t m = 0; m < micro; ++m) {
    const std::size_t lo = n * m / micro, hi = n * (m + 1) / micro;
    const LossReport report = assemble_loss(
        std::span<const GroupSample>(groups).subspan(lo, hi - lo),
        *state.policy, ref, cfg);
    metrics.skipped_rollouts += static_cast<std::int64_t>(report.skipped_rollouts);
    for (std::size_t i = 0; i < accumulated.size(); ++i) {
      accumulated[i] += report.gradient[i];
      loss_grad[i] = -report.gradient[i];
    }
    adamw_update(state.policy->parameters(), loss_grad, state.opt, metrics.lr);
  }
  double sq = 0.0;
  for (double& g : accumulated) {
    g /= static_cast<double>(micro);
    sq += g * g;
  }
  metrics.grad_norm = std::sqrt(sq);
  ++state.step;
  return metrics;
}

std::vector<std::size_t> batch_indices(std::int64_t step, std::size_t n,
                                       const TrainConfig& cfg) {
  if (n == 0) throw std::invalid_argument("batch_indices: empty dataset");
  std::vector<std::size_t> out;
  const auto b = static_cast<std::uint64_t>(cfg.batch_size);
  const std::uint64_t first = static_cast<std::uint64_t>(step) * b;
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> perm;
  for (std::uint64_t p = first; p < first + b; ++p) {
    const std::uint64_t epoch = p / n;
    if (epoch != cached_epoch) {
      perm.resize(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      RngStream rng(cfg.seed,
                    {static_cast<std::uint64_t>(StreamPurpose::kShuffle), epoch});
      for (std::size_t i = n; i > 1; --i)
        std::swap(perm[i - 1], perm[rng.below(i)]);
      cached_epoch = epoch;
    }
    out.push_back(perm[p % n]);
  }
  return out;
}

// --- metrics files -------------------------------------------------------------

std::string metrics_csv_row(const RunMetrics& m) {
  return std::to_string(m.step) + "," + fmt(m.lr) + "," +
         fmt(m.mean_format_reward) + "," + fmt(m.mean_accuracy_reward) + "," +
         fmt(m.mean_response_length) + "," + fmt(m.grad_norm) + "," +
         fmt(m.difficult_fraction) + "," + std::to_string(m.resample_count);
}

std::string metrics_json_line(const RunMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["lr"] = m.lr;
  j["format_reward"] = m.mean_format_reward;
  j["accuracy_reward"] = m.mean_accuracy_reward;
  j["mean_resp_len"] = m.mean_response_length;
  j["grad_norm"] = m.grad_norm;
  j["difficult_fraction"] = m.difficult_fraction;
  j["resample_count"] = m.resample_count;
  j["zero_accuracy_fraction"] = m.zero_accuracy_fraction;
  j["skipped_rollouts"] = m.skipped_rollouts;
  j["detection_active"] = m.detection_active;
  return j.dump();
}

std::vector<RunMetrics> parse_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("metrics: no data rows", 0);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader)
    throw ParseError("metrics row 1: unexpected header '" + line + "'", 1);
  std::vector<RunMetrics> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      return ParseError("metrics row " + std::to_string(lineno) + ": " + why,
                        lineno);
    };
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8)
      throw fail("expected 8 fields, got " + std::to_string(cells.size()));
    auto num = [&](const std::string& s) {
      double v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw fail("bad number '" + s + "'");
      return v;
    };
    auto integer = [&](const std::string& s) {
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw fail("bad integer '" + s + "'");
      return v;
    };
    RunMetrics m;
    m.step = integer(cells[0]);
    m.lr = num(cells[1]);
    m.mean_format_reward = num(cells[2]);
    m.mean_accuracy_reward = num(cells[3]);
    m.mean_response_length = num(cells[4]);
    m.grad_norm = num(cells[5]);
    m.difficult_fraction = num(cells[6]);
    m.resample_count = integer(cells[7]);
    rows.push_back(m);
  }
  if (rows.empty()) throw ParseError("metrics: no data rows", 0);
  return rows;
}

std::vector<RunMetrics> load_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics " + path.string());
  return parse_metrics_csv(in);
}

// --- checkpoints ------------------------------------------------------------------

void save_checkpoint(std::ostream& out, const TrainerState& state,
                     const TrainConfig& cfg) {
  using namespace binary;
  put_bytes(out, kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, 0);
  put_u64(out, static_cast<std::uint64_t>(state.step));
  put_u64(out, cfg.seed);
  put_u64(out, static_cast<std::uint64_t>(state.step) *
                   static_cast<std::uint64_t>(cfg.batch_size));
  save_policy(out, *state.policy);
  put_u32(out, state.ref ? 1 : 0);
  if (state.ref) save_policy(out, *state.ref);
  put_u64(out, static_cast<std::uint64_t>(state.opt.step));
  put_f64(out, state.opt.beta1);
  put_f64(out, state.opt.beta2);
  put_f64(out, state.opt.eps);
  put_f64(out, state.opt.weight_decay);
  put_u64(out, state.opt.m.size());
  for (double x : state.opt.m) put_f64(out, x);
  for (double x : state.opt.v) put_f64(out, x);
  put_u64(out, state.hint_states.size());
  for (const auto& [id, h] : state.hint_states) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    put_bytes(out, id);
    put_u32(out, static_cast<std::uint32_t>(h.stage));
    put_f64(out, h.omega);
    put_u32(out, h.exhausted ? 1 : 0);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

TrainerState load_checkpoint(std::istream& in, const TrainConfig& cfg,
                             std::shared_ptr<const DifficultyTable> difficulty) {
  using namespace binary;
  expect_magic(in, kCheckpointMagic);
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  get_u32(in);
  TrainerState s;
  s.step = static_cast<std::int64_t>(get_u64(in));
  const std::uint64_t seed = get_u64(in);
  if (seed != cfg.seed)
    throw std::runtime_error("checkpoint seed " + std::to_string(seed) +
                             " does not match config seed " +
                             std::to_string(cfg.seed));
  get_u64(in);  // rng cursor, implied by step
  s.policy = load_policy(in, difficulty);
  if (get_u32(in)) s.ref = load_policy(in, difficulty);
  s.opt.step = static_cast<std::int64_t>(get_u64(in));
  s.opt.beta1 = get_f64(in);
  s.opt.beta2 = get_f64(in);
  s.opt.eps = get_f64(in);
  s.opt.weight_decay = get_f64(in);
  const std::uint64_t n = get_u64(in);
  if (n != s.policy->parameters().size())
    throw std::runtime_error("checkpoint optimizer shape mismatch");
  s.opt.m.resize(n);
  s.opt.v.resize(n);
  for (double& x : s.opt.m) x = get_f64(in);
  for (double& x : s.opt.v) x = get_f64(in);
  const std::uint64_t hints = get_u64(in);
  for (std::uint64_t i = 0; i < hints; ++i) {
    const std::string id = get_bytes(in, get_u32(in));
    HintState h;
    h.stage = static_cast<int>(get_u32(in));
    h.omega = get_f64(in);
    h.exhausted = get_u32(in) != 0;
    s.hint_states[id] = h;
  }
  return s;
}

// --- runs ----------------------------------------------------------------------------

namespace {

class MetricsLog {
 public:
  MetricsLog(const std::filesystem::path& dir, std::int64_t resume_step) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    const auto csv_path = dir / "metrics.csv";
    const auto jsonl_path = dir / "metrics.jsonl";
    // Keep rows from before the resume point, drop anything later.
    std::vector<std::string> csv_keep, json_keep;
    if (resume_step > 0) {
      csv_keep = kept_lines(csv_path, resume_step, true);
      json_keep = kept_lines(jsonl_path, resume_step, false);
    }
    csv_.open(csv_path, std::ios::trunc);
    json_.open(jsonl_path, std::ios::trunc);
    if (!csv_ || !json_)
      throw std::runtime_error("cannot write metrics under " + dir.string());
    csv_ << kMetricsHeader << "\n";
    for (const auto& l : csv_keep) csv_ << l << "\n";
    for (const auto& l : json_keep) json_ << l << "\n";
    csv_.flush();
    json_.flush();
  }

  void append(const RunMetrics& m) {
    if (!csv_.is_open()) return;
    csv_ << metrics_csv_row(m) << "\n";
    json_ << metrics_json_line(m) << "\n";
    csv_.flush();
    json_.flush();
    if (!csv_ || !json_) throw std::runtime_error("failed writing metrics");
  }

  void flush() {
    if (csv_.is_open()) csv_.flush();
    if (json_.is_open()) json_.flush();
  }

 private:
  static std::vector<std::string> kept_lines(const std::filesystem::path& p,
                                             std::int64_t before, bool csv) {
    std::vector<std::string> keep;
    std::ifstream in(p);
    std::string line;
    bool header = csv;
    while (std::getline(in, line)) {
      if (header) {
        header = false;
        continue;
      }
      if (line.empty()) continue;
      std::int64_t step = -1;
      if (csv) {
        std::from_chars(line.data(), line.data() + line.size(), step);
      } else {
        step = nlohmann::json::parse(line).at("step").get<std::int64_t>();
      }
      if (step >= 0 && step < before) keep.push_back(line);
    }
    return keep;
  }

  std::ofstream csv_;
  std::ofstream json_;
};

std::filesystem::path write_checkpoint_file(const std::filesystem::path& dir,
                                            const std::string& name,
                                            const TrainerState& state,
                                            const TrainConfig& cfg) {
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  save_checkpoint(out, state, cfg);
  return path;
}

std::string step_name(std::int64_t step) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "step_%06lld.ckpt",
                static_cast<long long>(step));
  return buf;
}

}  // namespace

RunResult run_training(const std::vector<Problem>& dataset,
                       std::shared_ptr<const DifficultyTable> difficulty,
                       const TrainConfig& cfg, RunOptions opts) {
  validate_config(cfg);
  if (dataset.empty()) throw std::invalid_argument("run_training: empty dataset");

  RunResult result;
  if (opts.resume_from) {
    std::ifstream in(*opts.resume_from, std::ios::binary);
    if (!in)
      throw std::runtime_error("cannot open checkpoint " +
                               opts.resume_from->string());
    result.state = load_checkpoint(in, cfg, difficulty);
  } else {
    auto policy = opts.initial_policy ? std::move(opts.initial_policy)
                                      : make_policy(cfg, difficulty);
    result.state = TrainerState::fresh(std::move(policy), cfg);
  }

  const std::int64_t end =
      std::min(opts.stop_at.value_or(cfg.total_steps), cfg.total_steps);
  const auto ckpt_dir = opts.out_dir.empty() ? std::filesystem::path{}
                                             : opts.out_dir / "checkpoints";
  MetricsLog log(opts.out_dir, result.state.step);
  TrainerState& state = result.state;

  try {
    std::vector<Problem> batch;
    while (state.step < end) {
      batch.clear();
      for (std::size_t idx : batch_indices(state.step, dataset.size(), cfg))
        batch.push_back(dataset[idx]);
      RunMetrics m = train_step(batch, state, cfg);
      log.append(m);
      if (opts.on_step) opts.on_step(m);
      result.metrics.push_back(m);
      if (!ckpt_dir.empty() && cfg.checkpoint_every > 0 &&
          state.step % cfg.checkpoint_every == 0 && state.step < end)
        result.checkpoints.push_back(
            write_checkpoint_file(ckpt_dir, step_name(state.step), state, cfg));
    }
    if (!ckpt_dir.empty()) {
      result.checkpoints.push_back(
          write_checkpoint_file(ckpt_dir, step_name(state.step), state, cfg));
      const auto final_path = opts.out_dir / "policy.bin";
      std::ofstream out(final_path, std::ios::binary | std::ios::trunc);
      save_policy(out, *state.policy);
    }
  } catch (...) {
    log.flush();
    throw;
  }
  return result;
}

// --- evaluation --------------------------------------------------------------------

std::string to_string(EvalMode mode) {
  return mode == EvalMode::kPassAt1 ? "pass_at_1" : "avg_at_k";
}

BenchmarkResult evaluate(const Policy& policy, std::span<const Problem> problems,
                         int k, EvalMode mode, const TrainConfig& cfg,
                         std::string name) {
  if (k < 1) throw std::invalid_argument("evaluate: k must be ≥ 1");
  const int samples = mode == EvalMode::kPassAt1 ? 1 : k;
  const SamplingOptions opts{cfg.temperature, cfg.max_tokens};
  std::vector<int> correct(problems.size(), 0);
  detail::parallel_for(problems.size(), cfg.threads, [&](std::size_t i) {
    const PromptSpec prompt = render_prompt(problems[i], std::nullopt);
    for (int j = 0; j < samples; ++j) {
      RngStream rng(cfg.seed, {static_cast<std::uint64_t>(StreamPurpose::kEval),
                               i, static_cast<std::uint64_t>(j)});
      const Rollout r = policy.sample(problems[i], prompt, opts, rng);
      correct[i] += score(r.text, problems[i], cfg).accuracy;
    }
  });
  BenchmarkResult out;
  out.name = std::move(name);
  out.problems = problems.size();
  out.samples = problems.size() * static_cast<std::size_t>(samples);
  double total = 0.0;
  for (int c : correct) {
    out.correct += static_cast<std::size_t>(c);
    total += static_cast<double>(c) / samples;
  }
  out.value = mean_of(total, problems.size());
  return out;
}

}  // namespace ghpo
