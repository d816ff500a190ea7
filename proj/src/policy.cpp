// SPDX-License-Identifier: Apache-2.0

#include "ghpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "binary_io.hpp"

namespace ghpo {
namespace {

constexpr std::string_view kPolicyMagic = "GHPOPOL1";

// log(logistic(x)), stable for large |x|.
double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_tokens(std::span<const int> tokens, std::size_t vocab_size) {
  for (int t : tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size)
      throw std::out_of_range("unknown token id " + std::to_string(t));
}

}  // namespace

// --- vocab -------------------------------------------------------------------

Vocab::Vocab() {
  for (char c = '0'; c <= '9'; ++c) tokens_.emplace_back(1, c);
  for (const char* t : {"+", "-", "*", "/", "=", "?", "(", ")", ",", "<think>",
                        "</think>", "<answer>", "</answer>", "\\boxed{", "}"})
    tokens_.emplace_back(t);
  eos_ = static_cast<int>(tokens_.size());
  tokens_.emplace_back("<eos>");
}

const Vocab& Vocab::instance() {
  static const Vocab vocab;
  return vocab;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("unknown token id " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocab::id(std::string_view token) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i] == token) return static_cast<int>(i);
  throw std::out_of_range("unknown token '" + std::string(token) + "'");
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    int best = -1;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (static_cast<int>(i) == eos_) continue;
      const auto& t = tokens_[i];
      if (t.size() > best_len && text.substr(pos, t.size()) == t) {
        best = static_cast<int>(i);
        best_len = t.size();
      }
    }
    if (best < 0)
      throw std::out_of_range("unknown token at offset " + std::to_string(pos) +
                              ": '" + std::string(text.substr(pos, 1)) + "'");
    ids.push_back(best);
    pos += best_len;
  }
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids)
    if (id != eos_) out += token(id);
  return out;
}

// --- softmax policy ----------------------------------------------------------

std::vector<double> softmax(std::span<const double> logits,
                            double temperature) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - m) / temperature);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

SoftmaxPolicy::SoftmaxPolicy(int buckets)
    : buckets_(buckets),
      rows_((Vocab::instance().size() + 1) * static_cast<std::size_t>(buckets)),
      cols_(Vocab::instance().size()),
      theta_(rows_ * cols_, 0.0) {
  if (buckets < 1) throw std::invalid_argument("softmax buckets must be ≥ 1");
}

SoftmaxPolicy SoftmaxPolicy::with_prior(int buckets, double strength) {
  SoftmaxPolicy policy(buckets);
  const Vocab& v = Vocab::instance();
  const std::vector<std::string> scaffold = {
      "<think>", "#", "+", "#", "=", "#", "</think>",
      "<answer>", "\\boxed{", "#", "}", "</answer>"};
  for (int bucket = 0; bucket < buckets; ++bucket) {
    std::vector<int> favoured;
    const auto b = static_cast<std::size_t>(bucket);
    if (b < scaffold.size() && scaffold[b] == "#") {
      for (int d = 0; d <= 9; ++d) favoured.push_back(d);
    } else if (b < scaffold.size()) {
      favoured.push_back(v.id(scaffold[b]));
    } else {
      favoured.push_back(v.eos());
    }
    for (std::size_t prev = 0; prev <= v.size(); ++prev) {
      const std::size_t row = prev * static_cast<std::size_t>(buckets) + b;
      for (int tok : favoured)
        policy.theta_[row * policy.cols_ + static_cast<std::size_t>(tok)] =
            strength;
    }
  }
  return policy;
}

std::unique_ptr<Policy> SoftmaxPolicy::clone() const {
  return std::make_unique<SoftmaxPolicy>(*this);
}

std::size_t SoftmaxPolicy::feature_row(int prev_token,
                                       std::size_t position) const {
  const std::size_t bucket =
      std::min(position, static_cast<std::size_t>(buckets_ - 1));
  return static_cast<std::size_t>(prev_token) *
             static_cast<std::size_t>(buckets_) +
         bucket;
}

std::span<const double> SoftmaxPolicy::logits(std::size_t row) const {
  return std::span<const double>(theta_).subspan(row * cols_, cols_);
}

std::vector<int> SoftmaxPolicy::encode_prompt(const PromptSpec& prompt) const {
  const Vocab& v = Vocab::instance();
  auto ids = v.encode(prompt.statement);
  const auto hint = v.encode(prompt.hint);
  ids.insert(ids.end(), hint.begin(), hint.end());
  return ids;
}

std::size_t SoftmaxPolicy::row_for(std::span<const int> prompt_tokens,
                                   std::span<const int> prefix) const {
  int prev = static_cast<int>(cols_);  // begin marker
  if (!prefix.empty())
    prev = prefix.back();
  else if (!prompt_tokens.empty())
    prev = prompt_tokens.back();
  return feature_row(prev, prefix.size());
}

std::vector<double> SoftmaxPolicy::distribution(
    std::span<const int> prompt_tokens, std::span<const int> prefix,
    double temperature) const {
  check_tokens(prompt_tokens, cols_);
  check_tokens(prefix, cols_);
  return softmax(logits(row_for(prompt_tokens, prefix)), temperature);
}

Rollout SoftmaxPolicy::sample(const Problem& /*problem*/,
                              const PromptSpec& prompt,
                              const SamplingOptions& opts,
                              RngStream& rng) const {
  const Vocab& v = Vocab::instance();
  const auto context = encode_prompt(prompt);
  Rollout r;
  r.prompt = prompt;
  for (int t = 0; t < opts.max_tokens; ++t) {
    const auto p = softmax(logits(row_for(context, r.token_ids)),
                           opts.temperature);
    const int tok = static_cast<int>(rng.categorical(p));
    r.token_ids.push_back(tok);
    r.logprob_old.push_back(std::log(p[static_cast<std::size_t>(tok)]));
    if (tok == v.eos()) break;
  }
  r.text = v.decode(r.token_ids);
  return r;
}

std::vector<double> SoftmaxPolicy::token_logprobs(
    const PromptSpec& prompt, std::span<const int> tokens, double temperature,
    std::span<const double> weights, std::span<double> grad) const {
  check_tokens(tokens, cols_);
  const auto context = encode_prompt(prompt);
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != theta_.size())
    throw std::invalid_argument("gradient buffer has wrong size");
  if (want_grad && weights.size() != tokens.size())
    throw std::invalid_argument("one weight per token required");

  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t row = row_for(context, tokens.first(t));
    const auto p = softmax(logits(row), temperature);
    const auto tok = static_cast<std::size_t>(tokens[t]);
    out[t] = std::log(p[tok]);
    if (want_grad && weights[t] != 0.0) {
      // d log p_tok / d theta_row = (onehot(tok) - p) / T
      const double w = weights[t] / temperature;
      double* g = grad.data() + row * cols_;
      for (std::size_t j = 0; j < cols_; ++j) g[j] -= w * p[j];
      g[tok] += w;
    }
  }
  return out;
}

std::vector<double> SoftmaxPolicy::state_kls(
    const Policy& ref, const PromptSpec& prompt, std::span<const int> tokens,
    double temperature, std::span<const double> weights,
    std::span<double> grad) const {
  const auto* other = dynamic_cast<const SoftmaxPolicy*>(&ref);
  if (!other || other->theta_.size() != theta_.size())
    throw std::invalid_argument("reference policy shape mismatch");
  check_tokens(tokens, cols_);
  const auto context = encode_prompt(prompt);
  const bool want_grad = !grad.empty();
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t row = row_for(context, tokens.first(t));
    const auto p = softmax(logits(row), temperature);
    const auto q = softmax(other->logits(row), temperature);
    std::vector<double> log_ratio(cols_);
    double kl = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) {
      log_ratio[j] = std::log(p[j]) - std::log(q[j]);
      kl += p[j] * log_ratio[j];
    }
    out[t] = kl;
    if (want_grad && weights[t] != 0.0) {
      // dKL/dz_j = p_j (log(p_j/q_j) - KL), z = theta_row / T
      const double w = weights[t] / temperature;
      double* g = grad.data() + row * cols_;
      for (std::size_t j = 0; j < cols_; ++j)
        g[j] += w * p[j] * (log_ratio[j] - kl);
    }
  }
  return out;
}

std::vector<double> token_distribution(const SoftmaxPolicy& policy,
                                       std::span<const int> prompt_tokens,
                                       std::span<const int> prefix,
                                       double temperature) {
  return policy.distribution(prompt_tokens, prefix, temperature);
}

LogprobGrad logprob_and_grad(const SoftmaxPolicy& policy,
                             const PromptSpec& prompt,
                             std::span<const int> token_ids,
                             double temperature) {
  LogprobGrad out;
  out.grad.assign(policy.parameters().size(), 0.0);
  const std::vector<double> ones(token_ids.size(), 1.0);
  out.logprobs =
      policy.token_logprobs(prompt, token_ids, temperature, ones, out.grad);
  return out;
}

// --- sim policy ----------------------------------------------------------------

double sim_success_prob(const SimPolicyParams& params, double difficulty,
                        double omega) {
  return sigmoid(params.alpha * (params.capability - difficulty) +
                 params.gamma * omega);
}

SimPolicy::SimPolicy(SimPolicyParams params,
                     std::shared_ptr<const DifficultyTable> difficulty)
    : params_(params), difficulty_(std::move(difficulty)) {
  if (!(params_.alpha > 0)) throw std::invalid_argument("alpha must be > 0");
  if (!(params_.gamma >= 0)) throw std::invalid_argument("gamma must be ≥ 0");
  if (!difficulty_) difficulty_ = std::make_shared<const DifficultyTable>();
}

std::unique_ptr<Policy> SimPolicy::clone() const {
  return std::make_unique<SimPolicy>(*this);
}

double SimPolicy::difficulty(const std::string& problem_id) const {
  const auto it = difficulty_->find(problem_id);
  if (it == difficulty_->end())
    throw std::out_of_range("no difficulty for problem '" + problem_id + "'");
  return it->second;
}

double SimPolicy::logit(const PromptSpec& prompt, double temperature) const {
  return (params_.alpha * (params_.capability - difficulty(prompt.problem_id)) +
          params_.gamma * prompt.hint_ratio) /
         temperature;
}

double SimPolicy::success_prob(const PromptSpec& prompt,
                               double temperature) const {
  return sigmoid(logit(prompt, temperature));
}

Rollout SimPolicy::sample(const Problem& problem, const PromptSpec& prompt,
                          const SamplingOptions& opts, RngStream& rng) const {
  Rollout r;
  r.prompt = prompt;
  if (opts.max_tokens <= 0) return r;
  const double s = logit(prompt, opts.temperature);
  const bool solved = rng.uniform() < sigmoid(s);
  r.token_ids.push_back(solved ? 1 : 0);
  r.logprob_old.push_back(solved ? log_sigmoid(s) : log_sigmoid(-s));
  if (solved) {
    r.text = reference_response(problem);
  } else {
    r.text = "<think>" + problem.statement + "</think><answer>\\boxed{" +
             problem.answer + "+1}</answer>";
  }
  return r;
}

std::vector<double> SimPolicy::token_logprobs(
    const PromptSpec& prompt, std::span<const int> tokens, double temperature,
    std::span<const double> weights, std::span<double> grad) const {
  check_tokens(tokens, 2);
  const double s = logit(prompt, temperature);
  const double p = sigmoid(s);
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const bool solved = tokens[t] == 1;
    out[t] = solved ? log_sigmoid(s) : log_sigmoid(-s);
    if (!grad.empty()) {
      const double ds = params_.alpha / temperature;
      grad[0] += weights[t] * (solved ? (1.0 - p) : -p) * ds;
    }
  }
  return out;
}

std::vector<double> SimPolicy::state_kls(const Policy& ref,
                                         const PromptSpec& prompt,
                                         std::span<const int> tokens,
                                         double temperature,
                                         std::span<const double> weights,
                                         std::span<double> grad) const {
  const auto* other = dynamic_cast<const SimPolicy*>(&ref);
  if (!other) throw std::invalid_argument("reference policy kind mismatch");
  check_tokens(tokens, 2);
  const double s = logit(prompt, temperature);
  const double s_ref = other->logit(prompt, temperature);
  const double p = sigmoid(s);
  // Bernoulli KL written with log-sigmoids to stay finite near 0 and 1.
  const double kl = p * (log_sigmoid(s) - log_sigmoid(s_ref)) +
                    (1.0 - p) * (log_sigmoid(-s) - log_sigmoid(-s_ref));
  std::vector<double> out(tokens.size(), std::max(kl, 0.0));
  if (!grad.empty()) {
    const double dkl = p * (1.0 - p) * (s - s_ref) * params_.alpha / temperature;
    for (std::size_t t = 0; t < tokens.size(); ++t) grad[0] += weights[t] * dkl;
  }
  return out;
}

// --- synthetic tasks -------------------------------------------------------------

const std::vector<std::string>& synth_families() {
  static const std::vector<std::string> families = {"add2", "sub2", "mul2",
                                                    "add3", "chain"};
  return families;
}

Problem gen_problem(const SynthProblemSpec& spec, RngStream& rng,
                    std::string id) {
  const std::int64_t hi = spec.difficulty < 1.0   ? 9
                          : spec.difficulty < 3.0 ? 99
                                                  : 999;
  auto operand = [&](std::int64_t lo) {
    return lo + static_cast<std::int64_t>(
                    rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  };
  const auto s = [](std::int64_t v) { return std::to_string(v); };

  Problem p;
  p.id = std::move(id);
  p.difficulty_level = static_cast<int>(std::lround(spec.difficulty));
  std::int64_t answer = 0;
  if (spec.family == "add2") {
    const auto a = operand(0), b = operand(0);
    answer = a + b;
    p.statement = s(a) + "+" + s(b) + "=?";
    p.solution_trace = s(a) + "+" + s(b) + "=" + s(answer);
  } else if (spec.family == "sub2") {
    auto a = operand(0), b = operand(0);
    if (a < b) std::swap(a, b);
    answer = a - b;
    p.statement = s(a) + "-" + s(b) + "=?";
    p.solution_trace = s(a) + "-" + s(b) + "=" + s(answer);
  } else if (spec.family == "mul2") {
    const auto a = operand(1), b = operand(1);
    answer = a * b;
    p.statement = s(a) + "*" + s(b) + "=?";
    p.solution_trace = s(a) + "*" + s(b) + "=" + s(answer);
  } else if (spec.family == "add3") {
    const auto a = operand(0), b = operand(0), c = operand(0);
    const auto ab = a + b;
    answer = ab + c;
    p.statement = s(a) + "+" + s(b) + "+" + s(c) + "=?";
    p.solution_trace =
        s(a) + "+" + s(b) + "=" + s(ab) + "," + s(ab) + "+" + s(c) + "=" + s(answer);
  } else if (spec.family == "chain") {
    const auto a = operand(0), b = operand(0), c = operand(1);
    const auto ab = a + b;
    answer = ab * c;
    p.statement = "(" + s(a) + "+" + s(b) + ")*" + s(c) + "=?";
    p.solution_trace =
        s(a) + "+" + s(b) + "=" + s(ab) + "," + s(ab) + "*" + s(c) + "=" + s(answer);
  } else {
    throw std::invalid_argument("unknown problem family '" + spec.family + "'");
  }
  p.answer = s(answer);
  return p;
}

std::string reference_response(const Problem& problem) {
  return "<think>" + problem.solution_trace + "</think><answer>\\boxed{" +
         problem.answer + "}</answer>";
}

SyntheticDataset make_synthetic_dataset(const TrainConfig& cfg,
                                        std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(cfg.synth_problems);
  const auto n_hard = static_cast<std::size_t>(
      std::llround(cfg.synth_hard_fraction * static_cast<double>(n)));
  const auto& families = synth_families();
  SyntheticDataset out;
  auto table = std::make_shared<DifficultyTable>();
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(seed, {static_cast<std::uint64_t>(StreamPurpose::kDataset), i});
    const bool hard = i < n_hard;
    const double lo = hard ? cfg.synth_hard_min : cfg.synth_easy_min;
    const double hi = hard ? cfg.synth_hard_max : cfg.synth_easy_max;
    SynthProblemSpec spec;
    spec.difficulty = lo + (hi - lo) * rng.uniform();
    spec.family = families[rng.below(families.size())];
    char id[32];
    std::snprintf(id, sizeof(id), "s%05zu", i);
    out.problems.push_back(gen_problem(spec, rng, id));
    out.problems.back().difficulty_level =
        static_cast<int>(std::lround(spec.difficulty));
    (*table)[id] = spec.difficulty;
  }
  out.difficulty = std::move(table);
  return out;
}

std::shared_ptr<const DifficultyTable> difficulty_from_metadata(
    const std::vector<Problem>& problems) {
  auto table = std::make_shared<DifficultyTable>();
  for (const auto& p : problems)
    (*table)[p.id] = p.difficulty_level ? *p.difficulty_level : 0.0;
  return table;
}

std::unique_ptr<Policy> make_policy(
    const TrainConfig& cfg, std::shared_ptr<const DifficultyTable> difficulty) {
  if (cfg.policy == PolicyKind::kSim)
    return std::make_unique<SimPolicy>(
        SimPolicyParams{cfg.sim_capability, cfg.sim_alpha, cfg.sim_gamma},
        std::move(difficulty));
  return std::make_unique<SoftmaxPolicy>(
      SoftmaxPolicy::with_prior(cfg.softmax_buckets, cfg.softmax_prior));
}

// --- checkpoints -------------------------------------------------------------------

void save_policy(std::ostream& out, const Policy& policy) {
  using namespace binary;
  put_bytes(out, kPolicyMagic);
  if (const auto* sm = dynamic_cast<const SoftmaxPolicy*>(&policy)) {
    put_u32(out, 0);
    put_u32(out, 0);
    put_u64(out, sm->rows());
    put_u64(out, sm->cols());
    for (double v : sm->parameters()) put_f64(out, v);
  } else if (const auto* sim = dynamic_cast<const SimPolicy*>(&policy)) {
    put_u32(out, 1);
    put_u32(out, 0);
    put_u64(out, 1);
    put_u64(out, 3);
    put_f64(out, sim->params().capability);
    put_f64(out, sim->params().alpha);
    put_f64(out, sim->params().gamma);
  } else {
    throw std::invalid_argument("unsupported policy type");
  }
  if (!out) throw std::runtime_error("failed writing policy");
}

std::unique_ptr<Policy> load_policy(
    std::istream& in, std::shared_ptr<const DifficultyTable> difficulty) {
  using namespace binary;
  expect_magic(in, kPolicyMagic);
  const std::uint32_t kind = get_u32(in);
  get_u32(in);
  const std::uint64_t rows = get_u64(in);
  const std::uint64_t cols = get_u64(in);
  if (kind == 0) {
    const std::size_t v = Vocab::instance().size();
    if (cols != v || rows % (v + 1) != 0 || rows == 0)
      throw std::runtime_error("softmax checkpoint shape mismatch");
    auto policy =
        std::make_unique<SoftmaxPolicy>(static_cast<int>(rows / (v + 1)));
    for (double& x : policy->parameters()) x = get_f64(in);
    return policy;
  }
  if (kind == 1) {
    if (rows != 1 || cols != 3)
      throw std::runtime_error("sim checkpoint shape mismatch");
    SimPolicyParams params;
    params.capability = get_f64(in);
    params.alpha = get_f64(in);
    params.gamma = get_f64(in);
    return std::make_unique<SimPolicy>(params, std::move(difficulty));
  }
  throw std::runtime_error("unknown policy kind " + std::to_string(kind));
}

}  // namespace ghpo
