// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "ghpo/controller.hpp"
#include "ghpo/grpo.hpp"
#include "oracles.hpp"

using namespace ghpo;

namespace {

GroupSample sample_softmax_group(const SoftmaxPolicy& pol, const PromptSpec& prompt,
                                 const std::vector<double>& rewards, std::uint64_t seed,
                                 int max_tokens = 6) {
  GroupSample g;
  g.problem_id = prompt.problem_id;
  const Problem problem{prompt.problem_id, prompt.statement, "1", "1", std::nullopt};
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    RngStream rng(seed, {i});
    g.rollouts.push_back(pol.sample(problem, prompt, {1.0, max_tokens}, rng));
    g.rewards.push_back({0, 0, rewards[i]});
  }
  return g;
}

PromptSpec simple_prompt(const std::string& statement) {
  PromptSpec p;
  p.problem_id = "p";
  p.statement = statement;
  return p;
}

SoftmaxPolicy random_policy(std::mt19937_64& rng, int buckets = 3) {
  SoftmaxPolicy pol(buckets);
  std::normal_distribution<double> n(0, 1);
  for (double& x : pol.parameters()) x = n(rng);
  return pol;
}

}  // namespace

TEST_CASE("advantage examples") {
  for (const auto& flat : {std::vector<double>(8, 0.0), std::vector<double>(4, 1.0)}) {
    const auto a = group_advantages(flat, 1e-4);
    for (double x : a.advantages) CHECK(x == 0.0);
    CHECK(a.stddev == 0.0);
  }
  const auto a = group_advantages(std::vector<double>{1, 0, 0, 0}, 1e-4);
  CHECK(a.mean == 0.25);
  CHECK(a.stddev == doctest::Approx(std::sqrt(0.1875)).epsilon(1e-15));
  CHECK(a.advantages[0] == doctest::Approx(1.7317).epsilon(1e-4));
  for (int i = 1; i < 4; ++i) CHECK(a.advantages[i] == doctest::Approx(-0.5772).epsilon(1e-4));
  CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}, 1e-4), std::invalid_argument);
  CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0, 2.0}, 0.0), std::invalid_argument);
}

TEST_CASE("advantages sum to zero and are scale covariant") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int g = std::uniform_int_distribution<int>(2, 16)(rng);
    std::vector<double> r(g);
    for (double& x : r) x = std::uniform_int_distribution<int>(0, 3)(rng);
    const auto a = group_advantages(r, 1e-4);
    double sum = 0;
    for (double x : a.advantages) sum += x;
    if (a.stddev > 0) CHECK(std::abs(sum) < 1e-9 * g);
    const double c = std::uniform_real_distribution<double>(0.1, 10)(rng);
    std::vector<double> scaled(r);
    for (double& x : scaled) x *= c;
    const auto b = group_advantages(scaled, 1e-4 * c);
    const auto tiny_a = group_advantages(r, 1e-12), tiny_b = group_advantages(scaled, 1e-12);
    for (int i = 0; i < g; ++i) {
      CHECK(std::abs(b.advantages[i] - a.advantages[i]) <= 1e-12 * (1 + std::abs(a.advantages[i])));
      CHECK(std::abs(tiny_a.advantages[i] - tiny_b.advantages[i]) < 1e-6);
    }
  }
}

TEST_CASE("probability ratios") {
  const std::vector<double> old = {-1.0, -2.0, -0.5};
  for (double r : prob_ratio(old, old)) CHECK(r == 1.0);
  std::vector<double> bumped = old;
  bumped[1] += std::log(2.0);
  CHECK(prob_ratio(bumped, old)[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(prob_ratio(bumped, std::vector<double>{1.0}), std::invalid_argument);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-20, 0);
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> a = {u(rng)}, b = {u(rng)};
    CHECK(std::abs(prob_ratio(a, b)[0] - std::exp(a[0] - b[0])) <= 1e-12 * std::exp(a[0] - b[0]));
  }
}

TEST_CASE("clipped token term") {
  CHECK(clipped_token_term(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_token_term(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_token_term(0.7, 0.0, 0.2) == 0.0);
  CHECK(clipped_token_term(1.1, 2.0, 0.2) == doctest::Approx(2.2));
  CHECK_FALSE(clipped_token_term_active(1.5, 1.0, 0.2));
  CHECK(clipped_token_term_active(1.1, 1.0, 0.2));
  CHECK_FALSE(clipped_token_term_active(0.5, -1.0, 0.2));
  CHECK(clipped_token_term_active(1.5, -1.0, 0.2));
}

TEST_CASE("categorical KL") {
  CHECK(categorical_kl(std::vector<double>{0.9, 0.1}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)).epsilon(1e-15));
  CHECK(categorical_kl(std::vector<double>{0.9, 0.1}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(0.3681).epsilon(1e-4));
  CHECK(categorical_kl(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}) == 0.0);
}

TEST_CASE("kl_term is zero against itself and non-negative") {
  std::mt19937_64 rng(3);
  const SoftmaxPolicy a = random_policy(rng), b = random_policy(rng);
  const auto g = sample_softmax_group(a, simple_prompt("1+2"), {0, 1, 0, 1}, 5);
  CHECK(kl_term(a, a, g.rollouts, 1.0) == 0.0);
  CHECK(kl_term(a, b, g.rollouts, 1.0) >= -1e-12);
}

TEST_CASE("equal-reward groups give an exactly zero gradient") {
  std::mt19937_64 rng(4);
  const SoftmaxPolicy pol = random_policy(rng);
  TrainConfig cfg;
  std::vector<GroupSample> groups;
  for (int k = 0; k < 4; ++k)
    groups.push_back(sample_softmax_group(pol, simple_prompt("1+" + std::to_string(k)),
                                          std::vector<double>(8, k % 2 ? 1.0 : 0.0), 10 + k));
  const LossReport r = assemble_loss(groups, pol, nullptr, cfg);
  for (double g : r.gradient) CHECK(g == 0.0);
  CHECK(r.grad_norm == 0.0);
  groups[0].rewards[3].combined = 3.0;
  CHECK(assemble_loss(groups, pol, nullptr, cfg).grad_norm > 0.0);
}

TEST_CASE("unit ratios reduce to the policy-gradient estimator") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const SoftmaxPolicy pol = random_policy(rng);
    TrainConfig cfg;
    std::vector<GroupSample> groups;
    std::vector<std::vector<double>> rewards;
    for (int k = 0; k < 3; ++k) {
      std::vector<double> r(4);
      for (double& x : r) x = std::uniform_int_distribution<int>(0, 3)(rng);
      rewards.push_back(r);
      groups.push_back(sample_softmax_group(pol, simple_prompt(std::to_string(k) + "+1"), r,
                                            100 * trial + k));
    }
    const LossReport report = assemble_loss(groups, pol, nullptr, cfg);
    // Straight REINFORCE with group-normalized baseline, from scratch.
    std::vector<double> want(pol.parameters().size(), 0.0);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto adv = oracle::advantages(rewards[g], cfg.eps_norm);
      for (std::size_t i = 0; i < groups[g].rollouts.size(); ++i) {
        const Rollout& ro = groups[g].rollouts[i];
        if (ro.length() == 0) continue;
        const auto ctx = pol.encode_prompt(ro.prompt);
        const double w = adv[i] / groups.size() / groups[g].size() / ro.length();
        for (std::size_t t = 0; t < ro.length(); ++t) {
          const std::size_t row = oracle::softmax_row(ctx, ro.token_ids, t, 3, pol.cols());
          const auto l = pol.logits(row);
          const auto p = oracle::softmax(std::vector<double>(l.begin(), l.end()));
          for (std::size_t j = 0; j < pol.cols(); ++j)
            want[row * pol.cols() + j] += w * ((static_cast<int>(j) == ro.token_ids[t]) - p[j]);
        }
      }
    }
    for (std::size_t j = 0; j < want.size(); ++j) CHECK(std::abs(report.gradient[j] - want[j]) < 1e-12);
    CHECK(report.clipped_tokens == 0);
  }
}

TEST_CASE("sim group gradient has the closed form alpha sqrt(k(G-k)) / G") {
  auto table = std::make_shared<DifficultyTable>(DifficultyTable{{"p", 0.7}});
  const SimPolicy pol({0.2, 1.3, 0.0}, table);
  TrainConfig cfg;
  cfg.eps_norm = 1e-12;
  const Problem problem{"p", "1+1=?", "1+1=2", "2", std::nullopt};
  PromptSpec prompt = render_prompt(problem, std::nullopt);
  for (int k = 0; k <= 8; ++k) {
    GroupSample g;
    g.problem_id = "p";
    for (int i = 0; i < 8; ++i) {
      Rollout r;
      r.prompt = prompt;
      r.token_ids = {i < k ? 1 : 0};
      r.logprob_old = pol.token_logprobs(prompt, r.token_ids, 1.0);
      g.rollouts.push_back(r);
      g.rewards.push_back({i < k, 1, i < k ? 3.0 : 1.0});
    }
    const LossReport rep = assemble_loss(std::span(&g, 1), pol, nullptr, cfg);
    CHECK(rep.gradient[0] == doctest::Approx(1.3 * std::sqrt(k * (8.0 - k)) / 8.0).epsilon(1e-9));
  }
}

TEST_CASE("zero-length rollouts are skipped and counted") {
  std::mt19937_64 rng(6);
  const SoftmaxPolicy pol = random_policy(rng);
  GroupSample g = sample_softmax_group(pol, simple_prompt("1"), {0, 1, 1, 0}, 3);
  g.rollouts[1].token_ids.clear();
  g.rollouts[1].logprob_old.clear();
  const LossReport r = assemble_loss(std::span(&g, 1), pol, nullptr, TrainConfig{});
  CHECK(r.skipped_rollouts == 1);
  CHECK(std::isfinite(r.grad_norm));
}

TEST_CASE("KL is reported without a gradient when beta is zero") {
  std::mt19937_64 rng(7);
  const SoftmaxPolicy pol = random_policy(rng), ref = random_policy(rng);
  const auto g = sample_softmax_group(pol, simple_prompt("2"), {0, 1, 0, 0}, 9);
  TrainConfig cfg;
  const LossReport with_ref = assemble_loss(std::span(&g, 1), pol, &ref, cfg);
  const LossReport without = assemble_loss(std::span(&g, 1), pol, nullptr, cfg);
  CHECK(with_ref.kl_value > 0);
  CHECK(with_ref.gradient == without.gradient);
  cfg.beta_kl = 0.04;
  CHECK_THROWS_AS(assemble_loss(std::span(&g, 1), pol, nullptr, cfg), std::invalid_argument);
  const LossReport penalized = assemble_loss(std::span(&g, 1), pol, &ref, cfg);
  CHECK(penalized.objective == doctest::Approx(with_ref.objective - 0.04 * with_ref.kl_value));
  CHECK(penalized.gradient != without.gradient);
}

TEST_CASE("grad_norm equals the gradient's L2 norm and threads do not change results") {
  std::mt19937_64 rng(8);
  const SoftmaxPolicy pol = random_policy(rng), ref = random_policy(rng);
  std::vector<GroupSample> groups;
  for (int k = 0; k < 7; ++k)
    groups.push_back(sample_softmax_group(pol, simple_prompt(std::to_string(k)), {0, 1, 3, 2, 0, 1}, 40 + k));
  TrainConfig cfg;
  cfg.beta_kl = 0.04;
  const LossReport one = assemble_loss(groups, pol, &ref, cfg);
  double sq = 0;
  for (double g : one.gradient) sq += g * g;
  CHECK(std::abs(one.grad_norm - std::sqrt(sq)) <= 1e-12);
  cfg.threads = 4;
  const LossReport four = assemble_loss(groups, pol, &ref, cfg);
  CHECK(four.gradient == one.gradient);
  CHECK(four.objective == one.objective);
}
