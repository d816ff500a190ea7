// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's numerical code paths.

#ifndef GHPO_TESTS_ORACLES_HPP_
#define GHPO_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "ghpo/core.hpp"
#include "ghpo/policy.hpp"

namespace oracle {

// Two-pass mean and population standard deviation in long double.
inline std::pair<long double, long double> mean_std(
    const std::vector<double>& xs) {
  long double s = 0;
  for (double x : xs) s += x;
  const long double mu = s / xs.size();
  long double ss = 0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return {mu, std::sqrt(ss / xs.size())};
}

inline std::vector<double> advantages(const std::vector<double>& rewards,
                                      double eps) {
  const auto [mu, sd] = mean_std(rewards);
  std::vector<double> out;
  for (double r : rewards) out.push_back(static_cast<double>((r - mu) / (sd + eps)));
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& logits,
                                   double temperature = 1.0) {
  long double z = 0;
  std::vector<long double> e;
  for (double l : logits) {
    e.push_back(std::exp(static_cast<long double>(l) / temperature));
    z += e.back();
  }
  std::vector<double> out;
  for (auto v : e) out.push_back(static_cast<double>(v / z));
  return out;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Central difference of f along coordinate i of x.
inline double central_diff(const std::function<double(std::vector<double>&)>& f,
                           std::vector<double> x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2 * h);
}

// Row of the softmax table used at position t of a response: previous token
// (last prompt token at t = 0, begin marker |V| for an empty prompt) and
// bucket min(t, buckets - 1).
inline std::size_t softmax_row(const std::vector<int>& prompt,
                               const std::vector<int>& response, std::size_t t,
                               int buckets, std::size_t vocab) {
  std::size_t prev;
  if (t > 0)
    prev = static_cast<std::size_t>(response[t - 1]);
  else
    prev = prompt.empty() ? vocab : static_cast<std::size_t>(prompt.back());
  const std::size_t bucket = std::min<std::size_t>(t, buckets - 1);
  return prev * static_cast<std::size_t>(buckets) + bucket;
}

// Clipped objective with exact KL penalty for a tabular softmax policy,
// written directly from the definitions:
//   J = 1/B sum_g 1/G sum_i 1/|o_i| sum_t [min(r A, clip(r) A) - beta KL_t]
struct ToyRollout {
  std::vector<int> prompt;
  std::vector<int> tokens;
  std::vector<double> logprob_old;
};

struct ToyGroup {
  std::vector<ToyRollout> rollouts;
  std::vector<double> rewards;
};

inline double toy_objective(const std::vector<double>& theta,
                            const std::vector<double>& theta_ref,
                            const std::vector<ToyGroup>& groups, int buckets,
                            std::size_t vocab, double temperature,
                            double eps_norm, double eps_clip, double beta) {
  auto row_probs = [&](const std::vector<double>& table, std::size_t row) {
    std::vector<double> logits(table.begin() + row * vocab,
                               table.begin() + (row + 1) * vocab);
    return softmax(logits, temperature);
  };
  long double total = 0;
  for (const auto& g : groups) {
    const auto adv = advantages(g.rewards, eps_norm);
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      const auto& ro = g.rollouts[i];
      if (ro.tokens.empty()) continue;
      const long double scale = 1.0L / groups.size() / g.rollouts.size() /
                                ro.tokens.size();
      for (std::size_t t = 0; t < ro.tokens.size(); ++t) {
        const std::size_t row =
            softmax_row(ro.prompt, ro.tokens, t, buckets, vocab);
        const auto p = row_probs(theta, row);
        const double ratio =
            std::exp(std::log(p[ro.tokens[t]]) - ro.logprob_old[t]);
        const double clipped =
            std::min(std::max(ratio, 1 - eps_clip), 1 + eps_clip);
        long double term = std::min(ratio * adv[i], clipped * adv[i]);
        if (beta != 0) {
          const auto q = row_probs(theta_ref, row);
          long double kl = 0;
          for (std::size_t j = 0; j < vocab; ++j)
            kl += p[j] * std::log(p[j] / q[j]);
          term -= beta * kl;
        }
        total += scale * term;
      }
    }
  }
  return static_cast<double>(total);
}

// Content of every balanced \boxed{...} span, in order of appearance of the
// opening marker. Unbalanced openings are skipped.
inline std::vector<std::string> box_spans(std::string_view s) {
  std::vector<std::string> out;
  const std::string_view open = "\\boxed{";
  for (std::size_t i = 0; i + open.size() <= s.size(); ++i) {
    if (s.substr(i, open.size()) != open) continue;
    int depth = 1;
    std::size_t j = i + open.size();
    for (; j < s.size() && depth > 0; ++j) {
      if (s[j] == '{') ++depth;
      if (s[j] == '}') --depth;
    }
    if (depth == 0)
      out.emplace_back(s.substr(i + open.size(), j - 1 - (i + open.size())));
  }
  return out;
}

// Last top-level box, then descend into its own last box while one exists.
inline std::optional<std::string> innermost_last_box(std::string_view s) {
  std::optional<std::string> best;
  // Top-level spans: those not contained in an earlier complete span.
  const std::string_view open = "\\boxed{";
  std::size_t i = 0;
  while (i + open.size() <= s.size()) {
    if (s.substr(i, open.size()) != open) {
      ++i;
      continue;
    }
    int depth = 1;
    std::size_t j = i + open.size();
    for (; j < s.size() && depth > 0; ++j) {
      if (s[j] == '{') ++depth;
      if (s[j] == '}') --depth;
    }
    if (depth == 0) {
      best = std::string(s.substr(i + open.size(), j - 1 - (i + open.size())));
      i = j;
    } else {
      i += open.size();
    }
  }
  if (best) {
    if (auto inner = innermost_last_box(*best)) return inner;
  }
  return best;
}

// floor(k * n / 1000) in exact integer arithmetic.
inline std::size_t hint_prefix_len(std::size_t k_per_mille, std::size_t n) {
  return k_per_mille * n / 1000;
}

// Count of UTF-8 scalar values.
inline std::size_t scalar_count(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

}  // namespace oracle

#endif  // GHPO_TESTS_ORACLES_HPP_
