// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random streams. A stream is fully determined by the run seed
// and a key such as (purpose, step, query, stage, rollout), so sampling order
// and thread scheduling never change the draws.

#ifndef GHPO_RNG_HPP_
#define GHPO_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <span>

namespace ghpo {

enum class StreamPurpose : std::uint64_t {
  kRollout = 1,
  kShuffle = 2,
  kEval = 3,
  kDataset = 4,
  kInit = 5,
};

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> key);

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();
  /// Draws an index from a probability vector (assumed normalized).
  std::size_t categorical(std::span<const double> probs);

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ghpo

#endif  // GHPO_RNG_HPP_
