// SPDX-License-Identifier: Apache-2.0

#include "ghpo/rng.hpp"

#include <cmath>
#include <numbers>

namespace ghpo {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed,
                     std::initializer_list<std::uint64_t> key)
    : base_(splitmix64(seed)) {
  for (std::uint64_t k : key) base_ = splitmix64(base_ ^ splitmix64(k + 1));
}

std::uint64_t RngStream::next() {
  return splitmix64(base_ + 0x632be59bd9b4e019ULL * ++counter_);
}

double RngStream::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  // Box-Muller; u1 is shifted away from zero.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RngStream::categorical(std::span<const double> probs) {
  const double u = uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the running total; take the last nonzero entry.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0) return i;
  return probs.size() - 1;
}

}  // namespace ghpo
