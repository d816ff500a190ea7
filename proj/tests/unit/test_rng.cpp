// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "ghpo/rng.hpp"

using namespace ghpo;

TEST_CASE("streams are reproducible and key-sensitive") {
  RngStream a(42, {1, 2, 3}), b(42, {1, 2, 3}), c(42, {1, 2, 4}), d(43, {1, 2, 3});
  std::set<std::uint64_t> firsts;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    firsts.insert(x);
  }
  CHECK(RngStream(42, {1, 2, 3}).next() != c.next());
  CHECK(RngStream(42, {1, 2, 3}).next() != d.next());
  CHECK(firsts.size() == 100);
}

TEST_CASE("key order matters") {
  CHECK(RngStream(0, {1, 2}).next() != RngStream(0, {2, 1}).next());
  CHECK(RngStream(0, {1}).next() != RngStream(0, {1, 0}).next());
}

TEST_CASE("uniform moments") {
  RngStream r(9, {5});
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    s += u;
    s2 += u * u;
  }
  CHECK(std::abs(s / n - 0.5) < 0.005);
  CHECK(std::abs(s2 / n - 1.0 / 3.0) < 0.005);
}

TEST_CASE("below is unbiased over small ranges") {
  RngStream r(3, {8});
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[r.below(7)];
  for (int c : counts) CHECK(std::abs(c - n / 7) < 5 * std::sqrt(n / 7.0));
}

TEST_CASE("categorical follows its probabilities") {
  RngStream r(1, {2});
  const std::vector<double> p = {0.1, 0.0, 0.6, 0.3};
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[r.categorical(p)];
  CHECK(counts[1] == 0);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double sd = std::sqrt(n * p[k] * (1 - p[k]));
    CHECK(std::abs(counts[k] - n * p[k]) <= 5 * sd + 1);
  }
}

TEST_CASE("normal draws have unit variance") {
  RngStream r(11, {});
  const int n = 100000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.02);
  CHECK(std::abs(s2 / n - 1.0) < 0.03);
}
