// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <set>
#include <string>

#include "doctest.h"
#include "ghpo/verifier.hpp"
#include "oracles.hpp"

using namespace ghpo;

TEST_CASE("extraction prefers the box inside the answer block") {
  CHECK(extract_answer("<think>t<think><answer>\\boxed{\\frac{1}{3600}}<answer>") ==
        "\\frac{1}{3600}");
  CHECK(extract_answer("<think>t</think><answer>x \\boxed{7} y</answer>") == "7");
  CHECK(extract_answer("\\boxed{1}<think>t</think><answer>\\boxed{2}</answer>") == "2");
}

TEST_CASE("extraction falls back to block content, then any box") {
  CHECK(extract_answer("<think>t</think><answer>  42 </answer>") == "42");
  CHECK(extract_answer("text \\boxed{210} more \\boxed{\\frac{1}{210}}") ==
        "\\frac{1}{210}");
  CHECK_FALSE(extract_answer("no markers at all").has_value());
  CHECK_FALSE(extract_answer("").has_value());
  CHECK_FALSE(extract_answer("\\boxed{unbalanced").has_value());
}

TEST_CASE("nested boxes resolve to the innermost last box") {
  CHECK(extract_answer("\\boxed{a \\boxed{b} \\boxed{c}}") == "c");
  CHECK(extract_answer("<answer>\\boxed{\\boxed{5}}</answer>") == "5");
}

TEST_CASE("box scan agrees with an independent scanner") {
  std::mt19937 rng(5);
  const std::vector<std::string> pieces = {"\\boxed{", "{", "}", "x", "1", " ", "\\frac{"};
  for (int trial = 0; trial < 3000; ++trial) {
    std::string s;
    const int n = std::uniform_int_distribution<int>(0, 14)(rng);
    for (int i = 0; i < n; ++i)
      s += pieces[std::uniform_int_distribution<std::size_t>(0, pieces.size() - 1)(rng)];
    const auto got = extract_answer(s);
    const auto want = oracle::innermost_last_box(s);
    REQUIRE_MESSAGE(got == want, s);
    if (want) {
      // The innermost box content is itself one of the balanced spans.
      const auto spans = oracle::box_spans(s);
      CHECK(std::find(spans.begin(), spans.end(), *want) != spans.end());
    }
  }
}

TEST_CASE("normalize canonical forms") {
  const CanonicalAnswer third = normalize("\\frac{1}{3600}");
  CHECK(third.kind == AnswerKind::kRational);
  CHECK(third.numerator == 1);
  CHECK(third.denominator == 3600);
  const CanonicalAnswer half = normalize("0.5");
  CHECK(half.kind == AnswerKind::kRational);
  CHECK(half.numerator == 1);
  CHECK(half.denominator == 2);
  const CanonicalAnswer sym = normalize("x + 1");
  CHECK(sym.kind == AnswerKind::kSymbolic);
  CHECK(sym.text == "x+1");
  CHECK(normalize("-\\dfrac{4}{-6}") == normalize("2/3"));
  CHECK(normalize("$\\left( 3 \\right)$").text == "(3)");
  CHECK(normalize("1e30").kind == AnswerKind::kDecimal);
  CHECK_THROWS_AS(normalize(""), std::invalid_argument);
  CHECK_THROWS_AS(normalize("  "), std::invalid_argument);
  CHECK_THROWS_AS(normalize("$$"), std::invalid_argument);
}

TEST_CASE("decimals reduce like an exact oracle") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::int64_t whole = std::uniform_int_distribution<std::int64_t>(0, 99999)(rng);
    const int digits = std::uniform_int_distribution<int>(1, 6)(rng);
    std::int64_t den = 1;
    for (int i = 0; i < digits; ++i) den *= 10;
    const std::int64_t frac = std::uniform_int_distribution<std::int64_t>(0, den - 1)(rng);
    std::string text = std::to_string(whole) + ".";
    std::string f = std::to_string(frac);
    text += std::string(static_cast<std::size_t>(digits) - f.size(), '0') + f;
    std::int64_t num = whole * den + frac;
    const std::int64_t g = std::gcd(num, den);
    const CanonicalAnswer a = normalize(text);
    REQUIRE(a.kind == AnswerKind::kRational);
    CHECK(a.numerator == num / g);
    CHECK(a.denominator == den / g);
  }
}

TEST_CASE("answers_equal examples") {
  CHECK(answers_equal(*extract_answer("\\boxed{\\frac{1}{3600}}"), "1/3600"));
  CHECK_FALSE(answers_equal("1/210", "1/3600"));
  CHECK(answers_equal("5", "5"));
  CHECK_FALSE(answers_equal("", "5"));
  CHECK_FALSE(answers_equal("5", "x"));
  CHECK(answers_equal("1e3", "1000"));
}

namespace {

std::string random_answer(std::mt19937& rng) {
  static const std::vector<std::string> atoms = {
      "1", "2", "0", "-", ".", "/", "\\frac{", "}", "{", "x", "$", " ",
      "\\left(", "\\right)", "\\boxed{", "e", "+", "\\text{", "3", "7", "\\,"};
  std::string s;
  const int n = std::uniform_int_distribution<int>(1, 8)(rng);
  for (int i = 0; i < n; ++i)
    s += atoms[std::uniform_int_distribution<std::size_t>(0, atoms.size() - 1)(rng)];
  return s;
}

}  // namespace

TEST_CASE("normalize is idempotent through render") {
  std::mt19937 rng(11);
  int checked = 0;
  for (int trial = 0; trial < 20000; ++trial) {
    const std::string s = random_answer(rng);
    CanonicalAnswer a;
    try {
      a = normalize(s);
    } catch (const std::invalid_argument&) {
      continue;
    }
    ++checked;
    REQUIRE_MESSAGE(normalize(render(a)) == a, s);
    if (a.kind == AnswerKind::kRational) {
      CHECK(a.denominator > 0);
      CHECK(std::gcd(a.numerator < 0 ? -a.numerator : a.numerator, a.denominator) == 1);
    }
  }
  CHECK(checked > 10000);
}

TEST_CASE("answers_equal is symmetric and reflexive") {
  std::mt19937 rng(13);
  for (int trial = 0; trial < 20000; ++trial) {
    const std::string a = random_answer(rng), b = random_answer(rng);
    REQUIRE(answers_equal(a, b) == answers_equal(b, a));
    bool normalizable = true;
    try {
      normalize(a);
    } catch (const std::invalid_argument&) {
      normalizable = false;
    }
    if (normalizable) REQUIRE_MESSAGE(answers_equal(a, a), a);
  }
}

TEST_CASE("format checking") {
  CHECK(check_format("<think>r<think><answer>a<answer>") == 1);
  CHECK(check_format("<think>r</think><answer>a</answer>") == 1);
  CHECK(check_format("  <think>r</think>\n<answer>a</answer>\n") == 1);
  CHECK(check_format("<answer>a<answer><think>r<think>") == 0);
  CHECK(check_format("") == 0);
  CHECK(check_format("<think></think><answer>a</answer>") == 0);
  CHECK(check_format("<think>r</think><answer>a</answer> trailing") == 0);
}

TEST_CASE("score combines weighted binary rewards") {
  const Problem p{"p", "2+3=?", "2+3=5", "5", std::nullopt};
  const TrainConfig cfg;  // weights 2:1
  const auto good = score("<think>2+3=5</think><answer>\\boxed{5}</answer>", p, cfg);
  CHECK(good == RewardBreakdown{1, 1, 3.0});
  const auto wrong = score("<think>2+3=6</think><answer>\\boxed{6}</answer>", p, cfg);
  CHECK(wrong == RewardBreakdown{0, 1, 1.0});
  const auto none = score("the answer is 6", p, cfg);
  CHECK(none == RewardBreakdown{0, 0, 0.0});
  const auto unformatted = score("\\boxed{5}", p, cfg);
  CHECK(unformatted == RewardBreakdown{1, 0, 2.0});
}

TEST_CASE("combined reward takes only the four weighted values") {
  const Problem p{"p", "q", "t", "12", std::nullopt};
  TrainConfig cfg;
  cfg.w_acc = 2.5;
  cfg.w_fmt = 0.75;
  const std::set<double> allowed = {0.0, 0.75, 2.5, 3.25};
  std::mt19937 rng(17);
  const std::vector<std::string> parts = {"<think>", "</think>", "<answer>", "</answer>",
                                          "\\boxed{12}", "\\boxed{13}", "12", "r"};
  for (int trial = 0; trial < 5000; ++trial) {
    std::string s;
    for (int i = 0; i < 5; ++i)
      s += parts[std::uniform_int_distribution<std::size_t>(0, parts.size() - 1)(rng)];
    const auto r = score(s, p, cfg);
    REQUIRE((r.accuracy == 0 || r.accuracy == 1));
    REQUIRE((r.format == 0 || r.format == 1));
    REQUIRE(allowed.count(r.combined) == 1);
  }
}
