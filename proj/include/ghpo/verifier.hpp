// SPDX-License-Identifier: Apache-2.0
//
// Rule-based verifiable reward: answer extraction, normalization,
// equivalence and format compliance.

#ifndef GHPO_VERIFIER_HPP_
#define GHPO_VERIFIER_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "ghpo/core.hpp"

namespace ghpo {

enum class AnswerKind { kRational, kDecimal, kSymbolic };

/// Canonical form of an answer string. Rationals are always reduced with a
/// positive denominator; decimal is used only for values a 64-bit rational
/// cannot hold (exponent notation, very long digit strings).
struct CanonicalAnswer {
  AnswerKind kind = AnswerKind::kSymbolic;
  std::int64_t numerator = 0;
  std::int64_t denominator = 1;
  double value = 0.0;
  std::string text;

  bool operator==(const CanonicalAnswer&) const = default;
};

/// Tag layout of a well-formed response. A block may be closed either by its
/// close tag or, when allow_repeated_open is set, by repeating the open tag
/// (`<think>...<think>`).
struct FormatSpec {
  std::string think_open = "<think>";
  std::string think_close = "</think>";
  std::string answer_open = "<answer>";
  std::string answer_close = "</answer>";
  bool require_order = true;
  bool allow_repeated_open = true;
};

/// Innermost `\boxed{}` inside the last answer block, else the whole answer
/// block, else the last `\boxed{}` anywhere, else nothing.
std::optional<std::string> extract_answer(std::string_view response,
                                          const FormatSpec& spec = {});

/// Throws std::invalid_argument when the input is empty (before or after
/// stripping wrappers).
CanonicalAnswer normalize(std::string_view raw);

/// Prints a canonical answer such that normalize(render(a)) == a.
std::string render(const CanonicalAnswer& answer);

bool answers_equal(std::string_view pred, std::string_view gold);

/// 1 iff the response is exactly a non-empty think block followed by a
/// non-empty answer block (surrounding whitespace allowed), 0 otherwise.
int check_format(std::string_view response, const FormatSpec& spec = {});

RewardBreakdown score(std::string_view response, const Problem& problem,
                      const TrainConfig& cfg, const FormatSpec& spec = {});

}  // namespace ghpo

#endif  // GHPO_VERIFIER_HPP_
