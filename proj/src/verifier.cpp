// SPDX-License-Identifier: Apache-2.0

#include "ghpo/verifier.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ghpo {
namespace {

constexpr std::string_view kBoxOpen = "\\boxed{";

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool is_blank(std::string_view s) {
  for (char c : s)
    if (!is_space(c)) return false;
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Index one past the '}' matching the '{' at open_pos, or npos.
std::size_t matching_brace(std::string_view s, std::size_t open_pos) {
  int depth = 0;
  for (std::size_t i = open_pos; i < s.size(); ++i) {
    if (s[i] == '{') {
      ++depth;
    } else if (s[i] == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

// Content of the last balanced \boxed{...} in s, descending into nested
// boxes.
std::optional<std::string_view> last_box(std::string_view s) {
  std::optional<std::string_view> found;
  std::size_t pos = 0;
  while ((pos = s.find(kBoxOpen, pos)) != std::string_view::npos) {
    const std::size_t brace = pos + kBoxOpen.size() - 1;
    const std::size_t end = matching_brace(s, brace);
    if (end != std::string_view::npos) {
      found = s.substr(brace + 1, end - brace - 2);
      pos = end;
    } else {
      pos = brace + 1;
    }
  }
  if (found) {
    if (auto inner = last_box(*found)) return inner;
  }
  return found;
}

struct Block {
  std::size_t open = 0;  // position of the open tag
  std::size_t content_begin = 0;
  std::size_t content_end = 0;
  std::size_t end = 0;  // one past the closing tag
};

// Earliest complete block starting at or after `from`.
std::optional<Block> next_block(std::string_view s, std::size_t from,
                                std::string_view open, std::string_view close,
                                bool allow_repeated_open) {
  const std::size_t o = s.find(open, from);
  if (o == std::string_view::npos) return std::nullopt;
  const std::size_t begin = o + open.size();
  std::size_t c = s.find(close, begin);
  std::size_t close_len = close.size();
  if (allow_repeated_open) {
    const std::size_t r = s.find(open, begin);
    if (r != std::string_view::npos && (c == std::string_view::npos || r < c)) {
      c = r;
      close_len = open.size();
    }
  }
  if (c == std::string_view::npos) return std::nullopt;
  return Block{o, begin, c, c + close_len};
}

std::optional<Block> last_block(std::string_view s, std::string_view open,
                                std::string_view close,
                                bool allow_repeated_open) {
  std::optional<Block> last;
  std::size_t pos = 0;
  while (auto b = next_block(s, pos, open, close, allow_repeated_open)) {
    last = b;
    pos = b->end;
  }
  return last;
}

// --- normalization --------------------------------------------------------

std::int64_t gcd64(std::int64_t a, std::int64_t b) {
  return std::gcd(a < 0 ? -a : a, b < 0 ? -b : b);
}

CanonicalAnswer make_rational(std::int64_t num, std::int64_t den) {
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = gcd64(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  CanonicalAnswer a;
  a.kind = AnswerKind::kRational;
  a.numerator = num;
  a.denominator = den;
  return a;
}

CanonicalAnswer make_decimal(double v) {
  CanonicalAnswer a;
  a.kind = AnswerKind::kDecimal;
  a.value = v;
  return a;
}

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

std::optional<std::int64_t> parse_integer(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (!all_digits(s)) return std::nullopt;
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return negative ? -v : v;
}

// Signed integers, decimals and exponent notation.
std::optional<CanonicalAnswer> parse_number(std::string_view s) {
  std::string_view body = s;
  bool negative = false;
  if (!body.empty() && (body.front() == '-' || body.front() == '+')) {
    negative = body.front() == '-';
    body.remove_prefix(1);
  }
  std::string_view mantissa = body;
  std::string_view exponent;
  if (const auto e = body.find_first_of("eE"); e != std::string_view::npos) {
    mantissa = body.substr(0, e);
    exponent = body.substr(e + 1);
    if (!exponent.empty() && (exponent.front() == '+' || exponent.front() == '-'))
      exponent.remove_prefix(1);
    if (!all_digits(exponent)) return std::nullopt;
  }
  const auto dot = mantissa.find('.');
  std::string_view int_part = mantissa.substr(0, dot);
  std::string_view frac_part =
      dot == std::string_view::npos ? std::string_view{} : mantissa.substr(dot + 1);
  if (int_part.empty() && frac_part.empty()) return std::nullopt;
  if (!int_part.empty() && !all_digits(int_part)) return std::nullopt;
  if (!frac_part.empty() && !all_digits(frac_part)) return std::nullopt;

  if (exponent.empty() && body.find_first_of("eE") == std::string_view::npos) {
    // Exact path: digits / 10^d when it fits in 64 bits.
    std::string digits(int_part);
    digits += frac_part;
    const auto first_nonzero = digits.find_first_not_of('0');
    const std::string_view significant =
        first_nonzero == std::string::npos
            ? std::string_view{}
            : std::string_view(digits).substr(first_nonzero);
    if (significant.size() <= 18 && frac_part.size() <= 18) {
      std::int64_t num = 0;
      for (char c : significant) num = num * 10 + (c - '0');
      std::int64_t den = 1;
      for (std::size_t i = 0; i < frac_part.size(); ++i) den *= 10;
      return make_rational(negative ? -num : num, den);
    }
  }
  const std::string owned(s);
  char* end = nullptr;
  const double v = std::strtod(owned.c_str(), &end);
  if (end != owned.c_str() + owned.size() || !std::isfinite(v))
    return std::nullopt;
  return make_decimal(v);
}

// `\frac{a}{b}` or `a/b` with integer a, b (optionally negated as a whole).
std::optional<CanonicalAnswer> parse_fraction(std::string_view s) {
  bool negative = false;
  if (!s.empty() && s.front() == '-') {
    negative = true;
    s.remove_prefix(1);
  }
  std::optional<std::int64_t> num, den;
  constexpr std::string_view kFrac = "\\frac{";
  if (s.starts_with(kFrac)) {
    const std::size_t b1 = kFrac.size() - 1;
    const std::size_t e1 = matching_brace(s, b1);
    if (e1 == std::string_view::npos || e1 >= s.size() || s[e1] != '{')
      return std::nullopt;
    const std::size_t e2 = matching_brace(s, e1);
    if (e2 != s.size()) return std::nullopt;
    num = parse_integer(s.substr(b1 + 1, e1 - b1 - 2));
    den = parse_integer(s.substr(e1 + 1, e2 - e1 - 2));
  } else if (const auto slash = s.find('/'); slash != std::string_view::npos) {
    num = parse_integer(s.substr(0, slash));
    den = parse_integer(s.substr(slash + 1));
  }
  if (!num || !den || *den == 0) return std::nullopt;
  return make_rational(negative ? -*num : *num, *den);
}

bool erase_all(std::string& s, std::string_view needle,
               bool require_nonletter_after = false) {
  bool changed = false;
  std::size_t pos = 0;
  while ((pos = s.find(needle, pos)) != std::string::npos) {
    const std::size_t after = pos + needle.size();
    if (require_nonletter_after && after < s.size() &&
        std::isalpha(static_cast<unsigned char>(s[after]))) {
      pos = after;
      continue;
    }
    s.erase(pos, needle.size());
    changed = true;
  }
  return changed;
}

bool replace_all(std::string& s, std::string_view from, std::string_view to) {
  bool changed = false;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
    changed = true;
  }
  return changed;
}

// Removes a wrapper like `\text{...}` or `{...}` that spans the whole string.
bool unwrap(std::string& s) {
  static constexpr std::array<std::string_view, 6> kWrappers = {
      "\\boxed{", "\\text{", "\\textbf{", "\\mathrm{", "\\mathbf{", "{"};
  for (std::string_view w : kWrappers) {
    if (!s.starts_with(w)) continue;
    const std::size_t brace = w.size() - 1;
    if (matching_brace(s, brace) == s.size()) {
      s = s.substr(w.size(), s.size() - w.size() - 1);
      return true;
    }
  }
  return false;
}

std::string strip(std::string_view raw) {
  std::string s(raw);
  bool changed = true;
  while (changed) {
    changed = false;
    std::string next;
    next.reserve(s.size());
    for (char c : s)
      if (!is_space(c) && c != '$') next.push_back(c);
    changed |= next != s;
    s = std::move(next);
    changed |= erase_all(s, "\\left", true);
    changed |= erase_all(s, "\\right", true);
    for (std::string_view sp : {"\\,", "\\;", "\\:", "\\!", "\\ "})
      changed |= erase_all(s, sp);
    changed |= replace_all(s, "\\dfrac", "\\frac");
    changed |= replace_all(s, "\\tfrac", "\\frac");
    changed |= unwrap(s);
  }
  return s;
}

}  // namespace

std::optional<std::string> extract_answer(std::string_view response,
                                          const FormatSpec& spec) {
  if (auto block = last_block(response, spec.answer_open, spec.answer_close,
                              spec.allow_repeated_open)) {
    const std::string_view content = response.substr(
        block->content_begin, block->content_end - block->content_begin);
    if (auto box = last_box(content)) return std::string(*box);
    const std::string_view t = trim(content);
    if (!t.empty()) return std::string(t);
  }
  if (auto box = last_box(response)) return std::string(*box);
  return std::nullopt;
}

CanonicalAnswer normalize(std::string_view raw) {
  if (trim(raw).empty()) throw std::invalid_argument("normalize: empty answer");
  const std::string s = strip(raw);
  if (s.empty())
    throw std::invalid_argument("normalize: answer is empty after stripping");
  if (auto n = parse_number(s)) return *n;
  if (auto f = parse_fraction(s)) return *f;
  CanonicalAnswer a;
  a.kind = AnswerKind::kSymbolic;
  a.text = s;
  return a;
}

std::string render(const CanonicalAnswer& answer) {
  switch (answer.kind) {
    case AnswerKind::kRational:
      if (answer.denominator == 1) return std::to_string(answer.numerator);
      return std::to_string(answer.numerator) + "/" +
             std::to_string(answer.denominator);
    case AnswerKind::kDecimal: {
      char buf[40];
      auto res = std::to_chars(buf, buf + sizeof(buf), answer.value,
                               std::chars_format::scientific);
      return std::string(buf, res.ptr);
    }
    case AnswerKind::kSymbolic:
      return answer.text;
  }
  return {};
}

bool answers_equal(std::string_view pred, std::string_view gold) {
  CanonicalAnswer p, g;
  try {
    p = normalize(pred);
    g = normalize(gold);
  } catch (const std::invalid_argument&) {
    return false;
  }
  auto as_double = [](const CanonicalAnswer& a) {
    return a.kind == AnswerKind::kRational
               ? static_cast<double>(a.numerator) /
                     static_cast<double>(a.denominator)
               : a.value;
  };
  if (p.kind == AnswerKind::kRational && g.kind == AnswerKind::kRational)
    return p.numerator == g.numerator && p.denominator == g.denominator;
  if (p.kind == AnswerKind::kSymbolic || g.kind == AnswerKind::kSymbolic)
    return p.kind == g.kind && p.text == g.text;
  // At least one side is a decimal: compare numerically.
  const double a = as_double(p), b = as_double(g);
  const double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) <= 1e-9 * scale;
}

int check_format(std::string_view response, const FormatSpec& spec) {
  const std::array<std::string_view, 4> tags = {
      spec.think_open, spec.think_close, spec.answer_open, spec.answer_close};
  auto clean_content = [&](std::string_view c) {
    if (is_blank(c)) return false;
    for (auto tag : tags)
      if (c.find(tag) != std::string_view::npos) return false;
    return true;
  };
  // Parses `<open>content<close>` at the start of s (after whitespace).
  auto take_block = [&](std::string_view& s, std::string_view open,
                        std::string_view close) {
    s = trim(s);
    if (!s.starts_with(open)) return false;
    auto b = next_block(s, 0, open, close, spec.allow_repeated_open);
    if (!b || b->open != 0) return false;
    if (!clean_content(s.substr(b->content_begin,
                                b->content_end - b->content_begin)))
      return false;
    s.remove_prefix(b->end);
    return true;
  };
  auto ordered = [&](bool think_first) {
    std::string_view s = response;
    const bool ok =
        think_first
            ? take_block(s, spec.think_open, spec.think_close) &&
                  take_block(s, spec.answer_open, spec.answer_close)
            : take_block(s, spec.answer_open, spec.answer_close) &&
                  take_block(s, spec.think_open, spec.think_close);
    return ok && is_blank(s);
  };
  if (ordered(true)) return 1;
  if (!spec.require_order && ordered(false)) return 1;
  return 0;
}

RewardBreakdown score(std::string_view response, const Problem& problem,
                      const TrainConfig& cfg, const FormatSpec& spec) {
  RewardBreakdown r;
  if (auto extracted = extract_answer(response, spec))
    r.accuracy = answers_equal(*extracted, problem.answer) ? 1 : 0;
  r.format = check_format(response, spec);
  r.combined = cfg.w_acc * r.accuracy + cfg.w_fmt * r.format;
  return r;
}

}  // namespace ghpo
