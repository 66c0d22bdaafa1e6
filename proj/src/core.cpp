#include "firststep/core.hpp"

#include <cctype>

#include "firststep/error.hpp"
#include "firststep/util.hpp"

namespace firststep {

AnswerKind answer_kind_from_string(std::string_view s) {
  if (s == "integer") return AnswerKind::Integer;
  if (s == "freeform") return AnswerKind::Freeform;
  if (s == "external_verdict") return AnswerKind::ExternalVerdict;
  throw Error("invalid_answer_kind", std::string(s));
}

std::string answer_kind_to_string(AnswerKind k) {
  switch (k) {
    case AnswerKind::Integer: return "integer";
    case AnswerKind::Freeform: return "freeform";
    case AnswerKind::ExternalVerdict: return "external_verdict";
  }
  return "freeform";
}

void validate(const DecodingParams& p) {
  if (!(p.temperature >= 0.0) || p.temperature > 2.0)
    throw Error("invalid_params", "temperature out of [0,2]");
  if (!(p.top_p > 0.0) || p.top_p > 1.0)
    throw Error("invalid_params", "top_p out of (0,1]");
  if (!(p.min_p >= 0.0) || p.min_p > 1.0)
    throw Error("invalid_params", "min_p out of [0,1]");
  if (p.max_tokens < 1) throw Error("invalid_params", "max_tokens must be >= 1");
}

static std::string canonicalize_integer(std::string_view raw) {
  std::string t;
  t.reserve(raw.size());
  for (unsigned char c : raw)
    if (!std::isspace(c) && c != '$') t.push_back(static_cast<char>(c));
  size_t i = 0;
  bool negative = false;
  if (i < t.size() && (t[i] == '+' || t[i] == '-')) {
    negative = (t[i] == '-');
    ++i;
  }
  if (i == t.size()) return "";
  for (size_t j = i; j < t.size(); ++j)
    if (t[j] < '0' || t[j] > '9') return "";
  std::string digits = t.substr(i);
  size_t nz = digits.find_first_not_of('0');
  if (nz == std::string::npos) return "0";
  digits.erase(0, nz);
  return negative ? "-" + digits : digits;
}

std::string canonicalize_answer(std::string_view raw, AnswerKind kind) {
  switch (kind) {
    case AnswerKind::Integer: return canonicalize_integer(raw);
    case AnswerKind::Freeform: return lower_ascii(collapse_whitespace(trim(raw)));
    case AnswerKind::ExternalVerdict: return std::string(raw);
  }
  return "";
}

// Returns position one past the matching close brace, or npos if unbalanced.
// `open` points at the '{'. Escaped braces (\{ \}) neither open nor close.
static size_t scan_balanced(std::string_view text, size_t open) {
  int depth = 0;
  for (size_t i = open; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\\' && i + 1 < text.size() && (text[i + 1] == '{' || text[i + 1] == '}')) {
      ++i;
      continue;
    }
    if (c == '{') ++depth;
    else if (c == '}') {
      --depth;
      if (depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::vector<std::pair<size_t, size_t>> find_boxed_groups(std::string_view text) {
  static constexpr std::string_view kMarker = "\\boxed{";
  std::vector<std::pair<size_t, size_t>> groups;
  size_t pos = 0;
  while (true) {
    size_t hit = text.find(kMarker, pos);
    if (hit == std::string_view::npos) break;
    size_t open = hit + kMarker.size() - 1;  // the '{'
    size_t end = scan_balanced(text, open);
    if (end == std::string_view::npos) {
      pos = hit + kMarker.size();  // unbalanced; skip the marker
      continue;
    }
    groups.emplace_back(hit, end);
    pos = end;
  }
  return groups;
}

Prediction extract_prediction(std::string_view conclusion, AnswerKind kind) {
  static constexpr std::string_view kMarker = "\\boxed{";
  Prediction out;
  auto groups = find_boxed_groups(conclusion);
  if (!groups.empty()) {
    auto [start, end] = groups.back();
    size_t open = start + kMarker.size() - 1;
    out.raw = std::string(conclusion.substr(open + 1, end - open - 2));
  }
  out.canonical = canonicalize_answer(out.raw, kind);
  out.present = !out.canonical.empty();
  if (!out.present) {
    out.raw.clear();
    out.canonical.clear();
  }
  return out;
}

bool answers_equal(std::string_view a, std::string_view b, AnswerKind kind) {
  if (kind == AnswerKind::ExternalVerdict)
    throw Error("kind_mismatch", "external_verdict answers are not locally comparable");
  return canonicalize_answer(a, kind) == canonicalize_answer(b, kind);
}

bool answers_equal(const Prediction& pred, const Question& q) {
  if (q.answer_kind == AnswerKind::ExternalVerdict)
    throw Error("kind_mismatch", "external_verdict answers are not locally comparable");
  if (!pred.present) return false;
  return canonicalize_answer(pred.raw, q.answer_kind) == q.answer;
}

int64_t approximate_token_count(std::string_view text) {
  return static_cast<int64_t>((text.size() + 3) / 4);
}

}  // namespace firststep
