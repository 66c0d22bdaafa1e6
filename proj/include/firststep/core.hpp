#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace firststep {

enum class AnswerKind { Integer, Freeform, ExternalVerdict };

AnswerKind answer_kind_from_string(std::string_view s);
std::string answer_kind_to_string(AnswerKind k);

struct Question {
  std::string id;
  std::string prompt;
  std::string answer;  // canonical form
  AnswerKind answer_kind = AnswerKind::Integer;
  std::string benchmark_tag;
};

// Result of scanning a completion for a final boxed answer.
struct Prediction {
  bool present = false;
  std::string raw;        // inner text of the winning \boxed{...} group
  std::string canonical;  // empty iff !present
};

struct DecodingParams {
  double temperature = 1.0;
  double top_p = 0.9;
  double min_p = 0.05;
  int max_tokens = 16384;
  uint64_t seed = 0;
};

// Throws Error("invalid_params") when out of range.
void validate(const DecodingParams& p);

// Integer: drop whitespace and '$', optional sign, strip leading zeros,
// "-0" -> "0"; any other character -> "". Freeform: trim, collapse internal
// whitespace, lowercase. ExternalVerdict: returns input unchanged.
std::string canonicalize_answer(std::string_view raw, AnswerKind kind);

// Every balanced \boxed{...} group as [marker_start, one_past_close_brace);
// escaped braces do not nest or close; unbalanced groups are skipped.
std::vector<std::pair<size_t, size_t>> find_boxed_groups(std::string_view text);

// Last balanced \boxed{...} group wins; escaped braces do not nest/close.
Prediction extract_prediction(std::string_view conclusion,
                              AnswerKind kind = AnswerKind::Freeform);

// Both sides canonicalized under `kind`. ExternalVerdict cannot be compared
// locally and throws Error("kind_mismatch").
bool answers_equal(std::string_view a, std::string_view b, AnswerKind kind);

// Absent prediction is always wrong.
bool answers_equal(const Prediction& pred, const Question& q);

// Deliberately crude length proxy used when a backend reports no usage.
int64_t approximate_token_count(std::string_view text);

}  // namespace firststep
