#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "firststep/core.hpp"

namespace firststep {

struct KeywordProfile {
  std::string model_family;
  std::vector<std::string> keywords;  // lowercase trigger words
};

struct StepSegmentation {
  std::vector<std::string> steps;
  std::vector<std::pair<size_t, size_t>> offsets;  // [start_byte, end_byte)
  std::vector<std::string> keyword_set;
};

// Splits before each whole-word, sentence/paragraph-initial keyword
// occurrence ("sentence-initial" = only spaces/tabs between the occurrence
// and the preceding {., !, ?, newline} or start-of-text). An occurrence at
// byte 0 starts the first step rather than opening a new one. Lossless:
// steps concatenate byte-for-byte to the input. Throws Error("empty_trace").
StepSegmentation segment_steps(std::string_view trace, const KeywordProfile& profile);

// Byte positions (sorted, deduped) where segment_steps would split.
std::vector<size_t> step_boundaries(std::string_view trace, const KeywordProfile& profile);

// Lossless sentence spans: each span runs through its terminator run
// ({.!?}+ or a newline) plus any following whitespace.
std::vector<std::pair<size_t, size_t>> sentence_spans(std::string_view text);

// Fraction of the sentence's token n-grams (n = min(8, token count)) that
// also occur in the prompt; 0 when the sentence has no tokens.
double ngram_overlap_ratio(std::string_view sentence, std::string_view prompt);

// Drops leading whole sentences whose overlap with q.prompt exceeds 0.6,
// stopping at the first miss and never past 25% of the trace's bytes.
// The result is always a suffix of the input.
std::string strip_question_overlap(std::string_view trace, const Question& q);

}  // namespace firststep
