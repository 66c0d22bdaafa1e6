#include "firststep/segmentation.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include "firststep/error.hpp"
#include "firststep/util.hpp"

namespace firststep {

static bool sentence_initial(std::string_view text, size_t pos) {
  size_t i = pos;
  while (i > 0) {
    char c = text[i - 1];
    if (c == ' ' || c == '\t' || c == '\r') {
      --i;
      continue;
    }
    return c == '.' || c == '!' || c == '?' || c == '\n';
  }
  return true;  // start of text
}

std::vector<size_t> step_boundaries(std::string_view trace, const KeywordProfile& profile) {
  std::vector<size_t> cuts;
  for (const auto& kw : profile.keywords) {
    for (size_t pos : find_whole_word_ci(trace, kw)) {
      if (pos == 0) continue;  // would create an empty leading step
      if (sentence_initial(trace, pos)) cuts.push_back(pos);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  return cuts;
}

StepSegmentation segment_steps(std::string_view trace, const KeywordProfile& profile) {
  if (trace.empty()) throw Error("empty_trace", "cannot segment an empty trace");
  StepSegmentation seg;
  seg.keyword_set = profile.keywords;
  std::vector<size_t> cuts = step_boundaries(trace, profile);
  size_t start = 0;
  for (size_t cut : cuts) {
    seg.offsets.emplace_back(start, cut);
    start = cut;
  }
  seg.offsets.emplace_back(start, trace.size());
  seg.steps.reserve(seg.offsets.size());
  for (auto [b, e] : seg.offsets) seg.steps.emplace_back(trace.substr(b, e - b));
  return seg;
}

std::vector<std::pair<size_t, size_t>> sentence_spans(std::string_view text) {
  std::vector<std::pair<size_t, size_t>> spans;
  size_t pos = 0;
  const size_t n = text.size();
  while (pos < n) {
    size_t i = pos;
    while (i < n) {
      char c = text[i];
      if (c == '.' || c == '!' || c == '?') {
        while (i < n && (text[i] == '.' || text[i] == '!' || text[i] == '?')) ++i;
        break;
      }
      if (c == '\n') {
        ++i;
        break;
      }
      ++i;
    }
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    spans.emplace_back(pos, i);
    pos = i;
  }
  return spans;
}

static std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(lower_ascii_char(static_cast<char>(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

static std::vector<std::string> ngrams(const std::vector<std::string>& tokens, size_t n) {
  std::vector<std::string> grams;
  if (n == 0 || tokens.size() < n) return grams;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string g = tokens[i];
    for (size_t j = 1; j < n; ++j) {
      g.push_back(' ');
      g += tokens[i + j];
    }
    grams.push_back(std::move(g));
  }
  return grams;
}

double ngram_overlap_ratio(std::string_view sentence, std::string_view prompt) {
  std::vector<std::string> sent_tokens = word_tokens(sentence);
  if (sent_tokens.empty()) return 0.0;
  size_t n = std::min<size_t>(8, sent_tokens.size());
  std::vector<std::string> sent_grams = ngrams(sent_tokens, n);
  if (sent_grams.empty()) return 0.0;
  std::vector<std::string> prompt_grams = ngrams(word_tokens(prompt), n);
  std::unordered_set<std::string> prompt_set(prompt_grams.begin(), prompt_grams.end());
  size_t hits = 0;
  for (const auto& g : sent_grams)
    if (prompt_set.count(g)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(sent_grams.size());
}

std::string strip_question_overlap(std::string_view trace, const Question& q) {
  if (trace.empty()) return std::string(trace);
  const size_t byte_cap = trace.size() / 4;  // strip at most the first 25%
  size_t removed = 0;
  for (auto [b, e] : sentence_spans(trace)) {
    if (e > byte_cap) break;
    std::string_view sentence = trace.substr(b, e - b);
    if (ngram_overlap_ratio(sentence, q.prompt) <= 0.6) break;
    removed = e;
  }
  return std::string(trace.substr(removed));
}

}  // namespace firststep
