#include "firststep/sim.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <string_view>

#include "firststep/error.hpp"
#include "firststep/util.hpp"

namespace firststep {

namespace {

constexpr uint64_t kSlotGood = 1;
constexpr uint64_t kSlotQuality = 2;
constexpr uint64_t kSlotCorrect = 3;
constexpr uint64_t kSlotWrongPick = 4;
constexpr uint64_t kSlotProbePick = 5;
constexpr uint64_t kSlotForeignCorrect = 6;
constexpr uint64_t kSlotForeignPick = 7;
constexpr uint64_t kWordSlotBase = 1000;

// No trigger keywords ("alternatively", "wait") and no digits: keyword
// segmentation and answer-mention scanning must see only what the stream
// places deliberately.
constexpr std::array<std::string_view, 48> kVocab = {
    "the",      "we",      "can",       "now",      "let",      "so",
    "then",     "this",    "value",     "term",     "factor",   "sum",
    "product",  "ratio",   "equation",  "expression", "substitute", "simplify",
    "expand",   "combine", "solve",     "check",    "verify",   "note",
    "observe",  "consider", "suppose",  "therefore", "because", "since",
    "which",    "gives",   "yields",    "equals",   "leads",    "implies",
    "reduce",   "rewrite", "apply",     "compute",  "estimate", "bound",
    "case",     "both",    "sides",     "next",     "step",     "result"};

uint64_t sim_key(uint64_t qkey, uint64_t seed, uint64_t slot) {
  uint64_t h = mix64(qkey ^ (seed + 0x9e3779b97f4a7c15ULL));
  return mix64(h ^ slot);
}

double sim_unit(uint64_t qkey, uint64_t seed, uint64_t slot) {
  return static_cast<double>(sim_key(qkey, seed, slot) >> 11) * 0x1.0p-53;
}

std::string wrong_value(const Question& q, int pick) {
  if (q.answer_kind == AnswerKind::Integer) {
    long a = std::strtol(q.answer.c_str(), nullptr, 10);
    long w = ((a % 1000 + 1000) + 37 * (static_cast<long>(pick) + 1)) % 1000;
    return std::to_string(w);
  }
  return q.answer + "q" + std::to_string(pick + 1);
}

struct Sketch {
  uint64_t qkey = 0;
  uint64_t seed = 0;
  bool good = false;
  double quality = 0.0;
  bool final_correct = false;
  std::string final_value;
  int total_tokens = 0;
  int think_tokens = 0;
};

Sketch make_sketch(const SimProfile& p, const Question& q, uint64_t seed) {
  Sketch s;
  s.qkey = fnv1a64(q.id);
  s.seed = seed;
  s.good = sim_unit(s.qkey, seed, kSlotGood) < p.p_good_first;
  double u = sim_unit(s.qkey, seed, kSlotQuality);
  s.quality = s.good ? 0.6 + 0.4 * u : 0.4 * u;
  double pc = s.good ? p.p_correct_given_good_first : p.p_correct_given_bad_first;
  s.final_correct = sim_unit(s.qkey, seed, kSlotCorrect) < pc;
  if (s.final_correct) {
    s.final_value = q.answer;
  } else {
    int pick = static_cast<int>(sim_unit(s.qkey, seed, kSlotWrongPick) *
                                static_cast<double>(p.wrong_answer_pool));
    pick = std::min(pick, p.wrong_answer_pool - 1);
    s.final_value = wrong_value(q, pick);
  }
  s.total_tokens = p.mean_total_tokens;
  s.think_tokens = p.mean_total_tokens - p.conclusion_tokens - 1;
  return s;
}

std::string_view token_sep(const Sketch& s, int i) {
  if (i <= 0) return "";
  if (i < s.think_tokens) {
    if (i % 29 == 0) return ". ";
    if (i % 13 == 0) return ".\n\n";
    return " ";
  }
  if (i == s.think_tokens) return "\n";           // before the close marker
  if (i == s.think_tokens + 1) return "\n\n";     // conclusion opener
  return " ";
}

std::string token_word(const Sketch& s, const SimProfile& p, int i, const std::string& value) {
  if (i < s.think_tokens) {
    if (i == 0) return "@sim/" + to_hex(s.qkey) + "/" + std::to_string(s.seed) + "@";
    if (i == 7) return value;  // the trace commits to its final value early
    if (i % 29 == 0) return "Alternatively";
    return std::string(kVocab[sim_key(s.qkey, s.seed, kWordSlotBase + static_cast<uint64_t>(i)) %
                              kVocab.size()]);
  }
  if (i == s.think_tokens) return "</think>";
  const int c = p.conclusion_tokens;
  int j = i - s.think_tokens - 1;  // conclusion index in [0, c)
  switch (j) {
    case 0: return "The";
    case 1: return "computed";
    case 2: return "value";
    case 3: return "equals";
    case 4: return value + ".";
    default: break;
  }
  if (j >= c - 5) {
    switch (j - (c - 5)) {
      case 0: return "The";
      case 1: return "final";
      case 2: return "answer";
      case 3: return "is";
      case 4: return "\\boxed{" + value + "}.";
      default: break;
    }
  }
  // Filler reuses the early think-stream vocabulary so conclusions resemble
  // the opening step more than later steps.
  return std::string(kVocab[sim_key(s.qkey, s.seed,
                                    kWordSlotBase + 1 + static_cast<uint64_t>(j)) %
                            kVocab.size()]);
}

std::string emit_tokens(const Sketch& s, const SimProfile& p, int from, int limit,
                        const std::string* value_override, int* emitted_out, bool* capped_out) {
  const std::string& value = value_override ? *value_override : s.final_value;
  int end = s.total_tokens;
  bool capped = false;
  if (limit >= 0 && from + limit < end) {
    end = from + limit;
    capped = true;
  }
  std::string out;
  for (int i = from; i < end; ++i) {
    out += token_sep(s, i);
    out += token_word(s, p, i, value);
  }
  if (emitted_out) *emitted_out = std::max(0, end - from);
  if (capped_out) *capped_out = capped;
  return out;
}

// Token index where `text` ends if it equals the stream's first k tokens
// exactly (ending on a token boundary); -1 otherwise.
int match_own_prefix(const Sketch& s, const SimProfile& p, std::string_view text) {
  if (text.empty()) return 0;
  std::string build;
  for (int i = 0; i < s.total_tokens; ++i) {
    build += token_sep(s, i);
    build += token_word(s, p, i, s.final_value);
    if (build.size() >= text.size()) {
      if (build.size() != text.size()) return -1;  // boundary falls mid-token
      return build == text ? i + 1 : -1;
    }
    if (text.compare(0, build.size(), build) != 0) return -1;
  }
  return -1;
}

}  // namespace

void validate_profile(const SimProfile& p) {
  auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!prob(p.p_correct_given_good_first) || !prob(p.p_correct_given_bad_first) ||
      !prob(p.p_good_first) || !prob(p.p_correct_prefix_with_answer) ||
      !prob(p.p_correct_prefix_without_answer))
    throw Error("invalid_profile", "probabilities must lie in [0,1]");
  if (p.conclusion_tokens < 12)
    throw Error("invalid_profile", "conclusion_tokens must be >= 12");
  if (p.mean_total_tokens < p.conclusion_tokens + 16)
    throw Error("invalid_profile", "mean_total_tokens leaves no room for reasoning");
  if (p.wrong_answer_pool < 1)
    throw Error("invalid_profile", "wrong_answer_pool must be >= 1");
}

SimTrace simulate_trace(const SimProfile& profile, const Question& q, uint64_t seed,
                        int first_step_len) {
  validate_profile(profile);
  if (first_step_len < 1) throw Error("invalid_params", "first_step_len must be >= 1");
  Sketch s = make_sketch(profile, q, seed);
  SimTrace t;
  t.first_step_quality = s.quality;
  t.final_correct = s.final_correct;
  int emitted = 0;
  t.first_step = emit_tokens(s, profile, 0, first_step_len, nullptr, &emitted, nullptr);
  t.first_step_tokens = emitted;
  int rest = 0;
  t.continuation = emit_tokens(s, profile, emitted, -1, nullptr, &rest, nullptr);
  t.continuation_tokens = rest;
  t.total_tokens = emitted + rest;
  return t;
}

SimGenerationBackend::SimGenerationBackend(SimProfile profile, std::vector<Question> questions,
                                           ChatTemplate chat_template)
    : profile_(profile), template_(std::move(chat_template)) {
  validate_profile(profile_);
  for (auto& q : questions) by_prompt_.emplace(template_.render(q.prompt), std::move(q));
}

GenerationResult SimGenerationBackend::generate(const GenerationRequest& request) {
  validate(request.params);
  calls_.fetch_add(1);
  auto it = by_prompt_.find(request.prompt);
  if (it == by_prompt_.end())
    throw Error("unknown_prompt", "prompt is not in the sim dataset");
  const Question& q = it->second;
  Sketch s = make_sketch(profile_, q, request.params.seed);

  GenerationResult out;
  out.usage_prompt_tokens =
      approximate_token_count(request.prompt) + approximate_token_count(request.prefix);
  out.usage_source = UsageSource::BackendReported;

  int emitted = 0;
  bool capped = false;
  int k = match_own_prefix(s, profile_, request.prefix);
  if (k >= 0) {
    // Fresh sample (k=0) or exact resumption of this stream.
    out.text = emit_tokens(s, profile_, k, request.params.max_tokens, nullptr, &emitted, &capped);
  } else if (request.prefix.find(template_.think_close) != std::string::npos) {
    // Conclusion-only probe: the caller closed the think block themselves.
    size_t close = request.prefix.find(template_.think_close);
    std::string_view t1 = std::string_view(request.prefix).substr(0, close);
    while (!t1.empty() && std::isspace(static_cast<unsigned char>(t1.back()))) t1.remove_suffix(1);
    std::string value;
    if (match_own_prefix(s, profile_, t1) >= 0) {
      // Probing this stream's own first step: the conclusion comes out
      // correct exactly when the first step was good.
      if (s.good) {
        value = q.answer;
      } else {
        int pick = static_cast<int>(sim_unit(s.qkey, s.seed, kSlotProbePick) *
                                    static_cast<double>(profile_.wrong_answer_pool));
        value = wrong_value(q, std::min(pick, profile_.wrong_answer_pool - 1));
      }
    } else {
      bool has_answer = contains_standalone(request.prefix, q.answer);
      double pc = has_answer ? profile_.p_correct_prefix_with_answer
                             : profile_.p_correct_prefix_without_answer;
      uint64_t slot = mix64(kSlotForeignCorrect ^ fnv1a64(request.prefix));
      if (sim_unit(s.qkey, s.seed, slot) < pc) {
        value = q.answer;
      } else {
        uint64_t pslot = mix64(kSlotForeignPick ^ fnv1a64(request.prefix));
        int pick = static_cast<int>(sim_unit(s.qkey, s.seed, pslot) *
                                    static_cast<double>(profile_.wrong_answer_pool));
        value = wrong_value(q, std::min(pick, profile_.wrong_answer_pool - 1));
      }
    }
    out.text = emit_tokens(s, profile_, s.think_tokens + 1, request.params.max_tokens, &value,
                           &emitted, &capped);
  } else {
    // Foreign think prefix (perturbed first step): outcome depends on
    // whether the prefix still mentions the answer.
    bool has_answer = contains_standalone(request.prefix, q.answer);
    double pc = has_answer ? profile_.p_correct_prefix_with_answer
                           : profile_.p_correct_prefix_without_answer;
    uint64_t slot = mix64(kSlotForeignCorrect ^ fnv1a64(request.prefix));
    std::string value;
    if (sim_unit(s.qkey, s.seed, slot) < pc) {
      value = q.answer;
    } else {
      uint64_t pslot = mix64(kSlotForeignPick ^ fnv1a64(request.prefix));
      int pick = static_cast<int>(sim_unit(s.qkey, s.seed, pslot) *
                                  static_cast<double>(profile_.wrong_answer_pool));
      value = wrong_value(q, std::min(pick, profile_.wrong_answer_pool - 1));
    }
    int resume = std::min(static_cast<int>(count_words(request.prefix)), s.think_tokens);
    out.text =
        emit_tokens(s, profile_, resume, request.params.max_tokens, &value, &emitted, &capped);
  }
  out.usage_completion_tokens = emitted;
  out.finish_reason = capped ? FinishReason::LengthCap : FinishReason::StopToken;
  return out;
}

namespace {

bool parse_marker(const std::string& text, uint64_t* qkey, uint64_t* seed) {
  size_t pos = text.find("@sim/");
  while (pos != std::string::npos) {
    size_t h = pos + 5;
    if (h + 16 < text.size() && text[h + 16] == '/') {
      uint64_t key = 0;
      bool ok = true;
      for (size_t i = 0; i < 16; ++i) {
        char c = text[h + i];
        key <<= 4;
        if (c >= '0' && c <= '9') key |= static_cast<uint64_t>(c - '0');
        else if (c >= 'a' && c <= 'f') key |= static_cast<uint64_t>(c - 'a' + 10);
        else { ok = false; break; }
      }
      if (ok) {
        size_t d = h + 17;
        uint64_t sd = 0;
        size_t digits_start = d;
        while (d < text.size() && std::isdigit(static_cast<unsigned char>(text[d]))) {
          sd = sd * 10 + static_cast<uint64_t>(text[d] - '0');
          ++d;
        }
        if (d > digits_start && d < text.size() && text[d] == '@') {
          *qkey = key;
          *seed = sd;
          return true;
        }
      }
    }
    pos = text.find("@sim/", pos + 1);
  }
  return false;
}

}  // namespace

std::vector<double> SimRewardBackend::score_steps(const std::string&,
                                                  const std::vector<std::string>& steps) {
  std::string joined;
  for (size_t i = 0; i < steps.size(); ++i) {
    if (i) joined += "\n\n";
    joined += steps[i];
  }
  double score = 0.5;  // neutral when the text carries no stream marker
  uint64_t qkey = 0, seed = 0;
  if (parse_marker(joined, &qkey, &seed)) {
    bool good = sim_unit(qkey, seed, kSlotGood) < profile_.p_good_first;
    double u = sim_unit(qkey, seed, kSlotQuality);
    score = good ? 0.6 + 0.4 * u : 0.4 * u;
  }
  return std::vector<double>(steps.size(), score);
}

std::vector<std::vector<double>> SimEmbeddingBackend::embed(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(kDim, 0.0);
    std::string word;
    auto flush = [&] {
      if (!word.empty()) {
        v[fnv1a64(word) % kDim] += 1.0;
        word.clear();
      }
    };
    for (unsigned char c : text) {
      if (std::isalnum(c)) word.push_back(lower_ascii_char(static_cast<char>(c)));
      else flush();
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace firststep
