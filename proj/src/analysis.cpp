#include "firststep/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "firststep/error.hpp"
#include "firststep/util.hpp"

namespace firststep {

std::string target_mode_to_string(TargetMode m) {
  return m == TargetMode::MeanSteps ? "mean_steps" : "max_steps";
}

std::string perturb_variant_to_string(PerturbVariant v) {
  return v == PerturbVariant::CorrectBaseline ? "correct_baseline" : "incorrect";
}

PerturbVariant perturb_variant_from_string(const std::string& s) {
  if (s == "correct_baseline") return PerturbVariant::CorrectBaseline;
  if (s == "incorrect") return PerturbVariant::Incorrect;
  throw Error("invalid_variant", s);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw Error("dimension_mismatch", std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

SimilarityCurve similarity_curve(const TraceRecord& record, const Question& q,
                                 const KeywordProfile& profile, const ChatTemplate& tmpl,
                                 EmbeddingBackend& embedding) {
  if (record.conclusion_text.empty())
    throw Error("empty_conclusion", "similarity needs a concluded trace");
  std::string full = record.first_step_text + record.continuation_text;
  size_t close = full.find(tmpl.think_close);
  std::string think = close == std::string::npos ? full : full.substr(0, close);
  std::string stripped = strip_question_overlap(think, q);
  StepSegmentation seg = segment_steps(stripped, profile);

  std::vector<std::string> batch = seg.steps;
  batch.push_back(record.conclusion_text);
  std::vector<std::vector<double>> vectors = embedding.embed(batch);
  if (vectors.size() != batch.size())
    throw Error("malformed_response", "embedding count does not match text count");

  SimilarityCurve curve;
  curve.question_id = record.question_id;
  curve.seed = record.seed;
  curve.step_count = static_cast<int>(seg.steps.size());
  const std::vector<double>& conclusion_vec = vectors.back();
  for (size_t i = 0; i < seg.steps.size(); ++i) {
    double v = cosine_similarity(vectors[i], conclusion_vec);
    if (v > 1.0 + 1e-9 || v < -1.0 - 1e-9)
      throw Error("similarity_out_of_range", std::to_string(v));
    curve.values.push_back(std::clamp(v, -1.0, 1.0));
  }
  return curve;
}

std::vector<double> resample_linear(const std::vector<double>& values, int grid_size) {
  if (values.empty()) throw Error("empty_input", "cannot resample an empty curve");
  if (grid_size < 1) throw Error("invalid_params", "grid_size must be >= 1");
  const int t = static_cast<int>(values.size());
  std::vector<double> out(static_cast<size_t>(grid_size));
  if (t == 1) {
    std::fill(out.begin(), out.end(), values[0]);
    return out;
  }
  for (int j = 0; j < grid_size; ++j) {
    if (j == 0) {
      out[0] = values.front();
      continue;
    }
    if (j == grid_size - 1) {
      out[static_cast<size_t>(j)] = values.back();
      continue;
    }
    double x = static_cast<double>(j) * static_cast<double>(t - 1) /
               static_cast<double>(grid_size - 1);
    int idx = static_cast<int>(x);
    if (idx >= t - 1) {
      out[static_cast<size_t>(j)] = values.back();
      continue;
    }
    double frac = x - static_cast<double>(idx);
    out[static_cast<size_t>(j)] =
        values[static_cast<size_t>(idx)] * (1.0 - frac) +
        values[static_cast<size_t>(idx) + 1] * frac;
  }
  return out;
}

AggregatedCurve interpolate_and_aggregate(const std::vector<SimilarityCurve>& curves,
                                          TargetMode mode) {
  if (curves.empty()) throw Error("empty_input", "no curves to aggregate");
  int grid_size;
  if (mode == TargetMode::MaxSteps) {
    int mx = 1;
    for (const auto& c : curves) mx = std::max(mx, c.step_count);
    grid_size = mx;
  } else {
    double sum = 0.0;
    for (const auto& c : curves) sum += c.step_count;
    grid_size = std::max(1, static_cast<int>(std::llround(sum / static_cast<double>(curves.size()))));
  }
  AggregatedCurve agg;
  agg.n_curves = static_cast<int>(curves.size());
  agg.grid.resize(static_cast<size_t>(grid_size));
  for (int j = 0; j < grid_size; ++j)
    agg.grid[static_cast<size_t>(j)] =
        grid_size == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(grid_size - 1);

  std::vector<std::vector<double>> resampled;
  resampled.reserve(curves.size());
  for (const auto& c : curves) resampled.push_back(resample_linear(c.values, grid_size));

  agg.mean.assign(static_cast<size_t>(grid_size), 0.0);
  agg.std_error.assign(static_cast<size_t>(grid_size), 0.0);
  for (const auto& r : resampled)
    for (int j = 0; j < grid_size; ++j) agg.mean[static_cast<size_t>(j)] += r[static_cast<size_t>(j)];
  for (double& m : agg.mean) m /= static_cast<double>(curves.size());
  if (curves.size() > 1) {
    for (int j = 0; j < grid_size; ++j) {
      double ss = 0.0;
      for (const auto& r : resampled) {
        double d = r[static_cast<size_t>(j)] - agg.mean[static_cast<size_t>(j)];
        ss += d * d;
      }
      double var = ss / static_cast<double>(curves.size() - 1);
      agg.std_error[static_cast<size_t>(j)] =
          std::sqrt(var / static_cast<double>(curves.size()));
    }
  }
  return agg;
}

std::pair<std::string, Prediction> force_first_step_conclusion(const Question& q,
                                                               const std::string& first_step,
                                                               const ExperimentConfig& cfg,
                                                               GenerationBackend& gen,
                                                               uint64_t seed) {
  if (first_step.empty()) throw Error("empty_input", "first_step must be non-empty");
  GenerationRequest req;
  req.prompt = cfg.chat_template.render(q.prompt);
  req.prefix = first_step + "\n" + cfg.chat_template.think_close;
  req.params = cfg.decoding;
  req.params.seed = seed;
  req.params.max_tokens = cfg.max_total_tokens;
  req.stop_condition = StopCondition::ThinkCloseThenConclude;
  GenerationResult res = gen.generate(req);
  return {res.text, extract_prediction(res.text, q.answer_kind)};
}

namespace {

std::string delete_boxed_groups(const std::string& text) {
  std::string out;
  size_t prev = 0;
  for (auto [start, end] : find_boxed_groups(text)) {
    out += text.substr(prev, start - prev);
    prev = end;
  }
  out += text.substr(prev);
  // Unbalanced leftovers would still grep as \boxed; scrub the marker.
  static const std::string kMarker = "\\boxed";
  size_t pos;
  while ((pos = out.find(kMarker)) != std::string::npos) {
    size_t len = kMarker.size();
    if (pos + len < out.size() && out[pos + len] == '{') ++len;
    out.erase(pos, len);
  }
  return out;
}

std::string drop_revealing_sentences(const std::string& text, const Question& q) {
  const size_t total = text.size();
  std::string out;
  for (auto [b, e] : sentence_spans(text)) {
    std::string_view sentence = std::string_view(text).substr(b, e - b);
    bool says_final_answer = !find_whole_word_ci(sentence, "final answer").empty();
    bool mentions_answer = contains_standalone(sentence, q.answer);
    bool in_final_fifth = e * 5 >= total * 4;  // sentence ends in the last 20%
    if (says_final_answer || (mentions_answer && in_final_fifth)) continue;
    out.append(sentence);
  }
  return out;
}

}  // namespace

PerturbedFirstStep build_perturbed_first_step(const std::string& conclusion, const Question& q,
                                              PerturbVariant variant, int delta) {
  Prediction src = extract_prediction(conclusion, q.answer_kind);
  if (!src.present || src.canonical != q.answer)
    throw Error("source_not_correct", "source conclusion must conclude the correct answer");
  if (variant == PerturbVariant::Incorrect) {
    if (delta != 1 && delta != -1 && delta != 10 && delta != -10)
      throw Error("invalid_delta", "delta must be one of {+1,-1,+10,-10}");
    if (q.answer_kind != AnswerKind::Integer)
      throw Error("kind_mismatch", "numeric perturbation needs an integer answer");
  }
  std::string text = drop_revealing_sentences(delete_boxed_groups(conclusion), q);
  PerturbedFirstStep out;
  out.source_question_id = q.id;
  out.variant = variant;
  out.delta = variant == PerturbVariant::Incorrect ? delta : 0;
  if (variant == PerturbVariant::CorrectBaseline) {
    out.text = text;
    return out;
  }
  std::vector<size_t> sites = find_whole_word_ci(text, q.answer);
  if (sites.empty())
    throw Error("answer_absent_after_step2", "no standalone answer token left to corrupt");
  long a = std::strtol(q.answer.c_str(), nullptr, 10);
  std::string replacement = std::to_string(a + delta);
  std::string replaced;
  size_t prev = 0;
  for (size_t pos : sites) {
    replaced += text.substr(prev, pos - prev);
    replaced += replacement;
    prev = pos + q.answer.size();
  }
  replaced += text.substr(prev);
  out.text = std::move(replaced);
  return out;
}

TraceRecord run_perturbation_trial(const Question& q, const PerturbedFirstStep& pfs,
                                   const ExperimentConfig& cfg, GenerationBackend& gen,
                                   uint64_t trial_seed) {
  GenerationRequest req;
  req.prompt = cfg.chat_template.render(q.prompt);
  req.prefix = pfs.text + "Alternatively";
  req.params = cfg.decoding;
  req.params.seed = trial_seed;
  req.params.max_tokens = cfg.max_total_tokens;
  req.stop_condition = StopCondition::ThinkCloseThenConclude;
  GenerationResult res = gen.generate(req);
  TraceRecord r;
  r.question_id = q.id;
  r.seed = trial_seed;
  r.first_step_text = req.prefix;
  r.continuation_text = res.text;
  r.first_step_tokens = approximate_token_count(req.prefix);
  r.continuation_tokens = res.usage_completion_tokens;
  r.finish_reason = res.finish_reason;
  r.usage_source = res.usage_source;
  finalize_trace(r, q, cfg.chat_template);
  return r;
}

}  // namespace firststep
