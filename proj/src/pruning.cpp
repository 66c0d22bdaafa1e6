#include "firststep/pruning.hpp"

#include <algorithm>
#include <mutex>

#include "firststep/error.hpp"
#include "firststep/util.hpp"

namespace firststep {

std::string candidate_status_to_string(CandidateStatus s) {
  switch (s) {
    case CandidateStatus::Sampled: return "sampled";
    case CandidateStatus::Scored: return "scored";
    case CandidateStatus::Selected: return "selected";
    case CandidateStatus::Discarded: return "discarded";
  }
  return "sampled";
}

CandidateStatus candidate_status_from_string(const std::string& s) {
  if (s == "sampled") return CandidateStatus::Sampled;
  if (s == "scored") return CandidateStatus::Scored;
  if (s == "selected") return CandidateStatus::Selected;
  if (s == "discarded") return CandidateStatus::Discarded;
  throw Error("invalid_status", s);
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.n_candidates < 1) throw Error("invalid_config", "n_candidates must be >= 1");
  if (cfg.keep_m < 1 || cfg.keep_m > cfg.n_candidates)
    throw Error("invalid_config", "keep_m must satisfy 1 <= M <= N");
  if (cfg.first_step_len < 1) throw Error("invalid_config", "first_step_len must be >= 1");
  if (cfg.max_total_tokens <= cfg.first_step_len)
    throw Error("invalid_config", "max_total_tokens must exceed first_step_len");
  if (!(cfg.min_sample_fraction > 0.0) || cfg.min_sample_fraction > 1.0)
    throw Error("invalid_config", "min_sample_fraction must lie in (0,1]");
  if (cfg.endpoint_concurrency < 1)
    throw Error("invalid_config", "endpoint_concurrency must be >= 1");
  validate(cfg.decoding);
}

SampleOutcome sample_first_steps(const Question& q, const ExperimentConfig& cfg,
                                 GenerationBackend& gen,
                                 const std::unordered_set<uint64_t>* skip_seeds) {
  SampleOutcome out;
  const int n = cfg.n_candidates;
  std::vector<int> todo;
  for (int i = 0; i < n; ++i) {
    uint64_t seed = cfg.seed_for(i);
    if (skip_seeds && skip_seeds->count(seed)) continue;
    todo.push_back(i);
  }
  out.requested = static_cast<int>(todo.size());
  std::vector<FirstStepCandidate> slots(todo.size());
  std::vector<char> ok(todo.size(), 0);
  std::mutex err_mu;
  const std::string prompt = cfg.chat_template.render(q.prompt);
  parallel_for(todo.size(), cfg.endpoint_concurrency, [&](size_t idx) {
    int i = todo[idx];
    GenerationRequest req;
    req.prompt = prompt;
    req.params = cfg.decoding;
    req.params.seed = cfg.seed_for(i);
    req.params.max_tokens = cfg.first_step_len;
    req.stop_condition = StopCondition::MaxTokensOnly;
    try {
      GenerationResult res = gen.generate(req);
      FirstStepCandidate& c = slots[idx];
      c.question_id = q.id;
      c.seed = req.params.seed;
      c.text = res.text;
      c.token_count = res.usage_completion_tokens;
      c.finish_reason = res.finish_reason;
      c.usage_source = res.usage_source;
      c.status = CandidateStatus::Sampled;
      ok[idx] = 1;
    } catch (const Error& e) {
      std::lock_guard<std::mutex> lock(err_mu);
      out.errors.push_back("seed " + std::to_string(req.params.seed) + ": " + e.what());
    }
  });
  for (size_t idx = 0; idx < slots.size(); ++idx) {
    if (ok[idx]) out.candidates.push_back(std::move(slots[idx]));
    else ++out.failed;
  }
  return out;  // slot order == ascending seed order
}

void score_candidates(const Question& q, std::vector<FirstStepCandidate>& candidates,
                      const ExperimentConfig& cfg, RewardBackend& reward) {
  std::mutex err_mu;
  std::string first_error;
  std::string first_code;
  parallel_for(candidates.size(), cfg.endpoint_concurrency, [&](size_t i) {
    FirstStepCandidate& c = candidates[i];
    if (c.has_reward) return;
    try {
      RewardScore score = score_first_step(reward, q.prompt, c.text);
      c.reward = score.value;
      c.scorer_id = score.scorer_id;
      c.has_reward = true;
      if (c.status == CandidateStatus::Sampled) c.status = CandidateStatus::Scored;
    } catch (const Error& e) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (first_error.empty()) {
        first_code = e.code();
        first_error = "seed " + std::to_string(c.seed) + ": " + e.what();
      }
    }
  });
  if (!first_error.empty()) throw Error(first_code, "score phase: " + first_error);
}

std::pair<std::vector<FirstStepCandidate>, std::vector<FirstStepCandidate>> select_top_m(
    std::vector<FirstStepCandidate> candidates, int m) {
  for (const auto& c : candidates)
    if (!c.has_reward)
      throw Error("unscored_candidate",
                  "seed " + std::to_string(c.seed) + " has no reward score");
  std::sort(candidates.begin(), candidates.end(),
            [](const FirstStepCandidate& a, const FirstStepCandidate& b) {
              if (a.reward != b.reward) return a.reward > b.reward;
              return a.seed < b.seed;
            });
  const size_t keep = std::min<size_t>(static_cast<size_t>(std::max(m, 0)), candidates.size());
  std::vector<FirstStepCandidate> selected(candidates.begin(), candidates.begin() + keep);
  std::vector<FirstStepCandidate> discarded(candidates.begin() + keep, candidates.end());
  for (auto& c : selected) c.status = CandidateStatus::Selected;
  for (auto& c : discarded) c.status = CandidateStatus::Discarded;
  return {std::move(selected), std::move(discarded)};
}

void finalize_trace(TraceRecord& rec, const Question& q, const ChatTemplate& tmpl) {
  std::string full = rec.first_step_text + rec.continuation_text;
  size_t close = full.find(tmpl.think_close);
  if (close == std::string::npos) {
    rec.conclusion_text.clear();
  } else {
    rec.conclusion_text = full.substr(close + tmpl.think_close.size());
  }
  rec.prediction = extract_prediction(rec.conclusion_text, q.answer_kind);
  if (q.answer_kind == AnswerKind::ExternalVerdict) {
    rec.has_correct = false;
    rec.correct = false;
  } else {
    rec.has_correct = true;
    rec.correct = answers_equal(rec.prediction, q);
  }
}

ContinueOutcome continue_selected(const Question& q,
                                  const std::vector<FirstStepCandidate>& selected,
                                  const ExperimentConfig& cfg, GenerationBackend& gen,
                                  const std::unordered_set<uint64_t>* skip_seeds) {
  if (selected.empty()) throw Error("empty_input", "no selected candidates to continue");
  ContinueOutcome out;
  std::vector<const FirstStepCandidate*> todo;
  for (const auto& c : selected) {
    if (skip_seeds && skip_seeds->count(c.seed)) continue;
    todo.push_back(&c);
  }
  out.requested = static_cast<int>(todo.size());
  std::vector<TraceRecord> slots(todo.size());
  std::vector<char> ok(todo.size(), 0);
  std::mutex err_mu;
  const std::string prompt = cfg.chat_template.render(q.prompt);
  parallel_for(todo.size(), cfg.endpoint_concurrency, [&](size_t idx) {
    const FirstStepCandidate& c = *todo[idx];
    GenerationRequest req;
    req.prompt = prompt;
    req.prefix = c.text;
    req.params = cfg.decoding;
    req.params.seed = c.seed;
    req.params.max_tokens =
        std::max<int>(1, cfg.max_total_tokens - static_cast<int>(c.token_count));
    req.stop_condition = StopCondition::ThinkCloseThenConclude;
    try {
      GenerationResult res = gen.generate(req);
      TraceRecord& r = slots[idx];
      r.question_id = q.id;
      r.seed = c.seed;
      r.first_step_text = c.text;
      r.continuation_text = res.text;
      r.first_step_tokens = c.token_count;
      r.continuation_tokens = res.usage_completion_tokens;
      r.finish_reason = res.finish_reason;
      r.usage_source = res.usage_source;
      r.has_reward = c.has_reward;
      r.reward = c.reward;
      finalize_trace(r, q, cfg.chat_template);
      ok[idx] = 1;
    } catch (const Error& e) {
      std::lock_guard<std::mutex> lock(err_mu);
      out.errors.push_back("seed " + std::to_string(c.seed) + ": " + e.what());
    }
  });
  for (size_t idx = 0; idx < slots.size(); ++idx) {
    if (ok[idx]) out.records.push_back(std::move(slots[idx]));
    else ++out.failed;
  }
  return out;
}

ContinueOutcome run_baseline(const Question& q, const ExperimentConfig& cfg,
                             GenerationBackend& gen,
                             const std::unordered_set<uint64_t>* skip_seeds) {
  ContinueOutcome out;
  std::vector<int> todo;
  for (int i = 0; i < cfg.n_candidates; ++i) {
    if (skip_seeds && skip_seeds->count(cfg.seed_for(i))) continue;
    todo.push_back(i);
  }
  out.requested = static_cast<int>(todo.size());
  std::vector<TraceRecord> slots(todo.size());
  std::vector<char> ok(todo.size(), 0);
  std::mutex err_mu;
  const std::string prompt = cfg.chat_template.render(q.prompt);
  parallel_for(todo.size(), cfg.endpoint_concurrency, [&](size_t idx) {
    int i = todo[idx];
    GenerationRequest req;
    req.prompt = prompt;
    req.params = cfg.decoding;
    req.params.seed = cfg.seed_for(i);
    req.params.max_tokens = cfg.max_total_tokens;
    req.stop_condition = StopCondition::ThinkCloseThenConclude;
    try {
      GenerationResult res = gen.generate(req);
      TraceRecord& r = slots[idx];
      r.question_id = q.id;
      r.seed = req.params.seed;
      r.continuation_text = res.text;
      r.continuation_tokens = res.usage_completion_tokens;
      r.finish_reason = res.finish_reason;
      r.usage_source = res.usage_source;
      finalize_trace(r, q, cfg.chat_template);
      ok[idx] = 1;
    } catch (const Error& e) {
      std::lock_guard<std::mutex> lock(err_mu);
      out.errors.push_back("seed " + std::to_string(req.params.seed) + ": " + e.what());
    }
  });
  for (size_t idx = 0; idx < slots.size(); ++idx) {
    if (ok[idx]) out.records.push_back(std::move(slots[idx]));
    else ++out.failed;
  }
  return out;
}

BudgetReport compute_budget(const std::string& question_id,
                            const std::vector<FirstStepCandidate>& all_candidates,
                            const std::vector<TraceRecord>& kept_records,
                            const std::vector<TraceRecord>* baseline_records) {
  BudgetReport b;
  b.question_id = question_id;
  bool saw_backend = false, saw_approx = false;
  for (const auto& c : all_candidates) {
    b.first_step_tokens_all_n += c.token_count;
    (c.usage_source == UsageSource::BackendReported ? saw_backend : saw_approx) = true;
  }
  for (const auto& r : kept_records) {
    b.continuation_tokens_kept_m += r.continuation_tokens;
    (r.usage_source == UsageSource::BackendReported ? saw_backend : saw_approx) = true;
  }
  if (baseline_records) {
    b.has_baseline = true;
    for (const auto& r : *baseline_records)
      b.baseline_total_tokens += r.first_step_tokens + r.continuation_tokens;
    if (b.baseline_total_tokens > 0) {
      b.has_ratio = true;
      b.ratio_vs_baseline =
          static_cast<double>(b.first_step_tokens_all_n + b.continuation_tokens_kept_m) /
          static_cast<double>(b.baseline_total_tokens);
    }
  }
  b.mixed_usage_sources = saw_backend && saw_approx;
  b.usage_source = saw_approx && !saw_backend ? UsageSource::Approximate
                                              : UsageSource::BackendReported;
  return b;
}

PruneRunResult run_early_pruning(const Question& q, const ExperimentConfig& cfg,
                                 GenerationBackend& gen, RewardBackend& reward) {
  validate_config(cfg);
  SampleOutcome sampled = sample_first_steps(q, cfg, gen);
  double got = static_cast<double>(sampled.candidates.size());
  if (got < cfg.min_sample_fraction * cfg.n_candidates) {
    std::string detail = sampled.errors.empty() ? "" : ("; first error: " + sampled.errors[0]);
    throw Error("partial_failure",
                "sample phase: " + std::to_string(sampled.candidates.size()) + "/" +
                    std::to_string(cfg.n_candidates) + " candidates" + detail);
  }
  score_candidates(q, sampled.candidates, cfg, reward);
  auto [selected, discarded] = select_top_m(std::move(sampled.candidates), cfg.keep_m);
  ContinueOutcome continued = continue_selected(q, selected, cfg, gen);
  if (static_cast<double>(continued.records.size()) <
      cfg.min_sample_fraction * static_cast<double>(selected.size())) {
    std::string detail = continued.errors.empty() ? "" : ("; first error: " + continued.errors[0]);
    throw Error("partial_failure",
                "continue phase: " + std::to_string(continued.records.size()) + "/" +
                    std::to_string(selected.size()) + " continuations" + detail);
  }
  PruneRunResult out;
  out.records = std::move(continued.records);
  out.candidates = std::move(selected);
  out.candidates.insert(out.candidates.end(), discarded.begin(), discarded.end());
  std::sort(out.candidates.begin(), out.candidates.end(),
            [](const FirstStepCandidate& a, const FirstStepCandidate& b) {
              return a.seed < b.seed;
            });
  out.budget = compute_budget(q.id, out.candidates, out.records);
  return out;
}

}  // namespace firststep
