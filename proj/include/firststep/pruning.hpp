#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "firststep/backends.hpp"
#include "firststep/core.hpp"
#include "firststep/segmentation.hpp"

namespace firststep {

enum class CandidateStatus { Sampled, Scored, Selected, Discarded };
std::string candidate_status_to_string(CandidateStatus s);
CandidateStatus candidate_status_from_string(const std::string& s);

struct FirstStepCandidate {
  std::string question_id;
  uint64_t seed = 0;
  std::string text;
  int64_t token_count = 0;
  FinishReason finish_reason = FinishReason::LengthCap;
  UsageSource usage_source = UsageSource::BackendReported;
  bool has_reward = false;
  double reward = 0.0;
  std::string scorer_id;
  CandidateStatus status = CandidateStatus::Sampled;
};

struct TraceRecord {
  std::string question_id;
  uint64_t seed = 0;
  std::string first_step_text;     // empty for plain (unsplit) baselines
  std::string continuation_text;
  std::string conclusion_text;     // text after the think-close marker
  Prediction prediction;
  bool has_correct = false;
  bool correct = false;
  int64_t first_step_tokens = 0;
  int64_t continuation_tokens = 0;
  FinishReason finish_reason = FinishReason::StopToken;
  UsageSource usage_source = UsageSource::BackendReported;
  bool has_reward = false;  // carried over from the scored candidate
  double reward = 0.0;
};

enum class AggregationMode { Majority, PassAtK };

struct ExperimentConfig {
  int n_candidates = 64;
  int keep_m = 16;
  int first_step_len = 512;      // tokens per candidate first step
  int max_total_tokens = 16384;  // cap for a full trace
  DecodingParams decoding;
  uint64_t base_seed = 1;
  AggregationMode aggregation = AggregationMode::Majority;
  double min_sample_fraction = 0.9;  // abort a question below this
  int endpoint_concurrency = 4;
  ChatTemplate chat_template;

  uint64_t seed_for(int n) const { return base_seed + static_cast<uint64_t>(n); }
};

// Throws Error("invalid_config").
void validate_config(const ExperimentConfig& cfg);

struct BudgetReport {
  std::string question_id;
  int64_t first_step_tokens_all_n = 0;      // every candidate, kept or not
  int64_t continuation_tokens_kept_m = 0;
  bool has_baseline = false;
  int64_t baseline_total_tokens = 0;
  bool has_ratio = false;
  double ratio_vs_baseline = 0.0;
  UsageSource usage_source = UsageSource::BackendReported;
  bool mixed_usage_sources = false;
};

// Per-phase outcome; failures after retries are collected, not thrown, so
// the caller owns the partial-failure policy.
struct SampleOutcome {
  std::vector<FirstStepCandidate> candidates;  // ascending seed order
  int requested = 0;
  int failed = 0;
  std::vector<std::string> errors;
};

struct ContinueOutcome {
  std::vector<TraceRecord> records;  // input candidate order
  int requested = 0;
  int failed = 0;
  std::vector<std::string> errors;
};

struct PruneRunResult {
  std::vector<FirstStepCandidate> candidates;  // all N, final statuses
  std::vector<TraceRecord> records;            // kept continuations
  BudgetReport budget;
};

// N capped first-step generations, one per derived seed; seeds in
// skip_seeds are not regenerated (resume support).
SampleOutcome sample_first_steps(const Question& q, const ExperimentConfig& cfg,
                                 GenerationBackend& gen,
                                 const std::unordered_set<uint64_t>* skip_seeds = nullptr);

// Scores each candidate's first step (reward = final PRM-step score) and
// advances status to Scored. Candidates already scored are left alone.
void score_candidates(const Question& q, std::vector<FirstStepCandidate>& candidates,
                      const ExperimentConfig& cfg, RewardBackend& reward);

// Top-M by reward, ties to the lower seed. Selected comes back in ranking
// order (reward desc, seed asc). Throws Error("unscored_candidate").
std::pair<std::vector<FirstStepCandidate>, std::vector<FirstStepCandidate>> select_top_m(
    std::vector<FirstStepCandidate> candidates, int m);

// Resumes each selected candidate with its own seed until conclusion or the
// total-token cap; extracts predictions from the post-think conclusion.
ContinueOutcome continue_selected(const Question& q,
                                 const std::vector<FirstStepCandidate>& selected,
                                 const ExperimentConfig& cfg, GenerationBackend& gen,
                                 const std::unordered_set<uint64_t>* skip_seeds = nullptr);

// Plain N-sample baseline: full traces, no first-step split.
ContinueOutcome run_baseline(const Question& q, const ExperimentConfig& cfg,
                             GenerationBackend& gen,
                             const std::unordered_set<uint64_t>* skip_seeds = nullptr);

// sample -> score -> select -> continue -> budget for one question.
// Enforces min_sample_fraction per generation phase via
// Error("partial_failure"). Persistence and resume live in the runner.
PruneRunResult run_early_pruning(const Question& q, const ExperimentConfig& cfg,
                                 GenerationBackend& gen, RewardBackend& reward);

BudgetReport compute_budget(const std::string& question_id,
                            const std::vector<FirstStepCandidate>& all_candidates,
                            const std::vector<TraceRecord>& kept_records,
                            const std::vector<TraceRecord>* baseline_records = nullptr);

// Splits prefix+continuation at the think-close marker and fills
// conclusion/prediction/correct fields in place.
void finalize_trace(TraceRecord& rec, const Question& q, const ChatTemplate& tmpl);

}  // namespace firststep
