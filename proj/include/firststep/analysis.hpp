#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "firststep/backends.hpp"
#include "firststep/core.hpp"
#include "firststep/pruning.hpp"
#include "firststep/segmentation.hpp"

namespace firststep {

struct SimilarityCurve {
  std::string question_id;
  uint64_t seed = 0;
  std::vector<double> values;  // one per reasoning step, each in [-1,1]
  int step_count = 0;
};

enum class TargetMode { MeanSteps, MaxSteps };
std::string target_mode_to_string(TargetMode m);

struct AggregatedCurve {
  std::vector<double> grid;  // normalized positions in [0,1]
  std::vector<double> mean;
  std::vector<double> std_error;
  int n_curves = 0;
};

// 0 when either vector has zero norm. Throws Error("dimension_mismatch").
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Segments the overlap-stripped think text and scores each step's cosine
// similarity against the conclusion embedding. Throws
// Error("empty_conclusion") for unconcluded traces and
// Error("similarity_out_of_range") if a cosine leaves [-1,1] beyond
// rounding error.
SimilarityCurve similarity_curve(const TraceRecord& record, const Question& q,
                                 const KeywordProfile& profile, const ChatTemplate& tmpl,
                                 EmbeddingBackend& embedding);

// Linear resampling over normalized position; exact identity when the curve
// already has grid_size points; single-point curves replicate their value.
std::vector<double> resample_linear(const std::vector<double>& values, int grid_size);

// Grid length = round(mean step count) or max step count. Pointwise mean
// and standard error across resampled curves.
AggregatedCurve interpolate_and_aggregate(const std::vector<SimilarityCurve>& curves,
                                          TargetMode mode);

// Closes the think block after first_step and generates the conclusion
// alone; returns (conclusion text, extracted prediction).
std::pair<std::string, Prediction> force_first_step_conclusion(const Question& q,
                                                               const std::string& first_step,
                                                               const ExperimentConfig& cfg,
                                                               GenerationBackend& gen,
                                                               uint64_t seed);

enum class PerturbVariant { CorrectBaseline, Incorrect };
std::string perturb_variant_to_string(PerturbVariant v);
PerturbVariant perturb_variant_from_string(const std::string& s);

struct PerturbedFirstStep {
  std::string source_question_id;
  PerturbVariant variant = PerturbVariant::CorrectBaseline;
  int delta = 0;  // one of {+1,-1,+10,-10}; 0 for the baseline variant
  std::string text;
};

// From a correct conclusion: (1) delete every \boxed group, (2) delete
// sentences that say "final answer" or mention the answer value in the
// final 20% of the text, (3) for the incorrect variant, replace every
// remaining standalone answer token with answer+delta. Errors:
// source_not_correct, invalid_delta, kind_mismatch,
// answer_absent_after_step2.
PerturbedFirstStep build_perturbed_first_step(const std::string& conclusion, const Question& q,
                                              PerturbVariant variant, int delta);

// Resumes generation from the perturbed step followed by the literal word
// "Alternatively" (no separator) and scores the finished trace as usual.
TraceRecord run_perturbation_trial(const Question& q, const PerturbedFirstStep& pfs,
                                   const ExperimentConfig& cfg, GenerationBackend& gen,
                                   uint64_t trial_seed);

struct PerturbationTrialRecord {
  PerturbVariant variant = PerturbVariant::CorrectBaseline;
  int delta = 0;
  int trial = 0;
  TraceRecord record;
};

}  // namespace firststep
