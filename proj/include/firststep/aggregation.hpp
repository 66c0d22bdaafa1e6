#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "firststep/core.hpp"

namespace firststep {

enum class Bucket { Hard, Medium, Easy, DegenerateAllWrong, DegenerateAllRight };

std::string bucket_to_string(Bucket b);

struct SeedVerdict {
  uint64_t seed = 0;
  Prediction prediction;
  bool correct = false;
};

struct QuestionOutcome {
  std::string question_id;
  std::vector<SeedVerdict> predictions;
  double pass_at_1 = 0.0;
  Bucket bucket = Bucket::DegenerateAllWrong;
};

enum class MajMode { PrefixTopK, SubsetMean };

// Absent predictions are excluded; most frequent canonical value wins, ties
// to the lexicographically smallest. All-absent input yields an absent
// Prediction. Throws Error("empty_input").
Prediction majority_vote(const std::vector<Prediction>& predictions);

// `designated` must already be in the run's voting order (reward-ranked for
// pruned runs, seed order for plain runs). PrefixTopK votes over the first K
// and returns 0/1; SubsetMean averages the vote's correctness over K-subsets
// — exhaustive when C(n,K) <= subset_draws, else subset_draws seeded draws.
// Throws Error("insufficient_records") when K > n.
double maj_at_k(const std::vector<SeedVerdict>& designated, const Question& q, int k,
                MajMode mode, int subset_draws = 100);

// Unbiased 1 - C(n-c,k)/C(n,k). Throws Error("k_out_of_range").
double pass_at_k(const std::vector<bool>& verdicts, int k);

struct PhiResult {
  double r = 0.0;
  double p_value = 1.0;
};

// Pearson correlation of 0/1 encodings (= phi coefficient); two-sided
// permutation p-value, 10,000 permutations, fixed internal seed. Throws
// Error("length_mismatch") and Error("constant_input").
PhiResult pearson_phi(const std::vector<bool>& first_correct,
                      const std::vector<bool>& final_correct);

// pass@1 plus bucket: (0,33%] hard, (33,67%] medium, (67,100%) easy;
// all-wrong / all-right flagged degenerate. Boundary comparisons are exact
// (integer cross-multiplication), never floating-point.
QuestionOutcome difficulty_profile(const std::string& question_id,
                                   const std::vector<SeedVerdict>& records);

}  // namespace firststep
