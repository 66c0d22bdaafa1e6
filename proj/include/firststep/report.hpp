#pragma once

#include <map>
#include <string>
#include <vector>

#include "firststep/aggregation.hpp"
#include "firststep/pruning.hpp"

namespace firststep {

struct CurvePoint {
  int m = 0;
  double accuracy = 0.0;
  int questions = 0;  // questions with at least m records
};

// 1, 2, 4, ... up to n, with n itself appended when not a power of two.
std::vector<int> default_m_grid(int n);

// Records ordered by (reward descending, seed ascending); unscored records
// sort after scored ones. This is the designated order a pruned run keeps.
std::vector<SeedVerdict> ranked_verdicts(std::vector<TraceRecord> records);

// Records ordered by seed ascending (plain sampling order).
std::vector<SeedVerdict> seed_order_verdicts(std::vector<TraceRecord> records);

// Mean maj@m accuracy over questions that have at least m verdicts. Questions
// with fewer verdicts are skipped and excluded from the denominator.
CurvePoint corpus_majority_point(
    const std::map<std::string, std::vector<SeedVerdict>>& per_question,
    const std::map<std::string, Question>& questions, int m, MajMode mode,
    int subset_draws);

// Smallest m whose accuracy reaches target (>= target - eps); -1 when none.
int smallest_matching_m(const std::vector<CurvePoint>& curve, double target,
                        double eps = 1e-12);

// Markdown table: one row per grid m, pruned and plain columns side by side.
// Either curve may be empty. The marker row is suffixed with " *".
std::string render_accuracy_markdown(const std::vector<CurvePoint>& pruned,
                                     const std::vector<CurvePoint>& plain,
                                     int marker_m);

// CSV with header m,pruned_accuracy,pruned_questions,plain_accuracy,
// plain_questions,marker. Missing cells are empty.
std::string render_accuracy_csv(const std::vector<CurvePoint>& pruned,
                                const std::vector<CurvePoint>& plain,
                                int marker_m);

}  // namespace firststep
