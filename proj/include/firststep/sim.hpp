#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "firststep/backends.hpp"
#include "firststep/core.hpp"

namespace firststep {

// Offline stand-in for a reasoning model: every trace is a pure function of
// (question id, seed), so runs are reproducible and resumable by
// construction. Quality of the first step and final correctness are coupled
// the way the real phenomenon is: good first steps make correct conclusions
// more likely.
struct SimProfile {
  double p_correct_given_good_first = 0.8;
  double p_correct_given_bad_first = 0.3;
  double p_good_first = 0.5;
  int mean_total_tokens = 12800;
  int conclusion_tokens = 24;
  int wrong_answer_pool = 2;  // distinct wrong final values per question
  // Continuation-from-foreign-prefix behavior (perturbation trials).
  double p_correct_prefix_with_answer = 0.95;
  double p_correct_prefix_without_answer = 0.3;
};

// Throws Error("invalid_profile").
void validate_profile(const SimProfile& profile);

struct SimTrace {
  std::string first_step;
  double first_step_quality = 0.0;  // good in [0.6,1), bad in [0,0.4)
  std::string continuation;         // think remainder + close marker + conclusion
  bool final_correct = false;
  int64_t first_step_tokens = 0;
  int64_t continuation_tokens = 0;
  int64_t total_tokens = 0;
};

// first_step is the first `first_step_len` sim-tokens; first_step +
// continuation is byte-identical to the unsplit trace.
SimTrace simulate_trace(const SimProfile& profile, const Question& q, uint64_t seed,
                        int first_step_len);

class SimGenerationBackend final : public GenerationBackend {
 public:
  SimGenerationBackend(SimProfile profile, std::vector<Question> questions,
                       ChatTemplate chat_template = {});

  // Routes on the prefix: empty -> fresh trace from token 0; a prefix of the
  // (question, seed) stream -> exact resumption; contains the think-close
  // marker -> conclusion-only probe; anything else -> perturbed-prefix
  // continuation whose correctness depends on whether the prefix still
  // mentions the answer.
  GenerationResult generate(const GenerationRequest& request) override;

  std::string name() const override { return "sim"; }
  uint64_t calls() const { return calls_.load(); }
  const SimProfile& profile() const { return profile_; }

 private:
  SimProfile profile_;
  ChatTemplate template_;
  std::unordered_map<std::string, Question> by_prompt_;  // rendered prompt -> question
  std::atomic<uint64_t> calls_{0};
};

// Recovers (question, seed) from the stream marker embedded in the first
// sim-token and scores every PRM step with that trace's first-step quality,
// so reward ranking orders candidates by quality exactly.
class SimRewardBackend final : public RewardBackend {
 public:
  explicit SimRewardBackend(SimProfile profile) : profile_(profile) {}
  std::vector<double> score_steps(const std::string& prompt,
                                  const std::vector<std::string>& steps) override;
  std::string scorer_id() const override { return "sim-reward"; }

 private:
  SimProfile profile_;
};

// Hashed bag-of-words, 64 dimensions, L2-normalized; identical texts get
// identical vectors.
class SimEmbeddingBackend final : public EmbeddingBackend {
 public:
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  static constexpr size_t kDim = 64;
};

}  // namespace firststep
