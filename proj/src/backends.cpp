#include "firststep/backends.hpp"

#include "firststep/error.hpp"
#include "firststep/util.hpp"

namespace firststep {

std::string finish_reason_to_string(FinishReason r) {
  switch (r) {
    case FinishReason::StopToken: return "stop_token";
    case FinishReason::LengthCap: return "length_cap";
    case FinishReason::BackendError: return "backend_error";
  }
  return "stop_token";
}

std::string usage_source_to_string(UsageSource s) {
  return s == UsageSource::BackendReported ? "backend_reported" : "approximate";
}

std::vector<std::string> split_prm_steps(const std::string& first_step) {
  static constexpr std::string_view kDelim = "\n\n";
  std::vector<std::string> steps;
  size_t pos = 0;
  while (true) {
    size_t hit = first_step.find(kDelim, pos);
    if (hit == std::string::npos) break;
    steps.push_back(first_step.substr(pos, hit - pos));
    pos = hit + kDelim.size();
  }
  steps.push_back(first_step.substr(pos));
  return steps;
}

RewardScore score_first_step(RewardBackend& backend, const std::string& prompt,
                             const std::string& first_step) {
  if (trim(first_step).empty())
    throw Error("empty_after_split", "first step is whitespace only");
  std::vector<std::string> steps = split_prm_steps(first_step);
  std::vector<double> scores = backend.score_steps(prompt, steps);
  if (scores.size() != steps.size())
    throw Error("malformed_response", "scorer returned " + std::to_string(scores.size()) +
                                          " scores for " + std::to_string(steps.size()) + " steps");
  RewardScore out;
  out.value = scores.back();
  out.scorer_id = backend.scorer_id();
  return out;
}

}  // namespace firststep
