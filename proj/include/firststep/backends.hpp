#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "firststep/core.hpp"

namespace firststep {

enum class StopCondition { MaxTokensOnly, ThinkCloseThenConclude };
enum class FinishReason { StopToken, LengthCap, BackendError };
enum class UsageSource { BackendReported, Approximate };

std::string finish_reason_to_string(FinishReason r);
std::string usage_source_to_string(UsageSource s);

struct GenerationRequest {
  std::string prompt;  // fully templated, including the think-open marker
  std::string prefix;  // previously generated continuation to resume from
  DecodingParams params;
  StopCondition stop_condition = StopCondition::MaxTokensOnly;
};

struct GenerationResult {
  std::string text;
  FinishReason finish_reason = FinishReason::StopToken;
  int64_t usage_prompt_tokens = 0;
  int64_t usage_completion_tokens = 0;
  UsageSource usage_source = UsageSource::BackendReported;
};

struct RewardScore {
  double value = 0.0;
  std::string scorer_id;
};

// Wraps a bare question prompt for a reasoning model. The rendered prompt
// ends with the think-open marker so generation starts inside the think
// block.
struct ChatTemplate {
  std::string instruction =
      "Please reason step by step, and put your final answer within \\boxed{}.";
  std::string think_open = "<think>";
  std::string think_close = "</think>";

  std::string render(const std::string& question_prompt) const {
    return instruction + "\n\n" + question_prompt + "\n" + think_open;
  }
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual GenerationResult generate(const GenerationRequest& request) = 0;
  virtual std::string name() const = 0;
};

class RewardBackend {
 public:
  virtual ~RewardBackend() = default;
  // One score per step, same order. Throws on transport/shape errors.
  virtual std::vector<double> score_steps(const std::string& prompt,
                                          const std::vector<std::string>& steps) = 0;
  virtual std::string scorer_id() const = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  // One vector per text; dimension constant within a backend's lifetime
  // (violations raise Error("dimension_mismatch")).
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

// Splits at every "\n\n" occurrence, left to right. Joining the pieces with
// the delimiter reproduces the input byte-for-byte.
std::vector<std::string> split_prm_steps(const std::string& first_step);

// Scores the "\n\n"-delimited pieces of first_step in one call and returns
// the final piece's score. Throws Error("empty_after_split") on
// whitespace-only input.
RewardScore score_first_step(RewardBackend& backend, const std::string& prompt,
                             const std::string& first_step);

struct HttpEndpointConfig {
  std::string base_url;  // scheme://host:port
  std::string api_token;
  std::string model;
  bool min_p_supported = true;
  int timeout_ms = 120000;
  int max_attempts = 3;  // total tries, not retries
  int backoff_ms = 200;  // doubled after each failed attempt
};

// Completions-style endpoint: POST {base}/v1/completions with
// {model, prompt, max_tokens, temperature, top_p, min_p, seed}; reads
// choices[0].text, choices[0].finish_reason, usage. Missing usage falls back
// to the byte-length approximation.
std::unique_ptr<GenerationBackend> make_http_generation_backend(const HttpEndpointConfig& cfg);

// POST {base}/score with {prompt, steps:[...]} -> {scores:[...]}.
std::unique_ptr<RewardBackend> make_http_reward_backend(const HttpEndpointConfig& cfg);

// POST {base}/embed with {texts:[...]} -> {vectors:[[...]]}.
std::unique_ptr<EmbeddingBackend> make_http_embedding_backend(const HttpEndpointConfig& cfg);

}  // namespace firststep
