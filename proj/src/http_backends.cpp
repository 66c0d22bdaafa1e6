#include <atomic>
#include <chrono>
#include <iostream>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "firststep/backends.hpp"
#include "firststep/error.hpp"
#include "firststep/util.hpp"

namespace firststep {

using nlohmann::json;

namespace {

bool looks_like_context_overflow(const std::string& body) {
  std::string low = lower_ascii(body);
  return low.find("context") != std::string::npos &&
         (low.find("length") != std::string::npos || low.find("overflow") != std::string::npos ||
          low.find("window") != std::string::npos);
}

// POSTs JSON with bounded retries on transport errors and 5xx. 4xx is not
// retried: either the prompt no longer fits (context_overflow) or the
// request itself is broken (transport_failure carries the body for triage).
json post_json(const HttpEndpointConfig& cfg, const std::string& path, const json& body) {
  std::string payload = body.dump();
  std::string last_detail = "no attempt made";
  int backoff = cfg.backoff_ms;
  for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    httplib::Client client(cfg.base_url);
    client.set_connection_timeout(cfg.timeout_ms / 1000, (cfg.timeout_ms % 1000) * 1000);
    client.set_read_timeout(cfg.timeout_ms / 1000, (cfg.timeout_ms % 1000) * 1000);
    client.set_write_timeout(cfg.timeout_ms / 1000, (cfg.timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (!cfg.api_token.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_token);
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_detail = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      json parsed = json::parse(res->body, nullptr, false);
      if (parsed.is_discarded())
        throw Error("malformed_response", "unparseable JSON from " + cfg.base_url + path);
      return parsed;
    }
    if (res->status >= 500) {
      last_detail = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (looks_like_context_overflow(res->body))
      throw Error("context_overflow", "HTTP " + std::to_string(res->status) + ": " + res->body);
    throw Error("transport_failure",
                "HTTP " + std::to_string(res->status) + " from " + cfg.base_url + path + ": " +
                    res->body.substr(0, 200));
  }
  throw Error("transport_failure", cfg.base_url + path + " after " +
                                       std::to_string(cfg.max_attempts) + " attempts (" +
                                       last_detail + ")");
}

class HttpGenerationBackend final : public GenerationBackend {
 public:
  explicit HttpGenerationBackend(HttpEndpointConfig cfg) : cfg_(std::move(cfg)) {}

  GenerationResult generate(const GenerationRequest& request) override {
    validate(request.params);
    json body = {
        {"model", cfg_.model},
        {"prompt", request.prompt + request.prefix},
        {"max_tokens", request.params.max_tokens},
        {"temperature", request.params.temperature},
        {"top_p", request.params.top_p},
        {"seed", request.params.seed},
    };
    if (cfg_.min_p_supported) {
      body["min_p"] = request.params.min_p;
    } else if (request.params.min_p > 0.0 && !min_p_warned_.exchange(true)) {
      std::cerr << "warning: endpoint " << cfg_.base_url
                << " does not support min_p; dropping min_p=" << request.params.min_p << "\n";
    }
    json res = post_json(cfg_, "/v1/completions", body);
    if (!res.contains("choices") || !res["choices"].is_array() || res["choices"].empty() ||
        !res["choices"][0].contains("text") || !res["choices"][0]["text"].is_string())
      throw Error("malformed_response", "completions response missing choices[0].text");
    GenerationResult out;
    out.text = res["choices"][0]["text"].get<std::string>();
    std::string reason = res["choices"][0].value("finish_reason", "stop");
    out.finish_reason =
        (reason == "length") ? FinishReason::LengthCap : FinishReason::StopToken;
    if (res.contains("usage") && res["usage"].is_object() &&
        res["usage"].contains("completion_tokens")) {
      out.usage_prompt_tokens = res["usage"].value("prompt_tokens", int64_t{0});
      out.usage_completion_tokens = res["usage"]["completion_tokens"].get<int64_t>();
      out.usage_source = UsageSource::BackendReported;
    } else {
      out.usage_prompt_tokens = approximate_token_count(request.prompt) +
                                approximate_token_count(request.prefix);
      out.usage_completion_tokens = approximate_token_count(out.text);
      out.usage_source = UsageSource::Approximate;
    }
    return out;
  }

  std::string name() const override { return "http:" + cfg_.base_url; }

 private:
  HttpEndpointConfig cfg_;
  std::atomic<bool> min_p_warned_{false};
};

class HttpRewardBackend final : public RewardBackend {
 public:
  explicit HttpRewardBackend(HttpEndpointConfig cfg) : cfg_(std::move(cfg)) {}

  std::vector<double> score_steps(const std::string& prompt,
                                  const std::vector<std::string>& steps) override {
    json body = {{"prompt", prompt}, {"steps", steps}};
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    json res = post_json(cfg_, "/score", body);
    if (!res.contains("scores") || !res["scores"].is_array())
      throw Error("malformed_response", "score response missing scores array");
    std::vector<double> scores;
    scores.reserve(res["scores"].size());
    for (const auto& s : res["scores"]) {
      if (!s.is_number()) throw Error("malformed_response", "non-numeric score");
      scores.push_back(s.get<double>());
    }
    return scores;
  }

  std::string scorer_id() const override {
    return cfg_.model.empty() ? cfg_.base_url : cfg_.model;
  }

 private:
  HttpEndpointConfig cfg_;
};

class HttpEmbeddingBackend final : public EmbeddingBackend {
 public:
  explicit HttpEmbeddingBackend(HttpEndpointConfig cfg) : cfg_(std::move(cfg)) {}

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    json body = {{"texts", texts}};
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    json res = post_json(cfg_, "/embed", body);
    if (!res.contains("vectors") || !res["vectors"].is_array() ||
        res["vectors"].size() != texts.size())
      throw Error("malformed_response", "embed response vectors missing or wrong count");
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& v : res["vectors"]) {
      if (!v.is_array()) throw Error("malformed_response", "vector entry is not an array");
      out.push_back(v.get<std::vector<double>>());
    }
    std::lock_guard<std::mutex> lock(dim_mu_);
    for (const auto& v : out) {
      if (dimension_ == 0) dimension_ = v.size();
      if (v.size() != dimension_ || v.empty())
        throw Error("dimension_mismatch",
                    "expected dimension " + std::to_string(dimension_) + ", got " +
                        std::to_string(v.size()));
    }
    return out;
  }

 private:
  HttpEndpointConfig cfg_;
  std::mutex dim_mu_;
  size_t dimension_ = 0;
};

}  // namespace

std::unique_ptr<GenerationBackend> make_http_generation_backend(const HttpEndpointConfig& cfg) {
  return std::make_unique<HttpGenerationBackend>(cfg);
}

std::unique_ptr<RewardBackend> make_http_reward_backend(const HttpEndpointConfig& cfg) {
  return std::make_unique<HttpRewardBackend>(cfg);
}

std::unique_ptr<EmbeddingBackend> make_http_embedding_backend(const HttpEndpointConfig& cfg) {
  return std::make_unique<HttpEmbeddingBackend>(cfg);
}

}  // namespace firststep
