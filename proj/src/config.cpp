#include "firststep/config.hpp"

#include <cstdlib>
#include <set>

#include "firststep/error.hpp"
#include "firststep/util.hpp"
#include <json.hpp>

namespace firststep {

using Json = nlohmann::json;

std::string to_string(BackendKind kind) {
  return kind == BackendKind::Sim ? "sim" : "http";
}

BackendKind backend_kind_from_string(const std::string& s) {
  if (s == "sim") return BackendKind::Sim;
  if (s == "http") return BackendKind::Http;
  throw Error("invalid_config", "unknown backend kind: " + s);
}

namespace {

void reject_unknown_keys(const Json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) {
      throw Error("invalid_config", "unknown key '" + it.key() + "' in " + where);
    }
  }
}

double get_number(const Json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) {
    throw Error("invalid_config", std::string(key) + " must be a number");
  }
  return obj[key].get<double>();
}

int get_int(const Json& obj, const char* key, int fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) {
    throw Error("invalid_config", std::string(key) + " must be an integer");
  }
  return obj[key].get<int>();
}

std::string get_string(const Json& obj, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) {
    throw Error("invalid_config", std::string(key) + " must be a string");
  }
  return obj[key].get<std::string>();
}

bool get_bool(const Json& obj, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_boolean()) {
    throw Error("invalid_config", std::string(key) + " must be a boolean");
  }
  return obj[key].get<bool>();
}

void parse_endpoint(const Json& obj, const std::string& where, HttpEndpointConfig& ep) {
  reject_unknown_keys(obj,
                      {"base_url", "api_token", "model", "min_p_supported",
                       "timeout_ms", "max_attempts", "backoff_ms"},
                      where);
  ep.base_url = get_string(obj, "base_url", ep.base_url);
  ep.api_token = get_string(obj, "api_token", ep.api_token);
  ep.model = get_string(obj, "model", ep.model);
  ep.min_p_supported = get_bool(obj, "min_p_supported", ep.min_p_supported);
  ep.timeout_ms = get_int(obj, "timeout_ms", ep.timeout_ms);
  ep.max_attempts = get_int(obj, "max_attempts", ep.max_attempts);
  ep.backoff_ms = get_int(obj, "backoff_ms", ep.backoff_ms);
  if (ep.max_attempts < 1) throw Error("invalid_config", where + ".max_attempts must be >= 1");
  if (ep.timeout_ms < 1) throw Error("invalid_config", where + ".timeout_ms must be >= 1");
}

void parse_sim_profile(const Json& obj, SimProfile& p) {
  reject_unknown_keys(obj,
                      {"p_correct_given_good_first", "p_correct_given_bad_first",
                       "p_good_first", "mean_total_tokens", "conclusion_tokens",
                       "wrong_answer_pool", "p_correct_prefix_with_answer",
                       "p_correct_prefix_without_answer"},
                      "sim");
  p.p_correct_given_good_first =
      get_number(obj, "p_correct_given_good_first", p.p_correct_given_good_first);
  p.p_correct_given_bad_first =
      get_number(obj, "p_correct_given_bad_first", p.p_correct_given_bad_first);
  p.p_good_first = get_number(obj, "p_good_first", p.p_good_first);
  p.mean_total_tokens = get_int(obj, "mean_total_tokens", p.mean_total_tokens);
  p.conclusion_tokens = get_int(obj, "conclusion_tokens", p.conclusion_tokens);
  p.wrong_answer_pool = get_int(obj, "wrong_answer_pool", p.wrong_answer_pool);
  p.p_correct_prefix_with_answer =
      get_number(obj, "p_correct_prefix_with_answer", p.p_correct_prefix_with_answer);
  p.p_correct_prefix_without_answer =
      get_number(obj, "p_correct_prefix_without_answer", p.p_correct_prefix_without_answer);
}

TargetMode target_mode_from_string(const std::string& s) {
  if (s == "mean_steps") return TargetMode::MeanSteps;
  if (s == "max_steps") return TargetMode::MaxSteps;
  throw Error("invalid_config", "unknown similarity_target: " + s);
}

AggregationMode aggregation_from_string(const std::string& s) {
  if (s == "majority") return AggregationMode::Majority;
  if (s == "pass_at_k") return AggregationMode::PassAtK;
  throw Error("invalid_config", "unknown aggregation mode: " + s);
}

std::string aggregation_to_string(AggregationMode m) {
  return m == AggregationMode::Majority ? "majority" : "pass_at_k";
}

}  // namespace

RunConfig parse_config_json(const std::string& text) {
  Json doc = Json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error("invalid_config", "config must be a JSON object");
  }
  reject_unknown_keys(
      doc,
      {"backend", "n", "m", "first_step_len", "max_total_tokens", "base_seed",
       "aggregation", "min_sample_fraction", "endpoint_concurrency", "decoding",
       "chat_template", "model_family", "keywords", "keyword_profiles",
       "dataset", "out_dir", "resume", "workers", "generation_endpoint",
       "reward_endpoint", "embedding_endpoint", "sim", "perturb_trials",
       "perturb_deltas", "similarity_target", "report_subset_draws"},
      "config");

  RunConfig cfg;
  cfg.backend = backend_kind_from_string(get_string(doc, "backend", "sim"));

  ExperimentConfig& ex = cfg.experiment;
  ex.n_candidates = get_int(doc, "n", ex.n_candidates);
  ex.keep_m = get_int(doc, "m", ex.keep_m);
  ex.first_step_len = get_int(doc, "first_step_len", ex.first_step_len);
  ex.max_total_tokens = get_int(doc, "max_total_tokens", ex.max_total_tokens);
  if (doc.contains("base_seed")) {
    if (!doc["base_seed"].is_number_integer() || doc["base_seed"].get<int64_t>() < 0) {
      throw Error("invalid_config", "base_seed must be a non-negative integer");
    }
    ex.base_seed = doc["base_seed"].get<uint64_t>();
  }
  ex.aggregation = aggregation_from_string(get_string(doc, "aggregation", "majority"));
  ex.min_sample_fraction = get_number(doc, "min_sample_fraction", ex.min_sample_fraction);
  ex.endpoint_concurrency = get_int(doc, "endpoint_concurrency", ex.endpoint_concurrency);

  if (doc.contains("decoding")) {
    const Json& d = doc["decoding"];
    reject_unknown_keys(d, {"temperature", "top_p", "min_p", "max_tokens"}, "decoding");
    ex.decoding.temperature = get_number(d, "temperature", ex.decoding.temperature);
    ex.decoding.top_p = get_number(d, "top_p", ex.decoding.top_p);
    ex.decoding.min_p = get_number(d, "min_p", ex.decoding.min_p);
    ex.decoding.max_tokens = get_int(d, "max_tokens", ex.decoding.max_tokens);
  }

  if (doc.contains("chat_template")) {
    const Json& t = doc["chat_template"];
    reject_unknown_keys(t, {"instruction", "think_open", "think_close"}, "chat_template");
    ex.chat_template.instruction = get_string(t, "instruction", ex.chat_template.instruction);
    ex.chat_template.think_open = get_string(t, "think_open", ex.chat_template.think_open);
    ex.chat_template.think_close = get_string(t, "think_close", ex.chat_template.think_close);
    if (ex.chat_template.think_close.empty()) {
      throw Error("invalid_config", "chat_template.think_close must be non-empty");
    }
  }

  cfg.model_family = get_string(doc, "model_family", cfg.model_family);
  // Precedence: an explicit keyword list, then a profile file, then the
  // builtin table. Explicit keywords skip the family lookup entirely so new
  // model families work without a profile file.
  if (doc.contains("keywords")) {
    if (!doc["keywords"].is_array()) {
      throw Error("invalid_config", "keywords must be an array of strings");
    }
    cfg.keywords.model_family = cfg.model_family;
    cfg.keywords.keywords.clear();
    for (const Json& k : doc["keywords"]) {
      if (!k.is_string() || k.get<std::string>().empty()) {
        throw Error("invalid_config", "keywords must be non-empty strings");
      }
      cfg.keywords.keywords.push_back(lower_ascii(k.get<std::string>()));
    }
  } else if (doc.contains("keyword_profiles")) {
    std::string path = get_string(doc, "keyword_profiles", "");
    bool found = false;
    for (const KeywordProfile& p : load_keyword_profiles(path)) {
      if (p.model_family == cfg.model_family) {
        cfg.keywords = p;
        found = true;
      }
    }
    if (!found) {
      throw Error("unknown_model_family",
                  "no keyword profile for '" + cfg.model_family + "' in " + path);
    }
  } else {
    cfg.keywords = builtin_keyword_profile(cfg.model_family);
  }
  if (cfg.keywords.keywords.empty()) {
    throw Error("invalid_config", "keyword set must be non-empty");
  }

  cfg.dataset_path = get_string(doc, "dataset", cfg.dataset_path);
  cfg.out_dir = get_string(doc, "out_dir", cfg.out_dir);
  cfg.resume = get_bool(doc, "resume", cfg.resume);
  cfg.workers = get_int(doc, "workers", cfg.workers);
  if (cfg.workers < 1) throw Error("invalid_config", "workers must be >= 1");

  if (doc.contains("generation_endpoint")) {
    parse_endpoint(doc["generation_endpoint"], "generation_endpoint", cfg.generation_endpoint);
  }
  if (doc.contains("reward_endpoint")) {
    parse_endpoint(doc["reward_endpoint"], "reward_endpoint", cfg.reward_endpoint);
  }
  if (doc.contains("embedding_endpoint")) {
    parse_endpoint(doc["embedding_endpoint"], "embedding_endpoint", cfg.embedding_endpoint);
  }
  if (doc.contains("sim")) parse_sim_profile(doc["sim"], cfg.sim);

  cfg.perturb_trials = get_int(doc, "perturb_trials", cfg.perturb_trials);
  if (cfg.perturb_trials < 1) throw Error("invalid_config", "perturb_trials must be >= 1");
  if (doc.contains("perturb_deltas")) {
    if (!doc["perturb_deltas"].is_array()) {
      throw Error("invalid_config", "perturb_deltas must be an array of integers");
    }
    cfg.perturb_deltas.clear();
    for (const Json& d : doc["perturb_deltas"]) {
      if (!d.is_number_integer()) {
        throw Error("invalid_config", "perturb_deltas must be integers");
      }
      cfg.perturb_deltas.push_back(d.get<int>());
    }
  }
  cfg.similarity_target =
      target_mode_from_string(get_string(doc, "similarity_target", "mean_steps"));
  cfg.report_subset_draws = get_int(doc, "report_subset_draws", cfg.report_subset_draws);
  if (cfg.report_subset_draws < 1) {
    throw Error("invalid_config", "report_subset_draws must be >= 1");
  }

  validate_config(cfg.experiment);
  if (cfg.backend == BackendKind::Sim) validate_profile(cfg.sim);
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  return parse_config_json(read_file(path));
}

KeywordProfile builtin_keyword_profile(const std::string& model_family) {
  static const std::vector<KeywordProfile> kProfiles = {
      {"ds-r1", {"alternatively"}},
      {"qwen3", {"alternatively"}},
      {"claude", {"alternatively", "wait"}},
      {"gpt-oss", {"alternatively", "wait"}},
      {"magistral", {"alternatively", "wait"}},
  };
  for (const KeywordProfile& p : kProfiles) {
    if (p.model_family == model_family) return p;
  }
  throw Error("unknown_model_family", "no built-in keyword profile for '" + model_family + "'");
}

std::vector<KeywordProfile> load_keyword_profiles(const std::string& path) {
  Json doc = Json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error("invalid_config", "keyword profile file must be a JSON object: " + path);
  }
  std::vector<KeywordProfile> out;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!it.value().is_array() || it.value().empty()) {
      throw Error("invalid_config", "profile '" + it.key() + "' must be a non-empty array");
    }
    KeywordProfile p;
    p.model_family = it.key();
    for (const Json& k : it.value()) {
      if (!k.is_string() || k.get<std::string>().empty()) {
        throw Error("invalid_config", "profile '" + it.key() + "' has a non-string keyword");
      }
      p.keywords.push_back(lower_ascii(k.get<std::string>()));
    }
    out.push_back(std::move(p));
  }
  return out;
}

void apply_endpoint_env(RunConfig& cfg) {
  auto fill = [](std::string& field, const char* var) {
    if (!field.empty()) return;
    const char* v = std::getenv(var);
    if (v != nullptr && *v != '\0') field = v;
  };
  fill(cfg.generation_endpoint.base_url, "FSP_GENERATION_URL");
  fill(cfg.reward_endpoint.base_url, "FSP_REWARD_URL");
  fill(cfg.embedding_endpoint.base_url, "FSP_EMBEDDING_URL");
  fill(cfg.generation_endpoint.api_token, "FSP_API_TOKEN");
  fill(cfg.reward_endpoint.api_token, "FSP_API_TOKEN");
  fill(cfg.embedding_endpoint.api_token, "FSP_API_TOKEN");
}

std::string semantic_config_dump(const RunConfig& cfg) {
  Json j;
  j["backend"] = to_string(cfg.backend);
  j["n"] = cfg.experiment.n_candidates;
  j["m"] = cfg.experiment.keep_m;
  j["first_step_len"] = cfg.experiment.first_step_len;
  j["max_total_tokens"] = cfg.experiment.max_total_tokens;
  j["base_seed"] = cfg.experiment.base_seed;
  j["aggregation"] = aggregation_to_string(cfg.experiment.aggregation);
  j["min_sample_fraction"] = cfg.experiment.min_sample_fraction;
  j["decoding"] = {{"temperature", cfg.experiment.decoding.temperature},
                   {"top_p", cfg.experiment.decoding.top_p},
                   {"min_p", cfg.experiment.decoding.min_p},
                   {"max_tokens", cfg.experiment.decoding.max_tokens}};
  j["chat_template"] = {{"instruction", cfg.experiment.chat_template.instruction},
                        {"think_open", cfg.experiment.chat_template.think_open},
                        {"think_close", cfg.experiment.chat_template.think_close}};
  j["model_family"] = cfg.model_family;
  j["keywords"] = cfg.keywords.keywords;
  j["generation_model"] = cfg.generation_endpoint.model;
  j["reward_model"] = cfg.reward_endpoint.model;
  j["embedding_model"] = cfg.embedding_endpoint.model;
  if (cfg.backend == BackendKind::Sim) {
    j["sim"] = {{"p_correct_given_good_first", cfg.sim.p_correct_given_good_first},
                {"p_correct_given_bad_first", cfg.sim.p_correct_given_bad_first},
                {"p_good_first", cfg.sim.p_good_first},
                {"mean_total_tokens", cfg.sim.mean_total_tokens},
                {"conclusion_tokens", cfg.sim.conclusion_tokens},
                {"wrong_answer_pool", cfg.sim.wrong_answer_pool},
                {"p_correct_prefix_with_answer", cfg.sim.p_correct_prefix_with_answer},
                {"p_correct_prefix_without_answer", cfg.sim.p_correct_prefix_without_answer}};
  }
  j["perturb_trials"] = cfg.perturb_trials;
  j["perturb_deltas"] = cfg.perturb_deltas;
  j["similarity_target"] = target_mode_to_string(cfg.similarity_target);
  j["report_subset_draws"] = cfg.report_subset_draws;
  return j.dump();
}

uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(semantic_config_dump(cfg)); }

std::string make_run_id(const RunConfig& cfg, uint64_t dataset_hash) {
  return to_hex(config_hash(cfg)) + "-" + to_hex(dataset_hash);
}

}  // namespace firststep
