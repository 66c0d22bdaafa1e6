#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "firststep/analysis.hpp"
#include "firststep/backends.hpp"
#include "firststep/pruning.hpp"
#include "firststep/segmentation.hpp"
#include "firststep/sim.hpp"

namespace firststep {

enum class BackendKind { Sim, Http };

std::string to_string(BackendKind kind);
BackendKind backend_kind_from_string(const std::string& s);

// Full run configuration: experiment parameters plus backend wiring and
// operational knobs (paths, worker counts, resume behaviour).
struct RunConfig {
  ExperimentConfig experiment;

  BackendKind backend = BackendKind::Sim;
  HttpEndpointConfig generation_endpoint;
  HttpEndpointConfig reward_endpoint;
  HttpEndpointConfig embedding_endpoint;
  SimProfile sim;

  std::string model_family = "ds-r1";
  KeywordProfile keywords{"ds-r1", {"alternatively"}};

  std::string dataset_path;
  std::string out_dir = "runs/out";
  bool resume = true;
  int workers = 1;

  int perturb_trials = 8;
  std::vector<int> perturb_deltas = {1, -1, 10, -10};
  TargetMode similarity_target = TargetMode::MeanSteps;
  int report_subset_draws = 100;
};

// Parses a config JSON document. Unknown top-level keys are rejected so typos
// fail loudly. Throws Error("invalid_config" | "invalid_params" |
// "invalid_profile") on violations.
RunConfig parse_config_json(const std::string& text);

// Reads and parses a config file. Throws Error("io_error") if unreadable.
RunConfig load_config_file(const std::string& path);

// Built-in keyword profiles by model family; files may override. Throws
// Error("unknown_model_family") when the family has no entry.
KeywordProfile builtin_keyword_profile(const std::string& model_family);

// Loads a {family: [keywords...]} JSON document into profiles.
std::vector<KeywordProfile> load_keyword_profiles(const std::string& path);

// Fills endpoint URLs and API tokens from FSP_GENERATION_URL, FSP_REWARD_URL,
// FSP_EMBEDDING_URL and FSP_API_TOKEN for any field the config left empty.
// Explicit config values win; nothing else is environment-sensitive.
void apply_endpoint_env(RunConfig& cfg);

// Canonical JSON dump of the semantic configuration: experiment parameters,
// backend kind, model identities, keywords, sim profile. Excludes operational
// knobs (out_dir, workers, resume, endpoints' URLs/credentials/timeouts) so
// moving a run or changing parallelism does not change its identity.
std::string semantic_config_dump(const RunConfig& cfg);

// fnv1a64 of semantic_config_dump.
uint64_t config_hash(const RunConfig& cfg);

// "<config_hash>-<dataset_hash>" in fixed-width hex.
std::string make_run_id(const RunConfig& cfg, uint64_t dataset_hash);

}  // namespace firststep
