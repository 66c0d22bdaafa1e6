#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "firststep/analysis.hpp"
#include "firststep/config.hpp"
#include "firststep/persistence.hpp"
#include "firststep/pruning.hpp"

namespace firststep {

struct RunPaths {
  std::string out_dir;

  std::string candidates() const { return out_dir + "/candidates.jsonl"; }
  std::string records() const { return out_dir + "/records.jsonl"; }
  std::string baseline_records() const { return out_dir + "/baseline_records.jsonl"; }
  std::string budgets() const { return out_dir + "/budgets.jsonl"; }
  std::string probe_records() const { return out_dir + "/probe_records.jsonl"; }
  std::string curves() const { return out_dir + "/similarity_curves.jsonl"; }
  std::string similarity_csv() const { return out_dir + "/similarity_aggregate.csv"; }
  std::string perturb_records() const { return out_dir + "/perturb_records.jsonl"; }
  std::string keyword_freq_csv() const { return out_dir + "/keyword_freq.csv"; }
  std::string manifest() const { return out_dir + "/manifest.json"; }
  std::string errors() const { return out_dir + "/errors.jsonl"; }
  std::string report_md() const { return out_dir + "/report.md"; }
  std::string report_accuracy_csv() const { return out_dir + "/report_accuracy.csv"; }
  std::string report_budget_csv() const { return out_dir + "/report_budget.csv"; }
  std::string report_perturb_csv() const { return out_dir + "/report_perturb.csv"; }
  std::string report_plotdata() const { return out_dir + "/report_plotdata.json"; }

  std::vector<std::string> record_files() const;
};

// One forced-conclusion probe of a trace's first reasoning step.
struct ProbeRecord {
  std::string question_id;
  uint64_t seed = 0;
  std::string conclusion;
  Prediction prediction;
  bool first_correct = false;
  bool final_correct = false;
};

Json to_json(const ProbeRecord& p);
ProbeRecord probe_from_json(const Json& j);

// Deterministic synthetic dataset: integer answers in [0, 999), distinct
// prompts, ids "sq<i>".
std::vector<Question> make_dataset(int count, uint64_t seed);

// Appends {code, message, subcommand, timestamp} to <out_dir>/errors.jsonl
// (best effort) and prints the same object as one JSON line on stderr.
void write_fatal_error(const std::string& out_dir, const std::string& subcommand,
                       const std::string& code, const std::string& message);

class Runner {
 public:
  // Builds backends from the config (sim or http).
  explicit Runner(RunConfig cfg);
  // Injection seam for tests.
  Runner(RunConfig cfg, std::shared_ptr<GenerationBackend> gen,
         std::shared_ptr<RewardBackend> reward, std::shared_ptr<EmbeddingBackend> embed);

  // Dispatches a subcommand, records wall time in the manifest, converts
  // Error into a fatal-error record + nonzero exit code.
  int run(const std::string& subcommand, const std::string& report_format = "table_markdown");

  void cmd_sample();
  void cmd_score();
  void cmd_prune();
  void cmd_continue();
  void cmd_pipeline();
  void cmd_baseline();
  void cmd_probe_first_step();
  void cmd_similarity();
  void cmd_perturb();
  void cmd_keyword_freq();
  void cmd_report(const std::string& format);

  const RunConfig& config() const { return cfg_; }
  const RunPaths& paths() const { return paths_; }
  const std::vector<Question>& questions() const { return questions_; }
  const std::string& run_id() const { return run_id_; }
  GenerationBackend& generation() { return *gen_; }
  // Generation calls made through a sim backend; -1 when not a sim backend.
  int64_t sim_generation_calls() const;

 private:
  using SeedKey = std::pair<std::string, uint64_t>;
  using PerturbKey = std::tuple<std::string, std::string, int, int>;

  struct RunState {
    std::map<SeedKey, FirstStepCandidate> candidates;
    std::map<SeedKey, TraceRecord> records;
    std::map<SeedKey, TraceRecord> baseline;
    std::map<std::string, BudgetReport> budgets;
    std::map<SeedKey, ProbeRecord> probes;
    std::map<SeedKey, SimilarityCurve> curves;
    std::map<PerturbKey, PerturbationTrialRecord> perturb;
  };

  enum StateMask {
    kCandidates = 1,
    kRecords = 2,
    kBaseline = 4,
    kBudgets = 8,
    kProbes = 16,
    kCurves = 32,
    kPerturb = 64,
  };

  void init();
  RunState load_state(unsigned mask) const;
  std::vector<FirstStepCandidate> candidates_for(const RunState& st,
                                                 const std::string& qid) const;
  std::vector<TraceRecord> records_for(const std::map<SeedKey, TraceRecord>& m,
                                       const std::string& qid) const;
  // Baseline records when any exist, else pruned records.
  const std::map<SeedKey, TraceRecord>& source_records(const RunState& st) const;
  int min_needed(int requested) const;
  uint64_t perturb_trial_seed(int trial) const;
  void update_manifest(const std::string& subcommand, double wall_seconds);

  RunConfig cfg_;
  std::vector<Question> questions_;
  std::map<std::string, Question> by_id_;
  std::shared_ptr<GenerationBackend> gen_;
  std::shared_ptr<RewardBackend> reward_;
  std::shared_ptr<EmbeddingBackend> embed_;
  RunPaths paths_;
  uint64_t dataset_hash_ = 0;
  uint64_t config_hash_ = 0;
  std::string run_id_;
};

}  // namespace firststep
