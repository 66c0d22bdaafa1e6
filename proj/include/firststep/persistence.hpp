#pragma once

#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "firststep/analysis.hpp"
#include "firststep/core.hpp"
#include "firststep/pruning.hpp"

namespace firststep {

using Json = nlohmann::json;

// Key order inside a line is alphabetical (library map order), so identical
// state always serializes to identical bytes.
Json to_json(const Prediction& p);
Prediction prediction_from_json(const Json& j);
Json to_json(const FirstStepCandidate& c);
FirstStepCandidate candidate_from_json(const Json& j);
Json to_json(const TraceRecord& r);
TraceRecord trace_from_json(const Json& j);
Json to_json(const BudgetReport& b);
BudgetReport budget_from_json(const Json& j);
Json to_json(const PerturbationTrialRecord& t);
PerturbationTrialRecord perturbation_from_json(const Json& j);
Json to_json(const SimilarityCurve& c);
SimilarityCurve curve_from_json(const Json& j);

// Newline-delimited {id, prompt, answer, answer_kind, benchmark_tag}.
// Answers are canonicalized at load. Errors: io_error, invalid_dataset,
// duplicate_id. Integer answers outside [0,999) only warn.
std::vector<Question> load_dataset(const std::string& path);

// Order-sensitive content hash of a loaded dataset.
uint64_t dataset_hash(const std::vector<Question>& questions);

// Append-only writer: one JSON object per line, flushed per line.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path);
  void write(const Json& obj);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::mutex mu_;
};

struct JsonlLoadResult {
  std::vector<Json> lines;
  size_t quarantined = 0;  // unparseable lines plus any torn tail
};

// Missing file loads as empty. A trailing chunk without a newline counts as
// torn (the interrupted write is simply redone on resume).
JsonlLoadResult load_jsonl(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace firststep
