#include "firststep/persistence.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <unordered_set>

#include "firststep/error.hpp"
#include "firststep/util.hpp"

namespace firststep {

Json to_json(const Prediction& p) {
  return Json{{"canonical", p.canonical}, {"present", p.present}, {"raw", p.raw}};
}

Prediction prediction_from_json(const Json& j) {
  Prediction p;
  p.present = j.at("present").get<bool>();
  p.raw = j.at("raw").get<std::string>();
  p.canonical = j.at("canonical").get<std::string>();
  return p;
}

static FinishReason finish_reason_from_string(const std::string& s) {
  if (s == "stop_token") return FinishReason::StopToken;
  if (s == "length_cap") return FinishReason::LengthCap;
  if (s == "backend_error") return FinishReason::BackendError;
  throw Error("invalid_record", "unknown finish_reason " + s);
}

static UsageSource usage_source_from_string(const std::string& s) {
  if (s == "backend_reported") return UsageSource::BackendReported;
  if (s == "approximate") return UsageSource::Approximate;
  throw Error("invalid_record", "unknown usage_source " + s);
}

Json to_json(const FirstStepCandidate& c) {
  Json j{{"finish_reason", finish_reason_to_string(c.finish_reason)},
         {"question_id", c.question_id},
         {"seed", c.seed},
         {"status", candidate_status_to_string(c.status)},
         {"text", c.text},
         {"token_count", c.token_count},
         {"usage_source", usage_source_to_string(c.usage_source)}};
  if (c.has_reward) {
    j["reward"] = c.reward;
    j["scorer_id"] = c.scorer_id;
  } else {
    j["reward"] = nullptr;
  }
  return j;
}

FirstStepCandidate candidate_from_json(const Json& j) {
  FirstStepCandidate c;
  c.question_id = j.at("question_id").get<std::string>();
  c.seed = j.at("seed").get<uint64_t>();
  c.text = j.at("text").get<std::string>();
  c.token_count = j.at("token_count").get<int64_t>();
  c.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
  c.usage_source = usage_source_from_string(j.at("usage_source").get<std::string>());
  c.status = candidate_status_from_string(j.at("status").get<std::string>());
  if (j.contains("reward") && !j["reward"].is_null()) {
    c.has_reward = true;
    c.reward = j["reward"].get<double>();
    c.scorer_id = j.value("scorer_id", "");
  }
  return c;
}

Json to_json(const TraceRecord& r) {
  Json j{{"conclusion_text", r.conclusion_text},
         {"continuation_text", r.continuation_text},
         {"continuation_tokens", r.continuation_tokens},
         {"finish_reason", finish_reason_to_string(r.finish_reason)},
         {"first_step_text", r.first_step_text},
         {"first_step_tokens", r.first_step_tokens},
         {"prediction", to_json(r.prediction)},
         {"question_id", r.question_id},
         {"seed", r.seed},
         {"usage_source", usage_source_to_string(r.usage_source)}};
  j["correct"] = r.has_correct ? Json(r.correct) : Json(nullptr);
  j["reward"] = r.has_reward ? Json(r.reward) : Json(nullptr);
  return j;
}

TraceRecord trace_from_json(const Json& j) {
  TraceRecord r;
  r.question_id = j.at("question_id").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  r.first_step_text = j.at("first_step_text").get<std::string>();
  r.continuation_text = j.at("continuation_text").get<std::string>();
  r.conclusion_text = j.at("conclusion_text").get<std::string>();
  r.prediction = prediction_from_json(j.at("prediction"));
  if (!j.at("correct").is_null()) {
    r.has_correct = true;
    r.correct = j["correct"].get<bool>();
  }
  r.first_step_tokens = j.at("first_step_tokens").get<int64_t>();
  r.continuation_tokens = j.at("continuation_tokens").get<int64_t>();
  r.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
  r.usage_source = usage_source_from_string(j.at("usage_source").get<std::string>());
  if (!j.at("reward").is_null()) {
    r.has_reward = true;
    r.reward = j["reward"].get<double>();
  }
  return r;
}

Json to_json(const BudgetReport& b) {
  Json j{{"continuation_tokens_kept_m", b.continuation_tokens_kept_m},
         {"first_step_tokens_all_n", b.first_step_tokens_all_n},
         {"mixed_usage_sources", b.mixed_usage_sources},
         {"question_id", b.question_id},
         {"usage_source", usage_source_to_string(b.usage_source)}};
  j["baseline_total_tokens"] = b.has_baseline ? Json(b.baseline_total_tokens) : Json(nullptr);
  j["ratio_vs_baseline"] = b.has_ratio ? Json(b.ratio_vs_baseline) : Json(nullptr);
  return j;
}

BudgetReport budget_from_json(const Json& j) {
  BudgetReport b;
  b.question_id = j.at("question_id").get<std::string>();
  b.first_step_tokens_all_n = j.at("first_step_tokens_all_n").get<int64_t>();
  b.continuation_tokens_kept_m = j.at("continuation_tokens_kept_m").get<int64_t>();
  if (!j.at("baseline_total_tokens").is_null()) {
    b.has_baseline = true;
    b.baseline_total_tokens = j["baseline_total_tokens"].get<int64_t>();
  }
  if (!j.at("ratio_vs_baseline").is_null()) {
    b.has_ratio = true;
    b.ratio_vs_baseline = j["ratio_vs_baseline"].get<double>();
  }
  b.usage_source = usage_source_from_string(j.at("usage_source").get<std::string>());
  b.mixed_usage_sources = j.at("mixed_usage_sources").get<bool>();
  return b;
}

Json to_json(const PerturbationTrialRecord& t) {
  return Json{{"delta", t.delta},
              {"record", to_json(t.record)},
              {"trial", t.trial},
              {"variant", perturb_variant_to_string(t.variant)}};
}

PerturbationTrialRecord perturbation_from_json(const Json& j) {
  PerturbationTrialRecord t;
  t.variant = perturb_variant_from_string(j.at("variant").get<std::string>());
  t.delta = j.at("delta").get<int>();
  t.trial = j.at("trial").get<int>();
  t.record = trace_from_json(j.at("record"));
  return t;
}

Json to_json(const SimilarityCurve& c) {
  return Json{{"question_id", c.question_id},
              {"seed", c.seed},
              {"step_count", c.step_count},
              {"values", c.values}};
}

SimilarityCurve curve_from_json(const Json& j) {
  SimilarityCurve c;
  c.question_id = j.at("question_id").get<std::string>();
  c.seed = j.at("seed").get<uint64_t>();
  c.step_count = j.at("step_count").get<int>();
  c.values = j.at("values").get<std::vector<double>>();
  return c;
}

std::vector<Question> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open dataset " + path);
  std::vector<Question> out;
  std::unordered_set<std::string> seen;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error("invalid_dataset", path + ":" + std::to_string(lineno) + " is not JSON");
    Question q;
    try {
      q.id = j.at("id").get<std::string>();
      q.prompt = j.at("prompt").get<std::string>();
      q.answer_kind = answer_kind_from_string(j.at("answer_kind").get<std::string>());
      q.answer = canonicalize_answer(j.at("answer").get<std::string>(), q.answer_kind);
      q.benchmark_tag = j.value("benchmark_tag", "");
    } catch (const Json::exception& e) {
      throw Error("invalid_dataset", path + ":" + std::to_string(lineno) + " " + e.what());
    }
    if (!seen.insert(q.id).second)
      throw Error("duplicate_id", "dataset repeats id " + q.id);
    if (q.answer_kind == AnswerKind::Integer) {
      long v = q.answer.empty() ? -1 : std::strtol(q.answer.c_str(), nullptr, 10);
      if (q.answer.empty() || v < 0 || v >= 999)
        std::cerr << "warning: question " << q.id << " integer answer '" << q.answer
                  << "' outside [0,999)\n";
    }
    out.push_back(std::move(q));
  }
  return out;
}

uint64_t dataset_hash(const std::vector<Question>& questions) {
  std::string blob;
  for (const auto& q : questions) {
    blob += q.id;
    blob += '\x1f';
    blob += q.prompt;
    blob += '\x1f';
    blob += q.answer;
    blob += '\x1f';
    blob += answer_kind_to_string(q.answer_kind);
    blob += '\x1f';
    blob += q.benchmark_tag;
    blob += '\x1e';
  }
  return fnv1a64(blob);
}

JsonlWriter::JsonlWriter(const std::string& path) : path_(path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw Error("io_error", "cannot open " + path + " for append");
}

void JsonlWriter::write(const Json& obj) {
  std::lock_guard<std::mutex> lock(mu_);
  out_ << obj.dump() << '\n';
  out_.flush();
  if (!out_) throw Error("io_error", "write failed on " + path_);
}

JsonlLoadResult load_jsonl(const std::string& path) {
  JsonlLoadResult out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string data = ss.str();
  size_t pos = 0;
  while (pos < data.size()) {
    size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      ++out.quarantined;  // torn tail from an interrupted write
      break;
    }
    std::string_view line(data.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      ++out.quarantined;
      continue;
    }
    out.lines.push_back(std::move(j));
  }
  if (out.quarantined > 0)
    std::cerr << "notice: quarantined " << out.quarantined << " unusable line(s) in " << path
              << "\n";
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io_error", "cannot open " + path + " for write");
  out << content;
  if (!out) throw Error("io_error", "write failed on " + path);
}

}  // namespace firststep
