#include "firststep/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <unordered_set>

#include "firststep/error.hpp"
#include "firststep/report.hpp"
#include "firststep/sim.hpp"
#include "firststep/util.hpp"

namespace firststep {

namespace fs = std::filesystem;

std::vector<std::string> RunPaths::record_files() const {
  return {candidates(), records(),        baseline_records(), budgets(),
          probe_records(), curves(),      perturb_records(),  errors()};
}

Json to_json(const ProbeRecord& p) {
  Json j;
  j["conclusion"] = p.conclusion;
  j["final_correct"] = p.final_correct;
  j["first_correct"] = p.first_correct;
  j["prediction"] = to_json(p.prediction);
  j["question_id"] = p.question_id;
  j["seed"] = p.seed;
  return j;
}

ProbeRecord probe_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("question_id") || !j.contains("seed")) {
    throw Error("invalid_record", "probe record missing question_id/seed");
  }
  ProbeRecord p;
  p.question_id = j.at("question_id").get<std::string>();
  p.seed = j.at("seed").get<uint64_t>();
  p.conclusion = j.value("conclusion", std::string());
  p.prediction = prediction_from_json(j.at("prediction"));
  p.first_correct = j.value("first_correct", false);
  p.final_correct = j.value("final_correct", false);
  return p;
}

std::vector<Question> make_dataset(int count, uint64_t seed) {
  if (count < 1) throw Error("invalid_config", "dataset size must be >= 1");
  std::vector<Question> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    uint64_t h = mix64(seed ^ (0x51ed2700dull + static_cast<uint64_t>(i) * 0x9e3779b97f4a7c15ull));
    int answer = static_cast<int>(h % 999);
    Question q;
    q.id = "sq" + std::to_string(i);
    q.prompt = "Problem " + std::to_string(i) + " (instance " + to_hex(h) +
               "): determine the integer value of the generated expression.";
    q.answer = std::to_string(answer);
    q.answer_kind = AnswerKind::Integer;
    q.benchmark_tag = "sim";
    out.push_back(std::move(q));
  }
  return out;
}

void write_fatal_error(const std::string& out_dir, const std::string& subcommand,
                       const std::string& code, const std::string& message) {
  Json j;
  j["code"] = code;
  j["message"] = message;
  j["subcommand"] = subcommand;
  j["timestamp"] = iso8601_now();
  std::string line = j.dump();
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream out(out_dir + "/errors.jsonl", std::ios::app | std::ios::binary);
    if (out) out << line << "\n" << std::flush;
  }
  std::cerr << line << "\n";
}

Runner::Runner(RunConfig cfg) : cfg_(std::move(cfg)) {
  init();
  if (cfg_.backend == BackendKind::Sim) {
    gen_ = std::make_shared<SimGenerationBackend>(cfg_.sim, questions_,
                                                  cfg_.experiment.chat_template);
    reward_ = std::make_shared<SimRewardBackend>(cfg_.sim);
    embed_ = std::make_shared<SimEmbeddingBackend>();
  } else {
    if (cfg_.generation_endpoint.base_url.empty()) {
      throw Error("invalid_config", "http backend requires generation_endpoint.base_url");
    }
    gen_ = make_http_generation_backend(cfg_.generation_endpoint);
    if (!cfg_.reward_endpoint.base_url.empty()) {
      reward_ = make_http_reward_backend(cfg_.reward_endpoint);
    }
    if (!cfg_.embedding_endpoint.base_url.empty()) {
      embed_ = make_http_embedding_backend(cfg_.embedding_endpoint);
    }
  }
}

Runner::Runner(RunConfig cfg, std::shared_ptr<GenerationBackend> gen,
               std::shared_ptr<RewardBackend> reward, std::shared_ptr<EmbeddingBackend> embed)
    : cfg_(std::move(cfg)),
      gen_(std::move(gen)),
      reward_(std::move(reward)),
      embed_(std::move(embed)) {
  init();
}

void Runner::init() {
  validate_config(cfg_.experiment);
  if (cfg_.backend == BackendKind::Sim) validate_profile(cfg_.sim);
  if (cfg_.workers < 1) throw Error("invalid_config", "workers must be >= 1");
  if (cfg_.dataset_path.empty()) throw Error("invalid_config", "dataset path is required");
  if (cfg_.out_dir.empty()) throw Error("invalid_config", "out_dir is required");

  questions_ = load_dataset(cfg_.dataset_path);
  for (const Question& q : questions_) by_id_[q.id] = q;
  dataset_hash_ = dataset_hash(questions_);
  config_hash_ = config_hash(cfg_);
  run_id_ = make_run_id(cfg_, dataset_hash_);
  paths_.out_dir = cfg_.out_dir;

  if (!cfg_.resume) {
    std::error_code ec;
    for (const std::string& f : paths_.record_files()) fs::remove(f, ec);
    fs::remove(paths_.manifest(), ec);
  }

  std::ifstream mf(paths_.manifest(), std::ios::binary);
  if (mf) {
    Json m = Json::parse(mf, nullptr, false);
    if (m.is_object()) {
      if (m.contains("config_hash") && m["config_hash"] != to_hex(config_hash_)) {
        throw Error("config_drift",
                    "out_dir " + cfg_.out_dir +
                        " holds a run with a different configuration; use a fresh "
                        "out_dir or pass --no-resume");
      }
      if (m.contains("dataset_hash") && m["dataset_hash"] != to_hex(dataset_hash_)) {
        throw Error("dataset_drift",
                    "out_dir " + cfg_.out_dir + " holds a run over a different dataset");
      }
    }
  }
}

int64_t Runner::sim_generation_calls() const {
  auto* sim = dynamic_cast<const SimGenerationBackend*>(gen_.get());
  return sim != nullptr ? static_cast<int64_t>(sim->calls()) : -1;
}

Runner::RunState Runner::load_state(unsigned mask) const {
  RunState st;
  auto load_into = [](const std::string& path, const std::string& what,
                      const std::function<void(const Json&)>& add) {
    JsonlLoadResult res = load_jsonl(path);
    size_t bad = 0;
    for (const Json& line : res.lines) {
      try {
        add(line);
      } catch (const std::exception&) {
        ++bad;
      }
    }
    if (bad > 0) {
      std::cerr << "note: quarantined " << bad << " malformed " << what << " line(s) in "
                << path << "\n";
    }
  };
  if (mask & kCandidates) {
    load_into(paths_.candidates(), "candidate", [&](const Json& j) {
      FirstStepCandidate c = candidate_from_json(j);
      st.candidates.insert_or_assign(SeedKey{c.question_id, c.seed}, std::move(c));
    });
  }
  if (mask & kRecords) {
    load_into(paths_.records(), "trace", [&](const Json& j) {
      TraceRecord r = trace_from_json(j);
      st.records.insert_or_assign(SeedKey{r.question_id, r.seed}, std::move(r));
    });
  }
  if (mask & kBaseline) {
    load_into(paths_.baseline_records(), "baseline trace", [&](const Json& j) {
      TraceRecord r = trace_from_json(j);
      st.baseline.insert_or_assign(SeedKey{r.question_id, r.seed}, std::move(r));
    });
  }
  if (mask & kBudgets) {
    load_into(paths_.budgets(), "budget", [&](const Json& j) {
      BudgetReport b = budget_from_json(j);
      st.budgets.insert_or_assign(b.question_id, std::move(b));
    });
  }
  if (mask & kProbes) {
    load_into(paths_.probe_records(), "probe", [&](const Json& j) {
      ProbeRecord p = probe_from_json(j);
      st.probes.insert_or_assign(SeedKey{p.question_id, p.seed}, std::move(p));
    });
  }
  if (mask & kCurves) {
    load_into(paths_.curves(), "similarity curve", [&](const Json& j) {
      SimilarityCurve c = curve_from_json(j);
      st.curves.insert_or_assign(SeedKey{c.question_id, c.seed}, std::move(c));
    });
  }
  if (mask & kPerturb) {
    load_into(paths_.perturb_records(), "perturbation", [&](const Json& j) {
      PerturbationTrialRecord t = perturbation_from_json(j);
      PerturbKey key{t.record.question_id, perturb_variant_to_string(t.variant), t.delta,
                     t.trial};
      st.perturb.insert_or_assign(std::move(key), std::move(t));
    });
  }
  return st;
}

std::vector<FirstStepCandidate> Runner::candidates_for(const RunState& st,
                                                       const std::string& qid) const {
  std::vector<FirstStepCandidate> out;
  for (auto it = st.candidates.lower_bound(SeedKey{qid, 0});
       it != st.candidates.end() && it->first.first == qid; ++it) {
    out.push_back(it->second);
  }
  return out;
}

std::vector<TraceRecord> Runner::records_for(const std::map<SeedKey, TraceRecord>& m,
                                             const std::string& qid) const {
  std::vector<TraceRecord> out;
  for (auto it = m.lower_bound(SeedKey{qid, 0}); it != m.end() && it->first.first == qid;
       ++it) {
    out.push_back(it->second);
  }
  return out;
}

const std::map<Runner::SeedKey, TraceRecord>& Runner::source_records(
    const RunState& st) const {
  return st.baseline.empty() ? st.records : st.baseline;
}

int Runner::min_needed(int requested) const {
  double frac = cfg_.experiment.min_sample_fraction;
  int needed = static_cast<int>(std::ceil(frac * requested - 1e-9));
  return std::max(0, std::min(requested, needed));
}

uint64_t Runner::perturb_trial_seed(int trial) const {
  return cfg_.experiment.base_seed + 1000000ull + static_cast<uint64_t>(trial);
}

void Runner::update_manifest(const std::string& subcommand, double wall_seconds) {
  Json m;
  {
    std::ifstream in(paths_.manifest(), std::ios::binary);
    if (in) {
      Json prev = Json::parse(in, nullptr, false);
      if (prev.is_object()) m = std::move(prev);
    }
  }
  m["run_id"] = run_id_;
  m["config_hash"] = to_hex(config_hash_);
  m["dataset_hash"] = to_hex(dataset_hash_);
  m["dataset_path"] = cfg_.dataset_path;
  m["question_count"] = questions_.size();
  m["config"] = Json::parse(semantic_config_dump(cfg_));
  Json backends;
  backends["generation"] = gen_ != nullptr ? gen_->name() : "";
  backends["reward"] = reward_ != nullptr ? reward_->scorer_id() : "";
  backends["embedding"] =
      cfg_.backend == BackendKind::Sim ? "sim-embed" : cfg_.embedding_endpoint.base_url;
  m["backends"] = backends;
  if (!m.contains("created_at")) m["created_at"] = iso8601_now();
  m["updated_at"] = iso8601_now();
  m["last_subcommand"] = subcommand;
  if (!m.contains("wall_seconds") || !m["wall_seconds"].is_object()) {
    m["wall_seconds"] = Json::object();
  }
  double prev = m["wall_seconds"].value(subcommand, 0.0);
  m["wall_seconds"][subcommand] = prev + wall_seconds;
  write_text_file(paths_.manifest(), m.dump(2) + "\n");
}

int Runner::run(const std::string& subcommand, const std::string& report_format) {
  auto t0 = std::chrono::steady_clock::now();
  try {
    if (subcommand == "sample") {
      cmd_sample();
    } else if (subcommand == "score") {
      cmd_score();
    } else if (subcommand == "prune") {
      cmd_prune();
    } else if (subcommand == "continue") {
      cmd_continue();
    } else if (subcommand == "pipeline") {
      cmd_pipeline();
    } else if (subcommand == "baseline") {
      cmd_baseline();
    } else if (subcommand == "probe-first-step") {
      cmd_probe_first_step();
    } else if (subcommand == "similarity") {
      cmd_similarity();
    } else if (subcommand == "perturb") {
      cmd_perturb();
    } else if (subcommand == "keyword-freq") {
      cmd_keyword_freq();
    } else if (subcommand == "report") {
      cmd_report(report_format);
    } else {
      throw Error("invalid_config", "unknown subcommand: " + subcommand);
    }
  } catch (const Error& e) {
    write_fatal_error(cfg_.out_dir, subcommand, e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    write_fatal_error(cfg_.out_dir, subcommand, "internal_error", e.what());
    return 1;
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  update_manifest(subcommand, secs);
  return 0;
}

namespace {

// Runs fn over question indices on `workers` threads; fn must commit its
// index exactly once on success, the wrapper commits an empty write when fn
// throws so later indices never deadlock.
void parallel_questions(size_t n, int workers,
                        const std::function<void(size_t, OrderedCommitter&)>& fn) {
  OrderedCommitter committer;
  parallel_for(n, workers, [&](size_t qi) {
    try {
      fn(qi, committer);
    } catch (...) {
      committer.commit(qi, {});
      throw;
    }
  });
}

std::string phase_failure(const std::string& qid, const char* phase, int failed,
                          int requested, const std::vector<std::string>& errors) {
  std::string msg = "question " + qid + ": " + std::to_string(failed) + " of " +
                    std::to_string(requested) + " " + phase + " generations failed";
  if (!errors.empty()) msg += "; first: " + errors.front();
  return msg;
}

void sort_by_seed(std::vector<FirstStepCandidate>& v) {
  std::sort(v.begin(), v.end(), [](const FirstStepCandidate& a, const FirstStepCandidate& b) {
    return a.seed < b.seed;
  });
}

struct CandidateState {
  CandidateStatus status;
  bool has_reward;
  double reward;
};

bool state_changed(const std::map<uint64_t, CandidateState>& prior,
                   const FirstStepCandidate& c) {
  auto it = prior.find(c.seed);
  if (it == prior.end()) return true;
  return it->second.status != c.status || it->second.has_reward != c.has_reward ||
         (c.has_reward && it->second.reward != c.reward);
}

}  // namespace

void Runner::cmd_sample() {
  RunState st = load_state(kCandidates);
  JsonlWriter writer(paths_.candidates());
  std::atomic<int64_t> created{0};
  const int n = cfg_.experiment.n_candidates;
  parallel_questions(questions_.size(), cfg_.workers, [&](size_t qi, OrderedCommitter& com) {
    const Question& q = questions_[qi];
    std::unordered_set<uint64_t> have;
    for (int i = 0; i < n; ++i) {
      uint64_t s = cfg_.experiment.seed_for(i);
      if (st.candidates.count(SeedKey{q.id, s})) have.insert(s);
    }
    SampleOutcome out = sample_first_steps(q, cfg_.experiment, *gen_, &have);
    int ok = static_cast<int>(have.size() + out.candidates.size());
    if (ok < min_needed(n)) {
      throw Error("partial_failure",
                  phase_failure(q.id, "first-step", out.failed, out.requested, out.errors));
    }
    created += static_cast<int64_t>(out.candidates.size());
    com.commit(qi, [&] {
      for (const FirstStepCandidate& c : out.candidates) writer.write(to_json(c));
    });
  });
  std::cout << "sample: " << created << " new candidates over " << questions_.size()
            << " questions\n";
}

void Runner::cmd_score() {
  if (reward_ == nullptr) throw Error("invalid_config", "reward endpoint not configured");
  RunState st = load_state(kCandidates);
  JsonlWriter writer(paths_.candidates());
  std::atomic<int64_t> scored{0};
  parallel_questions(questions_.size(), cfg_.workers, [&](size_t qi, OrderedCommitter& com) {
    const Question& q = questions_[qi];
    std::vector<FirstStepCandidate> cands = candidates_for(st, q.id);
    if (cands.empty()) {
      throw Error("missing_candidates", "question " + q.id + " has no candidates; run sample");
    }
    std::vector<char> had(cands.size());
    for (size_t i = 0; i < cands.size(); ++i) had[i] = cands[i].has_reward ? 1 : 0;
    score_candidates(q, cands, cfg_.experiment, *reward_);
    com.commit(qi, [&] {
      for (size_t i = 0; i < cands.size(); ++i) {
        if (!had[i] && cands[i].has_reward) {
          writer.write(to_json(cands[i]));
          ++scored;
        }
      }
    });
  });
  std::cout << "score: " << scored << " candidates newly scored\n";
}

void Runner::cmd_prune() {
  RunState st = load_state(kCandidates);
  JsonlWriter writer(paths_.candidates());
  int64_t changed = 0;
  for (const Question& q : questions_) {
    std::vector<FirstStepCandidate> cands = candidates_for(st, q.id);
    if (cands.empty()) {
      throw Error("missing_candidates", "question " + q.id + " has no candidates; run sample");
    }
    std::map<uint64_t, CandidateState> prior;
    for (const FirstStepCandidate& c : cands) {
      prior[c.seed] = {c.status, c.has_reward, c.reward};
    }
    auto [selected, discarded] = select_top_m(std::move(cands), cfg_.experiment.keep_m);
    std::vector<FirstStepCandidate> final = std::move(selected);
    final.insert(final.end(), discarded.begin(), discarded.end());
    sort_by_seed(final);
    for (const FirstStepCandidate& c : final) {
      if (state_changed(prior, c)) {
        writer.write(to_json(c));
        ++changed;
      }
    }
  }
  std::cout << "prune: " << changed << " candidate statuses updated\n";
}

void Runner::cmd_continue() {
  RunState st = load_state(kCandidates | kRecords | kBaseline | kBudgets);
  JsonlWriter cand_writer(paths_.candidates());
  JsonlWriter rec_writer(paths_.records());
  JsonlWriter budget_writer(paths_.budgets());
  std::atomic<int64_t> new_records{0};
  parallel_questions(questions_.size(), cfg_.workers, [&](size_t qi, OrderedCommitter& com) {
    const Question& q = questions_[qi];
    std::vector<FirstStepCandidate> cands = candidates_for(st, q.id);
    if (cands.empty()) {
      throw Error("missing_candidates", "question " + q.id + " has no candidates; run sample");
    }
    std::map<uint64_t, CandidateState> prior;
    for (const FirstStepCandidate& c : cands) {
      prior[c.seed] = {c.status, c.has_reward, c.reward};
    }

    bool have_selection = std::any_of(cands.begin(), cands.end(), [](const auto& c) {
      return c.status == CandidateStatus::Selected;
    });
    std::vector<FirstStepCandidate> selected;
    std::vector<FirstStepCandidate> final;
    if (have_selection) {
      final = cands;
      for (const FirstStepCandidate& c : cands) {
        if (c.status == CandidateStatus::Selected) selected.push_back(c);
      }
      std::sort(selected.begin(), selected.end(),
                [](const FirstStepCandidate& a, const FirstStepCandidate& b) {
                  if (a.reward != b.reward) return a.reward > b.reward;
                  return a.seed < b.seed;
                });
    } else {
      auto [sel, disc] = select_top_m(std::move(cands), cfg_.experiment.keep_m);
      selected = sel;
      final = std::move(sel);
      final.insert(final.end(), disc.begin(), disc.end());
      sort_by_seed(final);
    }

    std::unordered_set<uint64_t> skip;
    for (const FirstStepCandidate& c : selected) {
      if (st.records.count(SeedKey{q.id, c.seed})) skip.insert(c.seed);
    }
    ContinueOutcome out = continue_selected(q, selected, cfg_.experiment, *gen_, &skip);
    int done = static_cast<int>(out.records.size() + skip.size());
    if (done < min_needed(static_cast<int>(selected.size()))) {
      throw Error("partial_failure",
                  phase_failure(q.id, "continuation", out.failed, out.requested, out.errors));
    }

    std::map<uint64_t, const TraceRecord*> fresh;
    for (const TraceRecord& r : out.records) fresh[r.seed] = &r;
    std::vector<TraceRecord> kept;
    for (const FirstStepCandidate& c : selected) {
      if (skip.count(c.seed)) {
        kept.push_back(st.records.at(SeedKey{q.id, c.seed}));
      } else if (auto it = fresh.find(c.seed); it != fresh.end()) {
        kept.push_back(*it->second);
      }
    }
    std::vector<TraceRecord> base = records_for(st.baseline, q.id);
    BudgetReport budget =
        compute_budget(q.id, final, kept, base.empty() ? nullptr : &base);
    bool budget_changed = true;
    if (auto it = st.budgets.find(q.id); it != st.budgets.end()) {
      budget_changed = to_json(it->second) != to_json(budget);
    }

    new_records += static_cast<int64_t>(out.records.size());
    com.commit(qi, [&] {
      for (const FirstStepCandidate& c : final) {
        if (state_changed(prior, c)) cand_writer.write(to_json(c));
      }
      for (const TraceRecord& r : out.records) rec_writer.write(to_json(r));
      if (budget_changed) budget_writer.write(to_json(budget));
    });
  });
  std::cout << "continue: " << new_records << " new continuations\n";
}

void Runner::cmd_pipeline() {
  if (reward_ == nullptr) throw Error("invalid_config", "reward endpoint not configured");
  RunState st = load_state(kCandidates | kRecords | kBaseline | kBudgets);
  JsonlWriter cand_writer(paths_.candidates());
  JsonlWriter rec_writer(paths_.records());
  JsonlWriter budget_writer(paths_.budgets());
  std::atomic<int64_t> new_records{0};
  const int n = cfg_.experiment.n_candidates;
  parallel_questions(questions_.size(), cfg_.workers, [&](size_t qi, OrderedCommitter& com) {
    const Question& q = questions_[qi];
    std::vector<FirstStepCandidate> cands = candidates_for(st, q.id);
    std::map<uint64_t, CandidateState> prior;
    std::unordered_set<uint64_t> have;
    for (const FirstStepCandidate& c : cands) {
      prior[c.seed] = {c.status, c.has_reward, c.reward};
      have.insert(c.seed);
    }

    SampleOutcome sampled = sample_first_steps(q, cfg_.experiment, *gen_, &have);
    int ok = static_cast<int>(have.size() + sampled.candidates.size());
    if (ok < min_needed(n)) {
      throw Error("partial_failure", phase_failure(q.id, "first-step", sampled.failed,
                                                   sampled.requested, sampled.errors));
    }
    cands.insert(cands.end(), sampled.candidates.begin(), sampled.candidates.end());
    sort_by_seed(cands);

    score_candidates(q, cands, cfg_.experiment, *reward_);
    auto [selected, discarded] = select_top_m(std::move(cands), cfg_.experiment.keep_m);
    std::vector<FirstStepCandidate> final = selected;
    final.insert(final.end(), discarded.begin(), discarded.end());
    sort_by_seed(final);

    std::unordered_set<uint64_t> skip;
    for (const FirstStepCandidate& c : selected) {
      if (st.records.count(SeedKey{q.id, c.seed})) skip.insert(c.seed);
    }
    ContinueOutcome out = continue_selected(q, selected, cfg_.experiment, *gen_, &skip);
    int done = static_cast<int>(out.records.size() + skip.size());
    if (done < min_needed(static_cast<int>(selected.size()))) {
      throw Error("partial_failure",
                  phase_failure(q.id, "continuation", out.failed, out.requested, out.errors));
    }

    std::map<uint64_t, const TraceRecord*> fresh;
    for (const TraceRecord& r : out.records) fresh[r.seed] = &r;
    std::vector<TraceRecord> kept;
    for (const FirstStepCandidate& c : selected) {
      if (skip.count(c.seed)) {
        kept.push_back(st.records.at(SeedKey{q.id, c.seed}));
      } else if (auto it = fresh.find(c.seed); it != fresh.end()) {
        kept.push_back(*it->second);
      }
    }
    std::vector<TraceRecord> base = records_for(st.baseline, q.id);
    BudgetReport budget =
        compute_budget(q.id, final, kept, base.empty() ? nullptr : &base);
    bool budget_changed = true;
    if (auto it = st.budgets.find(q.id); it != st.budgets.end()) {
      budget_changed = to_json(it->second) != to_json(budget);
    }

    new_records += static_cast<int64_t>(out.records.size());
    com.commit(qi, [&] {
      for (const FirstStepCandidate& c : final) {
        if (state_changed(prior, c)) cand_writer.write(to_json(c));
      }
      for (const TraceRecord& r : out.records) rec_writer.write(to_json(r));
      if (budget_changed) budget_writer.write(to_json(budget));
    });
  });
  std::cout << "pipeline: " << new_records << " new continuations over " << questions_.size()
            << " questions\n";
}

void Runner::cmd_baseline() {
  RunState st = load_state(kBaseline);
  JsonlWriter writer(paths_.baseline_records());
  std::atomic<int64_t> created{0};
  const int n = cfg_.experiment.n_candidates;
  parallel_questions(questions_.size(), cfg_.workers, [&](size_t qi, OrderedCommitter& com) {
    const Question& q = questions_[qi];
    std::unordered_set<uint64_t> skip;
    for (int i = 0; i < n; ++i) {
      uint64_t s = cfg_.experiment.seed_for(i);
      if (st.baseline.count(SeedKey{q.id, s})) skip.insert(s);
    }
    ContinueOutcome out = run_baseline(q, cfg_.experiment, *gen_, &skip);
    int done = static_cast<int>(out.records.size() + skip.size());
    if (done < min_needed(n)) {
      throw Error("partial_failure",
                  phase_failure(q.id, "baseline", out.failed, out.requested, out.errors));
    }
    created += static_cast<int64_t>(out.records.size());
    com.commit(qi, [&] {
      for (const TraceRecord& r : out.records) writer.write(to_json(r));
    });
  });
  std::cout << "baseline: " << created << " new full traces\n";
}

void Runner::cmd_probe_first_step() {
  RunState st = load_state(kRecords | kBaseline | kProbes);
  const auto& source = source_records(st);
  if (source.empty()) {
    throw Error("missing_records", "no trace records to probe; run pipeline or baseline");
  }
  JsonlWriter writer(paths_.probe_records());
  std::atomic<int64_t> created{0};
  std::atomic<int64_t> skipped{0};
  const std::string& close = cfg_.experiment.chat_template.think_close;
  parallel_questions(questions_.size(), cfg_.workers, [&](size_t qi, OrderedCommitter& com) {
    const Question& q = questions_[qi];
    std::vector<ProbeRecord> fresh;
    for (const TraceRecord& rec : records_for(source, q.id)) {
      if (st.probes.count(SeedKey{q.id, rec.seed})) continue;
      std::string full = rec.first_step_text + rec.continuation_text;
      size_t cut = full.find(close);
      std::string think = cut == std::string::npos ? full : full.substr(0, cut);
      std::string stripped = strip_question_overlap(think, q);
      if (trim(stripped).empty()) {
        ++skipped;
        continue;
      }
      try {
        StepSegmentation seg = segment_steps(stripped, cfg_.keywords);
        auto [conclusion, pred] = force_first_step_conclusion(q, seg.steps.front(),
                                                              cfg_.experiment, *gen_, rec.seed);
        ProbeRecord pr;
        pr.question_id = q.id;
        pr.seed = rec.seed;
        pr.conclusion = conclusion;
        pr.prediction = pred;
        pr.first_correct = answers_equal(pred, q);
        pr.final_correct = rec.has_correct && rec.correct;
        fresh.push_back(std::move(pr));
      } catch (const Error&) {
        ++skipped;
      }
    }
    created += static_cast<int64_t>(fresh.size());
    com.commit(qi, [&] {
      for (const ProbeRecord& pr : fresh) writer.write(to_json(pr));
    });
  });

  RunState after = load_state(kRecords | kBaseline | kProbes);
  const auto& src_after = source_records(after);
  std::vector<bool> first, final;
  for (const Question& q : questions_) {
    std::vector<TraceRecord> recs = records_for(src_after, q.id);
    std::vector<SeedVerdict> verdicts;
    for (const TraceRecord& r : recs) {
      SeedVerdict v;
      v.seed = r.seed;
      v.prediction = r.prediction;
      v.correct = r.has_correct && r.correct;
      verdicts.push_back(std::move(v));
    }
    if (verdicts.empty()) continue;
    QuestionOutcome outcome = difficulty_profile(q.id, verdicts);
    if (outcome.bucket == Bucket::DegenerateAllRight ||
        outcome.bucket == Bucket::DegenerateAllWrong) {
      continue;
    }
    for (auto it = after.probes.lower_bound(SeedKey{q.id, 0});
         it != after.probes.end() && it->first.first == q.id; ++it) {
      first.push_back(it->second.first_correct);
      final.push_back(it->second.final_correct);
    }
  }
  std::cout << "probe-first-step: " << created << " new probes, " << skipped << " skipped\n";
  if (first.size() >= 3) {
    try {
      PhiResult phi = pearson_phi(first, final);
      std::printf("probe-first-step: phi r=%.4f p=%.4f over %zu pairs\n", phi.r, phi.p_value,
                  first.size());
    } catch (const Error& e) {
      std::cout << "probe-first-step: phi unavailable (" << e.code() << ")\n";
    }
  }
}

void Runner::cmd_similarity() {
  if (embed_ == nullptr) throw Error("invalid_config", "embedding endpoint not configured");
  RunState st = load_state(kRecords | kBaseline | kCurves);
  const auto& source = source_records(st);
  if (source.empty()) {
    throw Error("missing_records", "no trace records to analyze; run pipeline or baseline");
  }
  JsonlWriter writer(paths_.curves());
  std::atomic<int64_t> created{0};
  std::atomic<int64_t> skipped{0};
  parallel_questions(questions_.size(), cfg_.workers, [&](size_t qi, OrderedCommitter& com) {
    const Question& q = questions_[qi];
    std::vector<SimilarityCurve> fresh;
    for (const TraceRecord& rec : records_for(source, q.id)) {
      if (st.curves.count(SeedKey{q.id, rec.seed})) continue;
      try {
        fresh.push_back(similarity_curve(rec, q, cfg_.keywords,
                                         cfg_.experiment.chat_template, *embed_));
      } catch (const Error&) {
        ++skipped;
      }
    }
    created += static_cast<int64_t>(fresh.size());
    com.commit(qi, [&] {
      for (const SimilarityCurve& c : fresh) writer.write(to_json(c));
    });
  });

  RunState after = load_state(kCurves);
  std::vector<SimilarityCurve> all;
  all.reserve(after.curves.size());
  for (const auto& [key, curve] : after.curves) all.push_back(curve);
  std::cout << "similarity: " << created << " new curves, " << skipped << " skipped\n";
  if (!all.empty()) {
    AggregatedCurve agg = interpolate_and_aggregate(all, cfg_.similarity_target);
    std::string csv = "grid_index,mean,stderr,n_curves\n";
    for (size_t i = 0; i < agg.grid.size(); ++i) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%d\n", i, agg.mean[i], agg.std_error[i],
                    agg.n_curves);
      csv += buf;
    }
    write_text_file(paths_.similarity_csv(), csv);
    std::cout << "similarity: aggregated " << agg.n_curves << " curves onto "
              << agg.grid.size() << " grid points -> " << paths_.similarity_csv() << "\n";
  }
}

void Runner::cmd_perturb() {
  RunState st = load_state(kRecords | kBaseline | kPerturb);
  const auto& source = source_records(st);
  if (source.empty()) {
    throw Error("missing_records", "no trace records to perturb; run pipeline or baseline");
  }
  JsonlWriter writer(paths_.perturb_records());
  std::atomic<int64_t> created{0};
  std::atomic<int64_t> no_source{0};
  std::atomic<int64_t> build_failed{0};
  parallel_questions(questions_.size(), cfg_.workers, [&](size_t qi, OrderedCommitter& com) {
    const Question& q = questions_[qi];
    const TraceRecord* src = nullptr;
    for (const TraceRecord& rec : records_for(source, q.id)) {
      if (rec.has_correct && rec.correct && rec.prediction.present &&
          !rec.conclusion_text.empty()) {
        src = &source.at(SeedKey{q.id, rec.seed});
        break;
      }
    }
    std::vector<PerturbationTrialRecord> fresh;
    if (src == nullptr) {
      ++no_source;
    } else {
      for (PerturbVariant variant : {PerturbVariant::CorrectBaseline, PerturbVariant::Incorrect}) {
        std::vector<int> deltas =
            variant == PerturbVariant::Incorrect ? cfg_.perturb_deltas : std::vector<int>{0};
        for (int delta : deltas) {
          PerturbedFirstStep pfs;
          try {
            pfs = build_perturbed_first_step(src->conclusion_text, q, variant, delta);
          } catch (const Error&) {
            ++build_failed;
            continue;
          }
          for (int trial = 0; trial < cfg_.perturb_trials; ++trial) {
            PerturbKey key{q.id, perturb_variant_to_string(variant), delta, trial};
            if (st.perturb.count(key)) continue;
            PerturbationTrialRecord out;
            out.variant = variant;
            out.delta = delta;
            out.trial = trial;
            out.record =
                run_perturbation_trial(q, pfs, cfg_.experiment, *gen_, perturb_trial_seed(trial));
            fresh.push_back(std::move(out));
          }
        }
      }
    }
    created += static_cast<int64_t>(fresh.size());
    com.commit(qi, [&] {
      for (const PerturbationTrialRecord& t : fresh) writer.write(to_json(t));
    });
  });

  RunState after = load_state(kPerturb);
  std::map<std::pair<std::string, int>, std::pair<int, int>> table;  // (variant,delta)->(n,correct)
  for (const auto& [key, t] : after.perturb) {
    auto& cell = table[{perturb_variant_to_string(t.variant), t.delta}];
    ++cell.first;
    if (t.record.has_correct && t.record.correct) ++cell.second;
  }
  std::cout << "perturb: " << created << " new trials (" << no_source
            << " questions without a correct source, " << build_failed << " build failures)\n";
  for (const auto& [key, cell] : table) {
    std::printf("perturb: %s delta=%+d  accuracy %.4f (%d trials)\n", key.first.c_str(),
                key.second, cell.first > 0 ? double(cell.second) / cell.first : 0.0,
                cell.first);
  }
}

void Runner::cmd_keyword_freq() {
  RunState st = load_state(kRecords | kBaseline);
  std::vector<const TraceRecord*> corpus;
  for (const auto& [key, rec] : st.records) corpus.push_back(&rec);
  for (const auto& [key, rec] : st.baseline) corpus.push_back(&rec);
  if (corpus.empty()) {
    throw Error("missing_records", "no trace records to scan; run pipeline or baseline");
  }
  std::string csv = "keyword,traces,traces_with_keyword,total_occurrences,avg_per_trace,"
                    "boundary_occurrences,avg_boundaries_per_trace\n";
  for (const std::string& kw : cfg_.keywords.keywords) {
    KeywordProfile single{cfg_.keywords.model_family, {kw}};
    int64_t total = 0;
    int64_t boundaries = 0;
    int64_t with = 0;
    for (const TraceRecord* rec : corpus) {
      std::string text = rec->first_step_text + rec->continuation_text;
      size_t hits = find_whole_word_ci(text, kw).size();
      total += static_cast<int64_t>(hits);
      if (hits > 0) ++with;
      boundaries += static_cast<int64_t>(step_boundaries(text, single).size());
    }
    double n = static_cast<double>(corpus.size());
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%zu,%lld,%lld,%.4f,%lld,%.4f\n", kw.c_str(),
                  corpus.size(), static_cast<long long>(with), static_cast<long long>(total),
                  total / n, static_cast<long long>(boundaries), boundaries / n);
    csv += buf;
    std::printf("keyword-freq: '%s' in %lld/%zu traces, %.2f occurrences and %.2f "
                "boundaries per trace\n",
                kw.c_str(), static_cast<long long>(with), corpus.size(), total / n,
                boundaries / n);
  }
  write_text_file(paths_.keyword_freq_csv(), csv);
}

void Runner::cmd_report(const std::string& format) {
  if (format != "table_markdown" && format != "csv" && format != "plotdata" &&
      format != "all") {
    throw Error("invalid_config", "unknown report format: " + format);
  }
  RunState st = load_state(kCandidates | kRecords | kBaseline | kBudgets | kProbes | kPerturb);
  if (st.records.empty() && st.baseline.empty()) {
    throw Error("missing_records", "nothing to report; run pipeline or baseline first");
  }

  std::map<std::string, std::vector<SeedVerdict>> pruned_v;
  std::map<std::string, std::vector<SeedVerdict>> plain_v;
  for (const Question& q : questions_) {
    std::vector<TraceRecord> pr = records_for(st.records, q.id);
    if (!pr.empty()) pruned_v[q.id] = ranked_verdicts(std::move(pr));
    std::vector<TraceRecord> bl = records_for(st.baseline, q.id);
    if (!bl.empty()) plain_v[q.id] = seed_order_verdicts(std::move(bl));
  }

  const int n = cfg_.experiment.n_candidates;
  std::vector<CurvePoint> pruned_curve;
  std::vector<CurvePoint> plain_curve;
  for (int m : default_m_grid(n)) {
    if (!pruned_v.empty()) {
      CurvePoint pt = corpus_majority_point(pruned_v, by_id_, m, MajMode::PrefixTopK,
                                            cfg_.report_subset_draws);
      if (pt.questions > 0) pruned_curve.push_back(pt);
    }
    if (!plain_v.empty()) {
      CurvePoint pt = corpus_majority_point(plain_v, by_id_, m, MajMode::SubsetMean,
                                            cfg_.report_subset_draws);
      if (pt.questions > 0) plain_curve.push_back(pt);
    }
  }
  int marker = -1;
  double target = -1.0;
  if (!plain_curve.empty()) {
    target = plain_curve.back().accuracy;
  } else if (!pruned_curve.empty()) {
    target = pruned_curve.back().accuracy;
  }
  if (target >= 0.0 && !pruned_curve.empty()) {
    marker = smallest_matching_m(pruned_curve, target);
  }

  int64_t first_all = 0;
  int64_t cont_kept = 0;
  for (const auto& [qid, b] : st.budgets) {
    first_all += b.first_step_tokens_all_n;
    cont_kept += b.continuation_tokens_kept_m;
  }
  int64_t baseline_total = 0;
  for (const auto& [key, rec] : st.baseline) {
    baseline_total += rec.first_step_tokens + rec.continuation_tokens;
  }
  bool have_ratio = baseline_total > 0 && !st.budgets.empty();
  double ratio = have_ratio ? double(first_all + cont_kept) / double(baseline_total) : 0.0;

  std::map<std::string, int> buckets;
  const auto& src = plain_v.empty() ? pruned_v : plain_v;
  for (const auto& [qid, verdicts] : src) {
    buckets[bucket_to_string(difficulty_profile(qid, verdicts).bucket)]++;
  }

  std::map<std::pair<std::string, int>, std::pair<int, int>> perturb_table;
  for (const auto& [key, t] : st.perturb) {
    auto& cell = perturb_table[{perturb_variant_to_string(t.variant), t.delta}];
    ++cell.first;
    if (t.record.has_correct && t.record.correct) ++cell.second;
  }

  std::vector<bool> probe_first, probe_final;
  for (const auto& [key, pr] : st.probes) {
    probe_first.push_back(pr.first_correct);
    probe_final.push_back(pr.final_correct);
  }

  std::string md;
  md += "# Run report\n\n";
  md += "- run id: `" + run_id_ + "`\n";
  md += "- dataset: " + cfg_.dataset_path + " (" + std::to_string(questions_.size()) +
        " questions)\n";
  md += "- candidates N=" + std::to_string(n) + ", kept M=" +
        std::to_string(cfg_.experiment.keep_m) +
        ", first-step tokens L=" + std::to_string(cfg_.experiment.first_step_len) + "\n\n";
  md += "## Accuracy by kept candidates\n\n";
  md += render_accuracy_markdown(pruned_curve, plain_curve, marker);
  md += "\n## Token budget\n\n";
  md += "- first-step tokens (all N): " + std::to_string(first_all) + "\n";
  md += "- continuation tokens (kept M): " + std::to_string(cont_kept) + "\n";
  if (have_ratio) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", ratio);
    md += "- plain baseline tokens: " + std::to_string(baseline_total) + "\n";
    md += "- pruned/baseline token ratio: " + std::string(buf) + "\n";
  }
  if (!buckets.empty()) {
    md += "\n## Difficulty buckets\n\n";
    for (const auto& [name, count] : buckets) {
      md += "- " + name + ": " + std::to_string(count) + "\n";
    }
  }
  if (!perturb_table.empty()) {
    md += "\n## First-step perturbation trials\n\n";
    md += "| variant | delta | trials | accuracy |\n|---|---:|---:|---:|\n";
    for (const auto& [key, cell] : perturb_table) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f",
                    cell.first > 0 ? double(cell.second) / cell.first : 0.0);
      md += "| " + key.first + " | " + std::to_string(key.second) + " | " +
            std::to_string(cell.first) + " | " + buf + " |\n";
    }
  }
  if (probe_first.size() >= 3) {
    try {
      PhiResult phi = pearson_phi(probe_first, probe_final);
      char buf[96];
      std::snprintf(buf, sizeof(buf), "r=%.4f, permutation p=%.4f, %zu pairs", phi.r,
                    phi.p_value, probe_first.size());
      md += "\n## First-step probe correlation\n\n- " + std::string(buf) + "\n";
    } catch (const Error&) {
    }
  }

  if (format == "table_markdown" || format == "all") {
    write_text_file(paths_.report_md(), md);
    std::cout << "report: wrote " << paths_.report_md() << "\n";
  }
  if (format == "csv" || format == "all") {
    write_text_file(paths_.report_accuracy_csv(),
                    render_accuracy_csv(pruned_curve, plain_curve, marker));
    std::string bcsv = "first_step_tokens_all_n,continuation_tokens_kept_m,baseline_total_"
                       "tokens,ratio_vs_baseline\n";
    {
      char buf[160];
      if (have_ratio) {
        std::snprintf(buf, sizeof(buf), "%lld,%lld,%lld,%.6f\n",
                      static_cast<long long>(first_all), static_cast<long long>(cont_kept),
                      static_cast<long long>(baseline_total), ratio);
      } else {
        std::snprintf(buf, sizeof(buf), "%lld,%lld,,\n", static_cast<long long>(first_all),
                      static_cast<long long>(cont_kept));
      }
      bcsv += buf;
    }
    write_text_file(paths_.report_budget_csv(), bcsv);
    std::string pcsv = "variant,delta,trials,accuracy\n";
    for (const auto& [key, cell] : perturb_table) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.6f\n", key.first.c_str(), key.second,
                    cell.first, cell.first > 0 ? double(cell.second) / cell.first : 0.0);
      pcsv += buf;
    }
    write_text_file(paths_.report_perturb_csv(), pcsv);
    std::cout << "report: wrote " << paths_.report_accuracy_csv() << ", "
              << paths_.report_budget_csv() << ", " << paths_.report_perturb_csv() << "\n";
  }
  if (format == "plotdata" || format == "all") {
    Json plot;
    plot["run_id"] = run_id_;
    Json pc = Json::array();
    for (const CurvePoint& pt : pruned_curve) {
      pc.push_back({{"m", pt.m}, {"accuracy", pt.accuracy}, {"questions", pt.questions}});
    }
    Json plc = Json::array();
    for (const CurvePoint& pt : plain_curve) {
      plc.push_back({{"m", pt.m}, {"accuracy", pt.accuracy}, {"questions", pt.questions}});
    }
    plot["pruned"] = pc;
    plot["plain"] = plc;
    plot["marker_m"] = marker;
    plot["budget"] = {{"first_step_tokens_all_n", first_all},
                      {"continuation_tokens_kept_m", cont_kept}};
    if (have_ratio) {
      plot["budget"]["baseline_total_tokens"] = baseline_total;
      plot["budget"]["ratio_vs_baseline"] = ratio;
    }
    write_text_file(paths_.report_plotdata(), plot.dump(2) + "\n");
    std::cout << "report: wrote " << paths_.report_plotdata() << "\n";
  }
}

}  // namespace firststep
