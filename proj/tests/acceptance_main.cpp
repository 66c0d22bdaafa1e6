// Acceptance gate: ten end-to-end checks over the pruning pipeline, its
// aggregation math, and its operational guarantees. Each criterion prints
// exactly one PASS/FAIL line and enforces its own wall-time budget; the
// process exits nonzero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "firststep/aggregation.hpp"
#include "firststep/analysis.hpp"
#include "firststep/config.hpp"
#include "firststep/persistence.hpp"
#include "firststep/pruning.hpp"
#include "firststep/report.hpp"
#include "firststep/runner.hpp"
#include "firststep/segmentation.hpp"
#include "firststep/sim.hpp"
#include "firststep/util.hpp"

using namespace firststep;
namespace fs = std::filesystem;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("fsp-accept-" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_dataset(const fs::path& path, int count, uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  for (const Question& q : make_dataset(count, seed)) {
    Json j;
    j["answer"] = q.answer;
    j["answer_kind"] = answer_kind_to_string(q.answer_kind);
    j["benchmark_tag"] = q.benchmark_tag;
    j["id"] = q.id;
    j["prompt"] = q.prompt;
    out << j.dump() << "\n";
  }
}

std::map<std::string, std::vector<TraceRecord>> load_traces_by_question(const fs::path& path) {
  std::map<std::string, std::vector<TraceRecord>> out;
  JsonlLoadResult loaded = load_jsonl(path.string());
  require(loaded.quarantined == 0, "unexpected quarantined lines in " + path.string());
  std::map<std::pair<std::string, uint64_t>, TraceRecord> latest;
  for (const Json& j : loaded.lines) {
    TraceRecord r = trace_from_json(j);
    latest[{r.question_id, r.seed}] = r;
  }
  for (auto& [key, rec] : latest) out[key.first].push_back(rec);
  return out;
}

// Most frequent present value, ties to the smaller string; "" when all absent.
std::string majority_oracle(const std::vector<std::string>& canonicals) {
  std::map<std::string, int> counts;
  for (const std::string& c : canonicals) {
    if (!c.empty()) ++counts[c];
  }
  std::string best;
  int best_n = 0;
  for (const auto& [value, n] : counts) {
    if (n > best_n) {
      best = value;
      best_n = n;
    }
  }
  return best;
}

double subset_mean_oracle(const std::vector<SeedVerdict>& verdicts, const std::string& answer,
                          int k) {
  const int n = static_cast<int>(verdicts.size());
  std::vector<int> idx(static_cast<size_t>(k));
  double sum = 0.0;
  long count = 0;
  std::function<void(int, int)> rec = [&](int start, int chosen) {
    if (chosen == k) {
      std::vector<std::string> canon;
      for (int i : idx) {
        canon.push_back(verdicts[static_cast<size_t>(i)].prediction.present
                            ? verdicts[static_cast<size_t>(i)].prediction.canonical
                            : "");
      }
      std::string win = majority_oracle(canon);
      if (!win.empty() && win == answer) sum += 1.0;
      ++count;
      return;
    }
    for (int i = start; i <= n - (k - chosen); ++i) {
      idx[static_cast<size_t>(chosen)] = i;
      rec(i + 1, chosen + 1);
    }
  };
  rec(0, 0);
  return sum / static_cast<double>(count);
}

double pass_at_k_oracle(const std::vector<bool>& verdicts, int k) {
  const int n = static_cast<int>(verdicts.size());
  std::vector<int> idx(static_cast<size_t>(k));
  long hits = 0;
  long count = 0;
  std::function<void(int, int)> rec = [&](int start, int chosen) {
    if (chosen == k) {
      bool any = false;
      for (int i : idx) any = any || verdicts[static_cast<size_t>(i)];
      if (any) ++hits;
      ++count;
      return;
    }
    for (int i = start; i <= n - (k - chosen); ++i) {
      idx[static_cast<size_t>(chosen)] = i;
      rec(i + 1, chosen + 1);
    }
  };
  rec(0, 0);
  return static_cast<double>(hits) / static_cast<double>(count);
}

// Count of whole-token occurrences: neighbours on both sides must not be
// alphanumeric. Independent of the library's own matching helpers.
int standalone_count_oracle(const std::string& text, const std::string& token) {
  int count = 0;
  size_t pos = 0;
  while ((pos = text.find(token, pos)) != std::string::npos) {
    bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
    size_t end = pos + token.size();
    bool right_ok = end >= text.size() || !std::isalnum(static_cast<unsigned char>(text[end]));
    if (left_ok && right_ok) ++count;
    ++pos;
  }
  return count;
}

RunConfig sim_run_config(const fs::path& dataset, const fs::path& out_dir, int n, int m,
                         int first_step_len, int mean_total) {
  RunConfig cfg;
  cfg.experiment.n_candidates = n;
  cfg.experiment.keep_m = m;
  cfg.experiment.first_step_len = first_step_len;
  cfg.experiment.max_total_tokens = mean_total * 4;
  cfg.experiment.base_seed = 5;
  cfg.sim.mean_total_tokens = mean_total;
  cfg.sim.conclusion_tokens = 20;
  cfg.dataset_path = dataset.string();
  cfg.out_dir = out_dir.string();
  cfg.workers = 4;
  return cfg;
}

// --- criteria -------------------------------------------------------------

void criterion_budget_arithmetic() {
  std::vector<FirstStepCandidate> all(64);
  for (int i = 0; i < 64; ++i) {
    all[static_cast<size_t>(i)].question_id = "q0";
    all[static_cast<size_t>(i)].seed = static_cast<uint64_t>(i);
    all[static_cast<size_t>(i)].token_count = 512;
    all[static_cast<size_t>(i)].status =
        i < 16 ? CandidateStatus::Selected : CandidateStatus::Discarded;
  }
  std::vector<TraceRecord> kept(16);
  for (int i = 0; i < 16; ++i) {
    kept[static_cast<size_t>(i)].question_id = "q0";
    kept[static_cast<size_t>(i)].seed = static_cast<uint64_t>(i);
    kept[static_cast<size_t>(i)].first_step_tokens = 512;
    kept[static_cast<size_t>(i)].continuation_tokens = 12288;
  }
  std::vector<TraceRecord> baseline(64);
  for (int i = 0; i < 64; ++i) {
    baseline[static_cast<size_t>(i)].question_id = "q0";
    baseline[static_cast<size_t>(i)].seed = static_cast<uint64_t>(i);
    baseline[static_cast<size_t>(i)].continuation_tokens = 12800;
  }
  BudgetReport b = compute_budget("q0", all, kept, &baseline);
  require(b.first_step_tokens_all_n == 32768, "first-step token total mismatch");
  require(b.continuation_tokens_kept_m == 196608, "kept continuation token total mismatch");
  require(b.first_step_tokens_all_n + b.continuation_tokens_kept_m == 229376,
          "pruned numerator must be integer-exact 229376");
  require(b.has_baseline && b.baseline_total_tokens == 819200,
          "baseline denominator must be integer-exact 819200");
  require(b.has_ratio, "ratio must be populated when a baseline exists");
  require(std::abs(b.ratio_vs_baseline - 0.28) < 1e-12, "token ratio must equal 0.28");
}

void criterion_keep_all_identity() {
  fs::path dir = fresh_dir("keepall");
  fs::path dataset = dir / "qs.jsonl";
  write_dataset(dataset, 20, 21);

  RunConfig pruned_cfg = sim_run_config(dataset, dir / "pruned", 16, 16, 16, 120);
  Runner pruned(pruned_cfg);
  require(pruned.run("pipeline") == 0, "keep-all pipeline failed");
  RunConfig plain_cfg = sim_run_config(dataset, dir / "plain", 16, 16, 16, 120);
  Runner plain(plain_cfg);
  require(plain.run("baseline") == 0, "plain baseline failed");

  auto pruned_by_q = load_traces_by_question(pruned.paths().records());
  auto plain_by_q = load_traces_by_question(plain.paths().baseline_records());
  require(pruned_by_q.size() == 20 && plain_by_q.size() == 20,
          "both runs must cover all questions");
  for (const auto& [qid, recs] : pruned_by_q) {
    require(recs.size() == 16, "keep-all run must keep every candidate");
    auto it = plain_by_q.find(qid);
    require(it != plain_by_q.end() && it->second.size() == 16,
            "plain baseline must hold 16 traces for " + qid);
    std::vector<std::string> a, b;
    for (const TraceRecord& r : recs) a.push_back(r.prediction.canonical);
    for (const TraceRecord& r : it->second) b.push_back(r.prediction.canonical);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    require(a == b, "prediction multisets diverge on " + qid);
  }
  fs::remove_all(dir);
}

void criterion_selection_oracle() {
  std::mt19937_64 rng(303);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 1000);
    const int m = 1 + static_cast<int>(rng() % static_cast<uint64_t>(n));
    std::vector<FirstStepCandidate> cands(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      auto& c = cands[static_cast<size_t>(i)];
      c.question_id = "q";
      c.seed = static_cast<uint64_t>(i);
      c.has_reward = true;
      c.reward = 0.25 * static_cast<double>(rng() % 5);  // heavy ties
      c.status = CandidateStatus::Scored;
    }
    std::shuffle(cands.begin(), cands.end(), rng);

    std::vector<FirstStepCandidate> oracle = cands;
    std::sort(oracle.begin(), oracle.end(),
              [](const FirstStepCandidate& a, const FirstStepCandidate& b) {
                if (a.reward != b.reward) return a.reward > b.reward;
                return a.seed < b.seed;
              });

    auto [selected, discarded] = select_top_m(cands, m);
    require(static_cast<int>(selected.size()) == m, "selected size mismatch");
    require(static_cast<int>(discarded.size()) == n - m, "discarded size mismatch");
    for (int i = 0; i < m; ++i) {
      require(selected[static_cast<size_t>(i)].seed == oracle[static_cast<size_t>(i)].seed,
              "ranking order diverges from the sort oracle");
      require(selected[static_cast<size_t>(i)].status == CandidateStatus::Selected,
              "kept candidate not marked selected");
    }
    std::vector<uint64_t> dropped_seeds, oracle_dropped;
    for (const auto& c : discarded) {
      require(c.status == CandidateStatus::Discarded, "dropped candidate not marked discarded");
      dropped_seeds.push_back(c.seed);
    }
    for (int i = m; i < n; ++i) oracle_dropped.push_back(oracle[static_cast<size_t>(i)].seed);
    std::sort(dropped_seeds.begin(), dropped_seeds.end());
    std::sort(oracle_dropped.begin(), oracle_dropped.end());
    require(dropped_seeds == oracle_dropped, "discard set diverges from the sort oracle");
  }
}

void criterion_aggregation_oracles() {
  Question q;
  q.id = "q";
  q.answer = "1";
  q.answer_kind = AnswerKind::Integer;
  // Value alphabet per slot: correct "1", wrong "2", absent.
  const std::vector<std::string> alphabet = {"1", "2", ""};
  for (int n = 1; n <= 8; ++n) {
    long total = 1;
    for (int i = 0; i < n; ++i) total *= 3;
    for (long pattern = 0; pattern < total; ++pattern) {
      long p = pattern;
      std::vector<Prediction> preds;
      std::vector<SeedVerdict> verdicts;
      std::vector<std::string> canon;
      for (int i = 0; i < n; ++i) {
        const std::string& value = alphabet[static_cast<size_t>(p % 3)];
        p /= 3;
        Prediction pr;
        pr.present = !value.empty();
        pr.raw = value;
        pr.canonical = value;
        preds.push_back(pr);
        SeedVerdict v;
        v.seed = static_cast<uint64_t>(i);
        v.prediction = pr;
        v.correct = value == q.answer;
        verdicts.push_back(v);
        canon.push_back(value);
      }
      std::string want = majority_oracle(canon);
      Prediction got = majority_vote(preds);
      require(got.present == !want.empty(), "majority presence mismatch");
      if (got.present) require(got.canonical == want, "majority winner mismatch");
      for (int k = 1; k <= n; ++k) {
        double got_m = maj_at_k(verdicts, q, k, MajMode::SubsetMean, 300);
        double want_m = subset_mean_oracle(verdicts, q.answer, k);
        require(std::abs(got_m - want_m) < 1e-12, "subset-mean majority diverges from oracle");
      }
    }
  }

  for (int n = 1; n <= 8; ++n) {
    for (int c = 0; c <= n; ++c) {
      std::vector<bool> verdicts(static_cast<size_t>(n), false);
      for (int i = 0; i < c; ++i) verdicts[static_cast<size_t>(i)] = true;
      for (int k = 1; k <= n; ++k) {
        double got = pass_at_k(verdicts, k);
        double want = pass_at_k_oracle(verdicts, k);
        require(std::abs(got - want) < 1e-12, "pass@k diverges from enumeration oracle");
      }
    }
  }

  {
    std::vector<bool> verdicts(10, false);
    for (int i = 0; i < 3; ++i) verdicts[static_cast<size_t>(i)] = true;
    double closed = pass_at_k(verdicts, 4);
    std::mt19937_64 rng(404);
    std::vector<int> idx(10);
    std::iota(idx.begin(), idx.end(), 0);
    long hits = 0;
    const long draws = 100000;
    for (long d = 0; d < draws; ++d) {
      for (int j = 0; j < 4; ++j) {
        int swap_with = j + static_cast<int>(rng() % static_cast<uint64_t>(10 - j));
        std::swap(idx[static_cast<size_t>(j)], idx[static_cast<size_t>(swap_with)]);
      }
      bool any = false;
      for (int j = 0; j < 4; ++j) any = any || idx[static_cast<size_t>(j)] < 3;
      if (any) ++hits;
    }
    double mc = static_cast<double>(hits) / static_cast<double>(draws);
    require(std::abs(mc - closed) < 0.01, "pass@k disagrees with Monte Carlo beyond 0.01");
  }
}

void criterion_binary_correlation() {
  std::vector<bool> first, final;
  auto add = [&](int count, bool a, bool b) {
    for (int i = 0; i < count; ++i) {
      first.push_back(a);
      final.push_back(b);
    }
  };
  add(40, true, true);
  add(10, true, false);
  add(10, false, true);
  add(40, false, false);
  PhiResult phi = pearson_phi(first, final);
  const double closed = (40.0 * 40.0 - 10.0 * 10.0) / std::sqrt(50.0 * 50.0 * 50.0 * 50.0);
  require(std::abs(phi.r - closed) < 1e-12, "phi coefficient diverges from closed form");
  require(std::abs(phi.r - 0.6) < 1e-12, "phi coefficient must be exactly 0.6");
  require(phi.p_value < 0.001, "permutation p-value must be < 0.001");
}

void criterion_pruned_efficacy() {
  fs::path dir = fresh_dir("efficacy");
  fs::path dataset = dir / "qs.jsonl";
  write_dataset(dataset, 200, 66);
  RunConfig cfg = sim_run_config(dataset, dir / "run", 64, 16, 32, 352);
  Runner runner(cfg);
  require(runner.run("pipeline") == 0, "pipeline failed");
  require(runner.run("baseline") == 0, "baseline failed");

  auto pruned_by_q = load_traces_by_question(runner.paths().records());
  auto plain_by_q = load_traces_by_question(runner.paths().baseline_records());
  std::vector<double> pruned16, base64, plain16;
  for (const Question& q : runner.questions()) {
    auto pit = pruned_by_q.find(q.id);
    auto bit = plain_by_q.find(q.id);
    require(pit != pruned_by_q.end() && pit->second.size() == 16,
            "pruned run must keep 16 traces per question");
    require(bit != plain_by_q.end() && bit->second.size() == 64,
            "baseline must hold 64 traces per question");
    std::vector<SeedVerdict> ranked = ranked_verdicts(pit->second);
    std::vector<SeedVerdict> plain = seed_order_verdicts(bit->second);
    pruned16.push_back(maj_at_k(ranked, q, 16, MajMode::PrefixTopK));
    base64.push_back(maj_at_k(plain, q, 64, MajMode::PrefixTopK));
    plain16.push_back(maj_at_k(plain, q, 16, MajMode::PrefixTopK));
  }
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  const double acc_pruned = mean(pruned16);
  const double acc_base = mean(base64);
  const double acc_plain = mean(plain16);
  std::printf("  [info] maj accuracy: pruned16=%.4f base64=%.4f plain16=%.4f\n", acc_pruned,
              acc_base, acc_plain);
  require(std::abs(acc_pruned - acc_base) <= 0.02,
          "pruned accuracy must stay within 2 points of the full baseline");

  // Paired bootstrap over questions for pruned16 - plain16.
  const size_t nq = pruned16.size();
  std::vector<double> diffs(nq);
  for (size_t i = 0; i < nq; ++i) diffs[i] = pruned16[i] - plain16[i];
  std::mt19937_64 rng(606);
  const int resamples = 10000;
  std::vector<double> means(static_cast<size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    double sum = 0.0;
    for (size_t i = 0; i < nq; ++i) sum += diffs[rng() % nq];
    means[static_cast<size_t>(b)] = sum / static_cast<double>(nq);
  }
  std::sort(means.begin(), means.end());
  const double lower95 = means[249];  // 2.5th percentile of 10,000
  std::printf("  [info] pruned16-plain16 mean=%.4f bootstrap 2.5%%=%.4f\n", mean(diffs),
              lower95);
  require(lower95 >= 0.03,
          "pruned advantage over plain 16-sample voting must be >= 3 points at 95% confidence");

  JsonlLoadResult budgets = load_jsonl(runner.paths().budgets());
  int64_t spent = 0;
  for (const Json& j : budgets.lines) {
    BudgetReport b = budget_from_json(j);
    spent += b.first_step_tokens_all_n + b.continuation_tokens_kept_m;
  }
  int64_t baseline_total = 0;
  for (const auto& [qid, recs] : plain_by_q) {
    for (const TraceRecord& r : recs) baseline_total += r.first_step_tokens + r.continuation_tokens;
  }
  require(baseline_total > 0, "baseline token total missing");
  const double ratio = static_cast<double>(spent) / static_cast<double>(baseline_total);
  std::printf("  [info] token ratio %.4f (%lld / %lld)\n", ratio,
              static_cast<long long>(spent), static_cast<long long>(baseline_total));
  require(ratio < 0.35, "pruned run must spend under 35% of baseline tokens");
  fs::remove_all(dir);
}

void criterion_segmentation_and_resampling() {
  KeywordProfile profile{"custom", {"alternatively", "wait"}};
  const std::vector<std::string> fillers = {"foo", "bar",  "baz", "qux",
                                            "delta", "note", "grid", "oak"};
  const std::vector<std::string> keyword_forms = {"alternatively", "Alternatively",
                                                  "ALTERNATIVELY", "wait", "Wait", "WAIT"};
  const std::vector<std::string> seps = {" ", " ", ". ", ".\n", "! ", "? ", "\n", ", ", "; "};
  std::mt19937_64 rng(707);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string text = fillers[rng() % fillers.size()];  // never a keyword at byte 0
    const int words = 1 + static_cast<int>(rng() % 60);
    for (int w = 0; w < words; ++w) {
      text += seps[rng() % seps.size()];
      if (rng() % 5 == 0) {
        text += keyword_forms[rng() % keyword_forms.size()];
      } else {
        text += fillers[rng() % fillers.size()];
      }
    }
    StepSegmentation seg = segment_steps(text, profile);
    std::string joined;
    for (const std::string& s : seg.steps) joined += s;
    require(joined == text, "segmentation must be lossless");

    // Independent scan: whole-word keyword occurrences that are
    // sentence-initial (only spaces/tabs back to {.!?\n} or text start).
    std::string lower = lower_ascii(text);
    size_t qualifying = 0;
    for (const std::string& kw : profile.keywords) {
      size_t pos = 0;
      while ((pos = lower.find(kw, pos)) != std::string::npos) {
        size_t end = pos + kw.size();
        bool whole = (pos == 0 || !std::isalnum(static_cast<unsigned char>(lower[pos - 1]))) &&
                     (end >= lower.size() ||
                      !std::isalnum(static_cast<unsigned char>(lower[end])));
        if (whole && pos > 0) {
          size_t p = pos;
          while (p > 0 && (lower[p - 1] == ' ' || lower[p - 1] == '\t')) --p;
          if (p == 0 || lower[p - 1] == '.' || lower[p - 1] == '!' || lower[p - 1] == '?' ||
              lower[p - 1] == '\n') {
            ++qualifying;
          }
        }
        ++pos;
      }
    }
    require(seg.steps.size() == 1 + qualifying,
            "step count must equal 1 + qualifying keyword occurrences");
  }

  for (int trial = 0; trial < 1000; ++trial) {
    const int len = 1 + static_cast<int>(rng() % 40);
    std::vector<double> values(static_cast<size_t>(len));
    for (double& v : values) v = static_cast<double>(rng() % 20001) / 10000.0 - 1.0;
    std::vector<double> same = resample_linear(values, len);
    require(same == values, "identity resample must be exact");

    const int grid = 1 + static_cast<int>(rng() % 50);
    std::vector<double> out = resample_linear(values, grid);
    require(static_cast<int>(out.size()) == grid, "resample size mismatch");
    require(out.front() == values.front(), "resample must preserve the first value");
    if (grid >= 2 || len == 1) {
      require(out.back() == values.back(), "resample must preserve the last value");
    }
    const double lo = *std::min_element(values.begin(), values.end());
    const double hi = *std::max_element(values.begin(), values.end());
    for (double v : out) {
      require(v >= lo - 1e-12 && v <= hi + 1e-12, "linear resample left the value envelope");
    }
  }
}

void criterion_perturbation_construction() {
  Question q;
  q.id = "worked";
  q.answer = "113";
  q.answer_kind = AnswerKind::Integer;
  const std::string conclusion =
      "To find the requested total, note the first part contributes 89 and the second part "
      "contributes 24. Thus m + n = 113 by direct addition of the two parts. As a check, "
      "recomputing from the construction gives the same value. "
      "The final answer is \\boxed{113}.";

  PerturbedFirstStep baseline =
      build_perturbed_first_step(conclusion, q, PerturbVariant::CorrectBaseline, 0);
  require(baseline.text.find("\\boxed") == std::string::npos,
          "baseline variant must contain no \\boxed substring");
  require(standalone_count_oracle(baseline.text, "113") == 1,
          "baseline variant must keep the mid-text answer mention");

  PerturbedFirstStep corrupted =
      build_perturbed_first_step(conclusion, q, PerturbVariant::Incorrect, -10);
  require(corrupted.text.find("m + n = 103") != std::string::npos,
          "delta -10 must rewrite the answer mention to 103");
  require(standalone_count_oracle(corrupted.text, "113") == 0,
          "corrupted variant must not retain the original value");
  require(standalone_count_oracle(corrupted.text, "103") == 1,
          "corrupted variant must contain exactly one rewritten value");

  Question q2;
  q2.id = "sites";
  q2.answer = "421";
  q2.answer_kind = AnswerKind::Integer;
  const std::vector<std::string> fillers = {
      "The intermediate expression simplifies cleanly. ",
      "Each term of the sum telescopes as expected. ",
      "No further casework is required at this point. ",
      "The bound established earlier still applies. "};
  std::mt19937_64 rng(808);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 4);
    std::string text;
    for (int i = 0; i < k; ++i) {
      text += fillers[rng() % fillers.size()];
      text += "The value stays 421 when case " + std::string(1, char('a' + i)) + " holds. ";
    }
    // Trailing digit-free padding keeps every mention out of the final 20%.
    for (int i = 0; i < 4; ++i) text += fillers[i % fillers.size()];
    text += "Therefore the final answer is \\boxed{421}.";

    PerturbedFirstStep wrong = build_perturbed_first_step(text, q2, PerturbVariant::Incorrect, 1);
    require(standalone_count_oracle(wrong.text, "422") == k,
            "replacement-site count diverges from the scan oracle");
    require(standalone_count_oracle(wrong.text, "421") == 0,
            "no original value may survive corruption");
  }
}

void criterion_worker_determinism() {
  fs::path dir = fresh_dir("workers");
  fs::path dataset = dir / "qs.jsonl";
  write_dataset(dataset, 24, 99);
  std::vector<int> worker_counts = {1, 4, 16};
  std::vector<std::string> cand_bytes, rec_bytes, budget_bytes;
  for (int workers : worker_counts) {
    RunConfig cfg = sim_run_config(dataset, dir / ("w" + std::to_string(workers)), 8, 3, 16, 120);
    cfg.workers = workers;
    Runner runner(cfg);
    require(runner.run("pipeline") == 0, "pipeline failed under worker count " +
                                             std::to_string(workers));
    cand_bytes.push_back(read_all(runner.paths().candidates()));
    rec_bytes.push_back(read_all(runner.paths().records()));
    budget_bytes.push_back(read_all(runner.paths().budgets()));
  }
  for (size_t i = 1; i < worker_counts.size(); ++i) {
    require(cand_bytes[i] == cand_bytes[0], "candidate file bytes differ across worker counts");
    require(rec_bytes[i] == rec_bytes[0], "record file bytes differ across worker counts");
    require(budget_bytes[i] == budget_bytes[0], "budget file bytes differ across worker counts");
  }
  require(!rec_bytes[0].empty(), "pipeline produced no records");
  fs::remove_all(dir);
}

void criterion_resume_without_duplicates() {
  fs::path dir = fresh_dir("resume");
  fs::path dataset = dir / "qs.jsonl";
  write_dataset(dataset, 12, 1010);

  RunConfig interrupted = sim_run_config(dataset, dir / "interrupted", 8, 3, 16, 120);
  {
    Runner sampler(interrupted);
    require(sampler.run("sample") == 0, "sample phase failed");
    require(sampler.sim_generation_calls() == 12 * 8, "sample phase call count unexpected");
    Runner scorer(interrupted);
    require(scorer.run("score") == 0, "score phase failed");
    require(scorer.sim_generation_calls() == 0, "scoring must not generate");
  }
  // The "killed" run restarts here: only the continuations are missing.
  Runner finisher(interrupted);
  require(finisher.run("pipeline") == 0, "resumed pipeline failed");
  require(finisher.sim_generation_calls() == 12 * 3,
          "resumed pipeline repeated generation work");

  RunConfig uninterrupted = sim_run_config(dataset, dir / "clean", 8, 3, 16, 120);
  Runner clean(uninterrupted);
  require(clean.run("pipeline") == 0, "uninterrupted pipeline failed");
  require(read_all(finisher.paths().records()) == read_all(clean.paths().records()),
          "resumed records diverge from the uninterrupted run");
  require(read_all(finisher.paths().budgets()) == read_all(clean.paths().budgets()),
          "resumed budgets diverge from the uninterrupted run");

  Runner idle(interrupted);
  require(idle.run("pipeline") == 0, "idempotent rerun failed");
  require(idle.sim_generation_calls() == 0, "idempotent rerun made generation calls");
  fs::remove_all(dir);
}

struct CriterionSpec {
  int number;
  std::string label;
  double budget_seconds;
  std::function<void()> body;
};

}  // namespace

int main() {
  const std::vector<CriterionSpec> criteria = {
      {1, "kept-token ratio arithmetic is integer-exact (229376/819200 = 0.28)", 1.0,
       criterion_budget_arithmetic},
      {2, "keep-all pruning reproduces the plain baseline's prediction multisets", 5.0,
       criterion_keep_all_identity},
      {3, "top-m selection matches a full-sort oracle on 1,000 tied score vectors", 5.0,
       criterion_selection_oracle},
      {4, "vote aggregation and pass@k match exhaustive enumeration (n <= 8) and Monte Carlo",
       30.0, criterion_aggregation_oracles},
      {5, "binary correlation on a (40,10,10,40) table is exactly 0.6 with p < 0.001", 10.0,
       criterion_binary_correlation},
      {6, "pruned 16-of-64 voting holds baseline accuracy at under 35% of the tokens", 60.0,
       criterion_pruned_efficacy},
      {7, "segmentation is lossless with oracle step counts; resampling is exact at endpoints",
       10.0, criterion_segmentation_and_resampling},
      {8, "conclusion perturbation strips boxed answers and rewrites every mention site", 5.0,
       criterion_perturbation_construction},
      {9, "pipeline output bytes are identical across 1, 4, and 16 workers", 60.0,
       criterion_worker_determinism},
      {10, "a run killed after scoring resumes with zero duplicate generation calls", 30.0,
       criterion_resume_without_duplicates},
  };

  int failures = 0;
  for (const CriterionSpec& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    std::string failure;
    try {
      c.body();
    } catch (const std::exception& e) {
      failure = e.what();
    } catch (...) {
      failure = "unknown exception";
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (failure.empty() && secs > c.budget_seconds) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "runtime %.2fs exceeded the %.0fs budget", secs,
                    c.budget_seconds);
      failure = buf;
    }
    if (failure.empty()) {
      std::printf("PASS criterion %d: %s (%.2fs)\n", c.number, c.label.c_str(), secs);
    } else {
      std::printf("FAIL criterion %d: %s (%.2fs) — %s\n", c.number, c.label.c_str(), secs,
                  failure.c_str());
      ++failures;
    }
    std::fflush(stdout);
  }
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
