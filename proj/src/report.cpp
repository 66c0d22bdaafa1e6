#include "firststep/report.hpp"

#include <algorithm>
#include <cstdio>

namespace firststep {

std::vector<int> default_m_grid(int n) {
  std::vector<int> grid;
  for (int m = 1; m <= n; m *= 2) grid.push_back(m);
  if (grid.empty() || grid.back() != n) grid.push_back(n);
  return grid;
}

namespace {

SeedVerdict to_verdict(const TraceRecord& rec) {
  SeedVerdict v;
  v.seed = rec.seed;
  v.prediction = rec.prediction;
  v.correct = rec.has_correct && rec.correct;
  return v;
}

}  // namespace

std::vector<SeedVerdict> ranked_verdicts(std::vector<TraceRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const TraceRecord& a, const TraceRecord& b) {
                     if (a.has_reward != b.has_reward) return a.has_reward;
                     if (a.has_reward && a.reward != b.reward) return a.reward > b.reward;
                     return a.seed < b.seed;
                   });
  std::vector<SeedVerdict> out;
  out.reserve(records.size());
  for (const TraceRecord& rec : records) out.push_back(to_verdict(rec));
  return out;
}

std::vector<SeedVerdict> seed_order_verdicts(std::vector<TraceRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const TraceRecord& a, const TraceRecord& b) { return a.seed < b.seed; });
  std::vector<SeedVerdict> out;
  out.reserve(records.size());
  for (const TraceRecord& rec : records) out.push_back(to_verdict(rec));
  return out;
}

CurvePoint corpus_majority_point(
    const std::map<std::string, std::vector<SeedVerdict>>& per_question,
    const std::map<std::string, Question>& questions, int m, MajMode mode,
    int subset_draws) {
  CurvePoint pt;
  pt.m = m;
  double sum = 0.0;
  for (const auto& [qid, verdicts] : per_question) {
    auto qit = questions.find(qid);
    if (qit == questions.end()) continue;
    if (static_cast<int>(verdicts.size()) < m) continue;
    sum += maj_at_k(verdicts, qit->second, m, mode, subset_draws);
    ++pt.questions;
  }
  pt.accuracy = pt.questions > 0 ? sum / pt.questions : 0.0;
  return pt;
}

int smallest_matching_m(const std::vector<CurvePoint>& curve, double target, double eps) {
  int best = -1;
  for (const CurvePoint& pt : curve) {
    if (pt.accuracy >= target - eps && (best < 0 || pt.m < best)) best = pt.m;
  }
  return best;
}

namespace {

std::string fmt_acc(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

const CurvePoint* find_point(const std::vector<CurvePoint>& curve, int m) {
  for (const CurvePoint& pt : curve) {
    if (pt.m == m) return &pt;
  }
  return nullptr;
}

std::vector<int> merged_ms(const std::vector<CurvePoint>& a, const std::vector<CurvePoint>& b) {
  std::vector<int> ms;
  for (const CurvePoint& pt : a) ms.push_back(pt.m);
  for (const CurvePoint& pt : b) ms.push_back(pt.m);
  std::sort(ms.begin(), ms.end());
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
  return ms;
}

}  // namespace

std::string render_accuracy_markdown(const std::vector<CurvePoint>& pruned,
                                     const std::vector<CurvePoint>& plain,
                                     int marker_m) {
  std::string out;
  out += "| kept M | pruned maj@M | plain maj@M |\n";
  out += "|---:|---:|---:|\n";
  for (int m : merged_ms(pruned, plain)) {
    const CurvePoint* pp = find_point(pruned, m);
    const CurvePoint* pl = find_point(plain, m);
    out += "| " + std::to_string(m);
    if (m == marker_m) out += " *";
    out += " | " + (pp != nullptr ? fmt_acc(pp->accuracy) : std::string("-"));
    out += " | " + (pl != nullptr ? fmt_acc(pl->accuracy) : std::string("-"));
    out += " |\n";
  }
  if (marker_m >= 0) {
    out += "\n`*` smallest M whose pruned accuracy matches the full-sample accuracy.\n";
  }
  return out;
}

std::string render_accuracy_csv(const std::vector<CurvePoint>& pruned,
                                const std::vector<CurvePoint>& plain,
                                int marker_m) {
  std::string out =
      "m,pruned_accuracy,pruned_questions,plain_accuracy,plain_questions,marker\n";
  for (int m : merged_ms(pruned, plain)) {
    const CurvePoint* pp = find_point(pruned, m);
    const CurvePoint* pl = find_point(plain, m);
    out += std::to_string(m) + ",";
    out += (pp != nullptr ? fmt_acc(pp->accuracy) : std::string()) + ",";
    out += (pp != nullptr ? std::to_string(pp->questions) : std::string()) + ",";
    out += (pl != nullptr ? fmt_acc(pl->accuracy) : std::string()) + ",";
    out += (pl != nullptr ? std::to_string(pl->questions) : std::string()) + ",";
    out += (m == marker_m ? "1" : "0");
    out += "\n";
  }
  return out;
}

}  // namespace firststep
