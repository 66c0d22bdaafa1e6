#include "firststep/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "firststep/error.hpp"
#include "firststep/util.hpp"

namespace firststep {

namespace {
constexpr uint64_t kSubsetSeed = 0x00c0ffee5eedULL;
constexpr uint64_t kPhiSeed = 0x9e3779b97f4a7c15ULL;
}  // namespace

std::string bucket_to_string(Bucket b) {
  switch (b) {
    case Bucket::Hard: return "hard";
    case Bucket::Medium: return "medium";
    case Bucket::Easy: return "easy";
    case Bucket::DegenerateAllWrong: return "degenerate_all_wrong";
    case Bucket::DegenerateAllRight: return "degenerate_all_right";
  }
  return "hard";
}

Prediction majority_vote(const std::vector<Prediction>& predictions) {
  if (predictions.empty()) throw Error("empty_input", "majority_vote needs at least one prediction");
  std::map<std::string, int> counts;  // ordered: first max hit is lexicographic winner
  for (const auto& p : predictions)
    if (p.present) ++counts[p.canonical];
  Prediction out;
  int best = 0;
  for (const auto& [value, count] : counts) {
    if (count > best) {
      best = count;
      out.present = true;
      out.raw = value;
      out.canonical = value;
    }
  }
  return out;
}

static bool vote_correct(const std::vector<SeedVerdict>& records, const std::vector<int>& idx,
                         const Question& q) {
  std::vector<Prediction> preds;
  preds.reserve(idx.size());
  for (int i : idx) preds.push_back(records[static_cast<size_t>(i)].prediction);
  Prediction vote = majority_vote(preds);
  return vote.present && vote.canonical == q.answer;
}

static double binom_capped(int n, int k, double cap) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) {
    r *= static_cast<double>(n - i) / static_cast<double>(i + 1);
    if (r > cap) return cap + 1.0;
  }
  return r;
}

double maj_at_k(const std::vector<SeedVerdict>& designated, const Question& q, int k,
                MajMode mode, int subset_draws) {
  if (q.answer_kind == AnswerKind::ExternalVerdict)
    throw Error("kind_mismatch", "majority voting needs locally comparable answers");
  const int n = static_cast<int>(designated.size());
  if (k < 1 || k > n)
    throw Error("insufficient_records", "K=" + std::to_string(k) + " with n=" + std::to_string(n));
  if (mode == MajMode::PrefixTopK) {
    std::vector<int> idx(static_cast<size_t>(k));
    std::iota(idx.begin(), idx.end(), 0);
    return vote_correct(designated, idx, q) ? 1.0 : 0.0;
  }
  double total = binom_capped(n, k, static_cast<double>(subset_draws));
  if (total <= static_cast<double>(subset_draws)) {
    // Exhaustive: walk all C(n,k) index combinations in lexicographic order.
    std::vector<int> idx(static_cast<size_t>(k));
    std::iota(idx.begin(), idx.end(), 0);
    double sum = 0.0;
    int combos = 0;
    while (true) {
      sum += vote_correct(designated, idx, q) ? 1.0 : 0.0;
      ++combos;
      int i = k - 1;
      while (i >= 0 && idx[static_cast<size_t>(i)] == n - k + i) --i;
      if (i < 0) break;
      ++idx[static_cast<size_t>(i)];
      for (int j = i + 1; j < k; ++j)
        idx[static_cast<size_t>(j)] = idx[static_cast<size_t>(j - 1)] + 1;
    }
    return sum / combos;
  }
  std::mt19937_64 rng(kSubsetSeed ^ fnv1a64(q.id));
  std::vector<int> pool(static_cast<size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  double sum = 0.0;
  for (int draw = 0; draw < subset_draws; ++draw) {
    for (int i = 0; i < k; ++i) {
      size_t j = static_cast<size_t>(i) + rng() % static_cast<uint64_t>(n - i);
      std::swap(pool[static_cast<size_t>(i)], pool[j]);
    }
    std::vector<int> idx(pool.begin(), pool.begin() + k);
    sum += vote_correct(designated, idx, q) ? 1.0 : 0.0;
  }
  return sum / subset_draws;
}

double pass_at_k(const std::vector<bool>& verdicts, int k) {
  const int n = static_cast<int>(verdicts.size());
  if (k < 1 || k > n)
    throw Error("k_out_of_range", "k=" + std::to_string(k) + " with n=" + std::to_string(n));
  const int c = static_cast<int>(std::count(verdicts.begin(), verdicts.end(), true));
  if (n - c < k) return 1.0;
  double prod = 1.0;
  for (int i = 0; i < k; ++i)
    prod *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  return 1.0 - prod;
}

static double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  double num = n * sxy - sx * sy;
  double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  return num / den;
}

PhiResult pearson_phi(const std::vector<bool>& first_correct,
                      const std::vector<bool>& final_correct) {
  if (first_correct.size() != final_correct.size())
    throw Error("length_mismatch", "correctness lists differ in length");
  const size_t n = first_correct.size();
  if (n < 3) throw Error("constant_input", "need at least 3 paired observations");
  auto constant = [](const std::vector<bool>& v) {
    return std::all_of(v.begin(), v.end(), [&](bool b) { return b == v.front(); });
  };
  if (constant(first_correct) || constant(final_correct))
    throw Error("constant_input", "correlation undefined for a constant list");
  std::vector<double> x(n), y(n);
  for (size_t i = 0; i < n; ++i) {
    x[i] = first_correct[i] ? 1.0 : 0.0;
    y[i] = final_correct[i] ? 1.0 : 0.0;
  }
  PhiResult out;
  out.r = pearson_r(x, y);
  constexpr int kPerms = 10000;
  std::mt19937_64 rng(kPhiSeed);
  std::vector<double> shuffled = y;
  int at_least = 0;
  const double threshold = std::abs(out.r) - 1e-12;
  for (int p = 0; p < kPerms; ++p) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (std::abs(pearson_r(x, shuffled)) >= threshold) ++at_least;
  }
  out.p_value = static_cast<double>(at_least + 1) / static_cast<double>(kPerms + 1);
  return out;
}

QuestionOutcome difficulty_profile(const std::string& question_id,
                                   const std::vector<SeedVerdict>& records) {
  QuestionOutcome out;
  out.question_id = question_id;
  out.predictions = records;
  const int64_t n = static_cast<int64_t>(records.size());
  if (n == 0) return out;
  int64_t c = 0;
  for (const auto& r : records)
    if (r.correct) ++c;
  out.pass_at_1 = static_cast<double>(c) / static_cast<double>(n);
  if (c == 0) out.bucket = Bucket::DegenerateAllWrong;
  else if (c == n) out.bucket = Bucket::DegenerateAllRight;
  else if (100 * c <= 33 * n) out.bucket = Bucket::Hard;   // (0, 33%]
  else if (100 * c <= 67 * n) out.bucket = Bucket::Medium; // (33%, 67%]
  else out.bucket = Bucket::Easy;                          // (67%, 100%)
  return out;
}

}  // namespace firststep
