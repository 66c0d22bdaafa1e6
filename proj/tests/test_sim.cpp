#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "firststep/error.hpp"
#include "firststep/sim.hpp"
#include "firststep/util.hpp"

using namespace firststep;

namespace {

Question make_question(const std::string& id = "q1", const std::string& answer = "421") {
  Question q;
  q.id = id;
  q.prompt = "Find the value for " + id + ".";
  q.answer = answer;
  q.answer_kind = AnswerKind::Integer;
  return q;
}

SimProfile small_profile() {
  SimProfile p;
  p.mean_total_tokens = 120;
  p.conclusion_tokens = 20;
  return p;
}

GenerationRequest request_for(const Question& q, uint64_t seed, const std::string& prefix,
                              int max_tokens) {
  GenerationRequest req;
  req.prompt = ChatTemplate{}.render(q.prompt);
  req.prefix = prefix;
  req.params.seed = seed;
  req.params.max_tokens = max_tokens;
  return req;
}

}  // namespace

TEST_CASE("profile validation") {
  CHECK_NOTHROW(validate_profile(SimProfile{}));
  SimProfile p;
  p.p_good_first = 1.5;
  CHECK_THROWS_AS(validate_profile(p), Error);
  p = SimProfile{};
  p.p_correct_prefix_with_answer = -0.1;
  CHECK_THROWS_AS(validate_profile(p), Error);
  p = SimProfile{};
  p.conclusion_tokens = 11;
  CHECK_THROWS_AS(validate_profile(p), Error);
  p = SimProfile{};
  p.mean_total_tokens = p.conclusion_tokens + 15;
  CHECK_THROWS_AS(validate_profile(p), Error);
  p = SimProfile{};
  p.wrong_answer_pool = 0;
  CHECK_THROWS_AS(validate_profile(p), Error);
}

TEST_CASE("traces are deterministic and split losslessly at any length") {
  SimProfile p = small_profile();
  Question q = make_question();

  SimTrace a = simulate_trace(p, q, 5, 16);
  SimTrace b = simulate_trace(p, q, 5, 16);
  CHECK(a.first_step == b.first_step);
  CHECK(a.continuation == b.continuation);
  CHECK(a.final_correct == b.final_correct);
  CHECK(a.first_step_quality == b.first_step_quality);
  CHECK(a.first_step_tokens == 16);
  CHECK(a.total_tokens == p.mean_total_tokens);

  // The cut point never changes the bytes, only where the seam is.
  std::string whole = a.first_step + a.continuation;
  for (int len : {1, 7, 40, 119, 120, 500}) {
    SimTrace t = simulate_trace(p, q, 5, len);
    CHECK(t.first_step + t.continuation == whole);
    CHECK(t.first_step_tokens == std::min(len, p.mean_total_tokens));
    CHECK(t.first_step_tokens + t.continuation_tokens == t.total_tokens);
  }

  SimTrace other_seed = simulate_trace(p, q, 6, 16);
  CHECK(other_seed.first_step != a.first_step);
  SimTrace other_q = simulate_trace(p, make_question("q2"), 5, 16);
  CHECK(other_q.first_step != a.first_step);

  CHECK_THROWS_AS(simulate_trace(p, q, 5, 0), Error);
}

TEST_CASE("trace structure: marker, early commitment, close marker, boxed tail") {
  SimProfile p = small_profile();
  Question q = make_question();
  int correct_seen = 0;
  for (uint64_t seed = 0; seed < 40; ++seed) {
    SimTrace t = simulate_trace(p, q, seed, 16);
    std::string whole = t.first_step + t.continuation;
    CHECK(t.first_step.rfind("@sim/", 0) == 0);
    CHECK(whole.find("</think>") != std::string::npos);
    std::string expect = t.final_correct ? q.answer : "";
    if (t.final_correct) {
      ++correct_seen;
      // Committed at token 7, well inside a 16-token first step.
      CHECK(contains_standalone(t.first_step, q.answer));
      CHECK(whole.find("\\boxed{" + q.answer + "}.") != std::string::npos);
    } else {
      CHECK_FALSE(contains_standalone(t.first_step, q.answer));
      CHECK(whole.find("\\boxed{" + q.answer + "}") == std::string::npos);
    }
    // Quality band encodes the good/bad flag disjointly.
    CHECK((t.first_step_quality < 0.4 || t.first_step_quality >= 0.6));
  }
  CHECK(correct_seen > 5);
  CHECK(correct_seen < 40);
}

TEST_CASE("sim reward recovers the first-step quality exactly") {
  SimProfile p = small_profile();
  Question q = make_question();
  SimRewardBackend reward(p);
  for (uint64_t seed = 0; seed < 25; ++seed) {
    SimTrace t = simulate_trace(p, q, seed, 24);
    RewardScore score = score_first_step(reward, q.prompt, t.first_step);
    CHECK(score.value == doctest::Approx(t.first_step_quality).epsilon(1e-12));
    CHECK(score.scorer_id == "sim-reward");
  }
  // Markerless text scores neutral 0.5 for every step.
  auto scores = reward.score_steps("p", {"no marker here", "still none"});
  CHECK(scores == std::vector<double>{0.5, 0.5});
}

TEST_CASE("generate: fresh sampling and exact resumption") {
  SimProfile p = small_profile();
  Question q = make_question();
  SimGenerationBackend gen(p, {q});
  SimTrace t = simulate_trace(p, q, 3, 16);

  GenerationResult first = gen.generate(request_for(q, 3, "", 16));
  CHECK(first.text == t.first_step);
  CHECK(first.finish_reason == FinishReason::LengthCap);
  CHECK(first.usage_completion_tokens == 16);
  CHECK(first.usage_source == UsageSource::BackendReported);

  GenerationResult rest = gen.generate(request_for(q, 3, t.first_step, p.mean_total_tokens * 2));
  CHECK(rest.text == t.continuation);
  CHECK(rest.finish_reason == FinishReason::StopToken);
  CHECK(rest.usage_completion_tokens == t.continuation_tokens);
  CHECK(first.text + rest.text == t.first_step + t.continuation);

  // Short cap on the resumed call still makes byte progress from the seam.
  GenerationResult chunk = gen.generate(request_for(q, 3, t.first_step, 8));
  CHECK(chunk.finish_reason == FinishReason::LengthCap);
  CHECK(t.continuation.rfind(chunk.text, 0) == 0);

  CHECK(gen.calls() == 3);
  GenerationRequest bad = request_for(q, 3, "", 16);
  bad.prompt = "not a rendered question";
  CHECK_THROWS_WITH_AS(gen.generate(bad), "unknown_prompt: prompt is not in the sim dataset",
                       Error);
}

TEST_CASE("generate: own first-step probe matches the quality flag") {
  SimProfile p = small_profile();
  Question q = make_question();
  SimGenerationBackend gen(p, {q});
  int good_correct = 0, good_total = 0, bad_correct = 0, bad_total = 0;
  for (uint64_t seed = 0; seed < 40; ++seed) {
    SimTrace t = simulate_trace(p, q, seed, 16);
    std::string prefix = t.first_step + "\n</think>";
    GenerationResult out = gen.generate(request_for(q, seed, prefix, p.mean_total_tokens));
    bool mentions_answer = contains_standalone(out.text, q.answer);
    bool good = t.first_step_quality >= 0.6;
    (good ? good_total : bad_total) += 1;
    (good ? good_correct : bad_correct) += mentions_answer ? 1 : 0;
    // Good first steps conclude with the right value every time; bad ones never do.
    CHECK(mentions_answer == good);
    CHECK(out.text.find("The computed value equals") != std::string::npos);
    CHECK(out.text.find("</think>") == std::string::npos);
  }
  CHECK(good_total > 5);
  CHECK(bad_total > 5);
  CHECK(good_correct == good_total);
  CHECK(bad_correct == 0);
}

TEST_CASE("generate: foreign prefixes gate correctness on answer retention") {
  SimProfile p = small_profile();
  Question q = make_question();
  SimGenerationBackend gen(p, {q});
  std::string with_answer = "we believe the target 421 appears because the sum equals 421 here";
  std::string without_answer = "we believe the target shifted because the sum moved somewhere else";
  int with_correct = 0, without_correct = 0;
  const int trials = 200;
  for (uint64_t seed = 0; seed < trials; ++seed) {
    GenerationResult a = gen.generate(request_for(q, seed, with_answer, p.mean_total_tokens * 2));
    GenerationResult b =
        gen.generate(request_for(q, seed, without_answer, p.mean_total_tokens * 2));
    // Deterministic per (question, seed, prefix).
    GenerationResult a2 = gen.generate(request_for(q, seed, with_answer, p.mean_total_tokens * 2));
    CHECK(a.text == a2.text);
    with_correct += a.text.find("\\boxed{" + q.answer + "}") != std::string::npos;
    without_correct += b.text.find("\\boxed{" + q.answer + "}") != std::string::npos;
  }
  // 0.95 vs 0.3 base rates over 200 seeds leave a wide gap.
  CHECK(with_correct > 170);
  CHECK(without_correct < 90);
  CHECK(with_correct > without_correct + 50);
}

TEST_CASE("generate: foreign resumption point tracks the prefix word count") {
  SimProfile p = small_profile();
  Question q = make_question();
  SimGenerationBackend gen(p, {q});
  // Three words resume at token 3; the text must complete a full trace tail
  // including the close marker and a boxed answer.
  GenerationResult out = gen.generate(request_for(q, 11, "one two three", p.mean_total_tokens * 2));
  CHECK(out.text.find("</think>") != std::string::npos);
  CHECK(out.text.find("\\boxed{") != std::string::npos);
  CHECK(out.usage_completion_tokens == p.mean_total_tokens - 3);
}

TEST_CASE("embedding backend is a deterministic unit-norm bag of words") {
  SimEmbeddingBackend emb;
  auto out = emb.embed({"solve the equation", "solve the equation", "different words entirely",
                        "", "!!! ???"});
  REQUIRE(out.size() == 5);
  for (const auto& v : out) CHECK(v.size() == SimEmbeddingBackend::kDim);
  CHECK(out[0] == out[1]);
  CHECK(out[0] != out[2]);
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  CHECK(norm(out[0]) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(norm(out[3]) == 0.0);  // empty text
  CHECK(norm(out[4]) == 0.0);  // no alphanumeric content
  // Case folding: tokens differ only in case, vectors agree.
  auto folded = emb.embed({"Solve THE Equation"});
  CHECK(folded[0] == out[0]);
}
