#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <string>

#include "firststep/config.hpp"
#include "firststep/error.hpp"
#include "firststep/persistence.hpp"
#include "firststep/runner.hpp"

using namespace firststep;

int main(int argc, char** argv) {
  CLI::App app{"Sample-score-prune-continue pipeline for parallel reasoning runs"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string dataset_path;
  std::string backend;
  std::string out_dir;
  int n = 0;
  int m = 0;
  int first_step_len = 0;
  int workers = 0;
  long long seed = 0;
  bool resume = true;

  auto* opt_config = app.add_option("--config", config_path, "JSON config file");
  auto* opt_dataset = app.add_option("--dataset", dataset_path, "dataset JSONL path");
  auto* opt_n = app.add_option("--n", n, "candidate first steps per question");
  auto* opt_m = app.add_option("--m", m, "candidates kept after pruning");
  auto* opt_fsl =
      app.add_option("--first-step-len", first_step_len, "tokens per candidate first step");
  auto* opt_backend =
      app.add_option("--backend", backend, "backend kind: sim or http")
          ->check(CLI::IsMember({"sim", "http"}));
  auto* opt_out = app.add_option("--out-dir", out_dir, "run output directory");
  auto* opt_resume = app.add_flag("--resume,!--no-resume", resume,
                                  "reuse existing outputs (default) / start fresh");
  auto* opt_seed = app.add_option("--seed", seed, "base seed for derived per-candidate seeds")
                       ->check(CLI::NonNegativeNumber);
  auto* opt_workers = app.add_option("--workers", workers, "question-level worker threads")
                          ->check(CLI::PositiveNumber);

  for (const char* name : {"sample", "score", "prune", "continue", "pipeline", "baseline",
                           "probe-first-step", "similarity", "perturb", "keyword-freq"}) {
    app.add_subcommand(name);
  }
  app.get_subcommand("sample")->description("generate candidate first steps");
  app.get_subcommand("score")->description("score sampled first steps with the reward model");
  app.get_subcommand("prune")->description("keep the top-M candidates by reward");
  app.get_subcommand("continue")->description("continue kept candidates to conclusions");
  app.get_subcommand("pipeline")->description("sample, score, prune and continue in one pass");
  app.get_subcommand("baseline")->description("plain N full traces, no pruning");
  app.get_subcommand("probe-first-step")
      ->description("force a conclusion right after each trace's first step");
  app.get_subcommand("similarity")
      ->description("per-step embedding similarity to the final conclusion");
  app.get_subcommand("perturb")->description("re-run continuations from perturbed first steps");
  app.get_subcommand("keyword-freq")->description("trigger keyword statistics over traces");

  std::string report_format = "table_markdown";
  app.add_subcommand("report", "aggregate record files into tables")
      ->add_option("--format", report_format, "table_markdown, csv, plotdata or all")
      ->check(CLI::IsMember({"table_markdown", "csv", "plotdata", "all"}));

  int make_count = 100;
  long long make_seed = 7;
  std::string make_out;
  auto* make = app.add_subcommand("make-dataset", "write a deterministic synthetic dataset");
  make->add_option("--count", make_count, "number of questions")->check(CLI::PositiveNumber);
  make->add_option("--dataset-seed", make_seed, "generator seed")->check(CLI::NonNegativeNumber);
  make->add_option("--out", make_out, "output JSONL path")->required();

  CLI11_PARSE(app, argc, argv);
  const std::string sub = app.get_subcommands().front()->get_name();
  std::string effective_out_dir = out_dir;

  try {
    if (sub == "make-dataset") {
      std::vector<Question> qs = make_dataset(make_count, static_cast<uint64_t>(make_seed));
      JsonlWriter writer(make_out);
      for (const Question& q : qs) {
        Json j;
        j["answer"] = q.answer;
        j["answer_kind"] = answer_kind_to_string(q.answer_kind);
        j["benchmark_tag"] = q.benchmark_tag;
        j["id"] = q.id;
        j["prompt"] = q.prompt;
        writer.write(j);
      }
      std::cout << "make-dataset: wrote " << qs.size() << " questions to " << make_out << "\n";
      return 0;
    }

    RunConfig cfg = (*opt_config) ? load_config_file(config_path) : RunConfig{};
    if (*opt_dataset) cfg.dataset_path = dataset_path;
    if (*opt_n) cfg.experiment.n_candidates = n;
    if (*opt_m) cfg.experiment.keep_m = m;
    if (*opt_fsl) cfg.experiment.first_step_len = first_step_len;
    if (*opt_backend) cfg.backend = backend_kind_from_string(backend);
    if (*opt_out) cfg.out_dir = out_dir;
    if (*opt_resume) cfg.resume = resume;
    if (*opt_seed) cfg.experiment.base_seed = static_cast<uint64_t>(seed);
    if (*opt_workers) cfg.workers = workers;
    apply_endpoint_env(cfg);
    effective_out_dir = cfg.out_dir;

    Runner runner(std::move(cfg));
    return runner.run(sub, report_format);
  } catch (const Error& e) {
    write_fatal_error(effective_out_dir, sub, e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    write_fatal_error(effective_out_dir, sub, "internal_error", e.what());
    return 1;
  }
}
