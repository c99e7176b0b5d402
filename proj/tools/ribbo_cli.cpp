// Command-line front end: gen-data, train, run, eval, plot-data.

#include <charconv>
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ribbo/config.hpp"
#include "ribbo/dataset.hpp"
#include "ribbo/harness.hpp"
#include "ribbo/inference.hpp"
#include "ribbo/model.hpp"
#include "ribbo/trainer.hpp"

namespace fs = std::filesystem;
using namespace ribbo;

namespace {

TaskRef parse_task_ref(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("task must look like DIST:INDEX");
  TaskRef r;
  r.distribution = text.substr(0, colon);
  const auto idx = std::string_view(text).substr(colon + 1);
  auto [ptr, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), r.index);
  if (ec != std::errc() || ptr != idx.data() + idx.size() || r.index < 0) {
    throw ConfigError("task index must be a non-negative integer: " + text);
  }
  return r;
}

int cmd_gen_data(const std::string& config, const std::string& out, int threads) {
  auto cfg = gen_data_config_from_json(parse_json_file(config));
  if (threads > 0) cfg.threads = threads;
  const Dataset ds = generate_data(cfg);
  write_dataset(ds, out);
  std::printf("wrote %zu trajectories over %zu tasks to %s\n", ds.trajectories.size(),
              ds.manifest.tasks.size(), out.c_str());
  return 0;
}

struct TrainArgs {
  std::string dataset;
  std::string preset = "desk";
  std::string variant = "ribbo";
  std::int64_t steps = 5000;
  std::uint64_t seed = 0;
  std::string out;
  int batch = 32;
  int tau = 30;
  double lr = 0.0;
  int eval_every = 100;
  int checkpoint_every = 0;
  std::string metrics;
  std::string resume;
  std::vector<std::string> exclude;
  std::string y_norm = "random";
};

int cmd_train(const TrainArgs& a) {
  const Dataset ds = read_dataset(a.dataset);
  if (ds.trajectories.empty()) throw ConfigError("dataset is empty");
  TrainerConfig tc;
  tc.batch_size = a.batch;
  tc.total_steps = a.steps;
  tc.seed = a.seed;
  tc.tau = a.tau;
  tc.eval_every = a.eval_every;
  tc.checkpoint_every = a.checkpoint_every;
  tc.y_normalization = y_normalization_from_string(a.y_norm);
  tc.peak_lr = a.lr > 0.0 ? a.lr : (a.preset == "paper" ? 2e-4 : 1e-3);
  if (a.variant == "bc-filter") {
    tc.variant = ModelVariant::BehaviorCloning;
    if (a.exclude.empty()) {
      tc.excluded_algorithms = {BehaviorId::RandomSearch, BehaviorId::ShuffledGrid};
    }
    for (const auto& e : a.exclude) tc.excluded_algorithms.push_back(behavior_from_string(e));
  } else {
    tc.variant = model_variant_from_string(a.variant);
    for (const auto& e : a.exclude) tc.excluded_algorithms.push_back(behavior_from_string(e));
  }
  ModelConfig mc = model_preset(a.preset, ds.trajectories.front().dim(), a.tau + 1);
  TrainingOutputs io;
  io.checkpoint = fs::path(a.out);
  io.metrics = a.metrics.empty() ? fs::path(a.out + ".metrics.csv") : fs::path(a.metrics);
  if (!a.resume.empty()) io.resume_from = fs::path(a.resume);
  io.on_step = [&](std::int64_t step, const StepResult& r) {
    if (step % tc.eval_every == 0) {
      std::fprintf(stderr, "step %lld loss %.5f lr %.3g grad %.3f\n", static_cast<long long>(step),
                   r.loss, r.lr, r.grad_norm);
    }
  };
  run_training(ds, mc, tc, io);
  std::printf("saved checkpoint %s\n", a.out.c_str());
  return 0;
}

struct RunArgs {
  std::string ckpt;
  std::string task;
  int budget = 60;
  std::string strategy = "hrr";
  std::string mode = "stochastic";
  std::uint64_t seed = 0;
  std::string out;
  std::string distributions;
  int context = 0;
  int algo_id = -1;
};

int cmd_run(const RunArgs& a) {
  const ModelCheckpoint ck = load_checkpoint(a.ckpt);
  const TaskRef ref = parse_task_ref(a.task);
  std::vector<TaskDistribution> dists = ck.meta.distributions;
  if (!a.distributions.empty()) {
    const auto j = parse_json_file(a.distributions);
    dists.clear();
    const auto& arr = j.is_object() && j.contains("distributions") ? j.at("distributions") : j;
    for (const auto& d : arr) dists.push_back(distribution_from_json(d));
  }
  const TaskDistribution* dist = nullptr;
  for (const auto& d : dists) {
    if (d.name == ref.distribution) dist = &d;
  }
  if (!dist) throw ConfigError("unknown distribution '" + ref.distribution + "'");
  const TaskInstance task = sample_task(*dist, ref.index);
  InferenceConfig ic;
  ic.budget = a.budget;
  ic.strategy = RtgStrategy::parse(a.strategy);
  ic.sampling = sampling_mode_from_string(a.mode);
  ic.seed = a.seed;
  ic.context_limit = a.context;
  ic.algo_id = a.algo_id;
  const InferenceResult r = run_optimization(ck, task, ic);
  write_inference_trace(r, task, a.out);
  double best = r.trajectory.ys.front();
  for (double y : r.trajectory.ys) best = std::max(best, y);
  std::printf("task %s best %.10g after %d queries; trace in %s\n", ref.str().c_str(), best,
              a.budget, a.out.c_str());
  return 0;
}

int cmd_eval(const std::string& config, const std::string& out, int threads) {
  const fs::path cfg_path(config);
  auto cfg = suite_config_from_json(parse_json_file(cfg_path), cfg_path.parent_path());
  if (threads > 0) cfg.threads = threads;
  const auto res = run_suite(cfg, out);
  std::printf("%-24s %12s %12s\n", "method", "final_mean", "final_std");
  for (const auto& e : res.board) {
    std::printf("%-24s %12.6f %12.6f\n", e.method.c_str(), e.final_mean, e.final_std);
  }
  std::size_t failed = 0;
  for (const auto& r : res.runs) failed += r.error.empty() ? 0 : 1;
  if (failed) std::printf("%zu runs failed; see failures.csv\n", failed);
  return 0;
}

int cmd_plot(const std::string& run, const std::string& kind) {
  for (const auto& p : plot_data(run, plot_kind_from_string(kind))) std::printf("%s\n", p.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ribbo: offline-trained sequence models for black-box optimization"};
  app.require_subcommand(1);

  std::string gd_config, gd_out;
  int threads = 0;
  auto* gd = app.add_subcommand("gen-data", "Run behavior optimizers and write a dataset");
  gd->add_option("--config", gd_config, "Data generation config (JSON)")->required()->check(CLI::ExistingFile);
  gd->add_option("--out", gd_out, "Output dataset directory")->required();
  gd->add_option("--threads", threads, "Worker threads (overrides the config)");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a sequence model on a dataset");
  tr->add_option("--dataset", ta.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--model-preset", ta.preset, "Model size")->check(CLI::IsMember({"desk", "paper", "tiny"}));
  tr->add_option("--variant", ta.variant, "Training variant")
      ->check(CLI::IsMember({"ribbo", "bc", "bc-filter", "algoid"}));
  tr->add_option("--steps", ta.steps, "Optimizer steps")->check(CLI::PositiveNumber);
  tr->add_option("--seed", ta.seed, "Random seed");
  tr->add_option("--out", ta.out, "Checkpoint path")->required();
  tr->add_option("--batch-size", ta.batch, "Windows per step")->check(CLI::PositiveNumber);
  tr->add_option("--tau", ta.tau, "Subsequence length")->check(CLI::PositiveNumber);
  tr->add_option("--lr", ta.lr, "Peak learning rate (preset default when omitted)");
  tr->add_option("--eval-every", ta.eval_every, "Metric row interval")->check(CLI::PositiveNumber);
  tr->add_option("--checkpoint-every", ta.checkpoint_every, "Periodic checkpoint interval");
  tr->add_option("--metrics", ta.metrics, "Metrics CSV (default: <out>.metrics.csv)");
  tr->add_option("--resume", ta.resume, "Resume from a checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--exclude", ta.exclude, "Algorithms left out of training");
  tr->add_option("--y-norm", ta.y_norm, "y normalization")->check(CLI::IsMember({"random", "dataset", "none"}));

  RunArgs ra;
  auto* rn = app.add_subcommand("run", "Optimize one task with a trained model");
  rn->add_option("--ckpt", ra.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  rn->add_option("--task", ra.task, "Task as DIST:INDEX")->required();
  rn->add_option("--budget", ra.budget, "Number of queries")->check(CLI::PositiveNumber);
  rn->add_option("--strategy", ra.strategy, "hrr, naive:R0 or const:c");
  rn->add_option("--mode", ra.mode, "Sampling mode")->check(CLI::IsMember({"stochastic", "mean"}));
  rn->add_option("--seed", ra.seed, "Random seed");
  rn->add_option("--out", ra.out, "Trace output (CSV)")->required();
  rn->add_option("--distributions", ra.distributions, "Distribution config overriding the checkpoint's");
  rn->add_option("--context", ra.context, "Context limit (default: training tau)");
  rn->add_option("--algo-id", ra.algo_id, "Algorithm id for the algoid variant");

  std::string ev_config, ev_out;
  auto* ev = app.add_subcommand("eval", "Run an evaluation suite");
  ev->add_option("--config", ev_config, "Suite config (JSON)")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "Results directory")->required();
  ev->add_option("--threads", threads, "Worker threads (overrides the config)");

  std::string pd_run, pd_kind;
  auto* pd = app.add_subcommand("plot-data", "Collate suite results for plotting");
  pd->add_option("--run", pd_run, "Suite results directory")->required()->check(CLI::ExistingDirectory);
  pd->add_option("--kind", pd_kind, "curve or contour")->required()->check(CLI::IsMember({"curve", "contour"}));

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gd) return cmd_gen_data(gd_config, gd_out, threads);
    if (*tr) return cmd_train(ta);
    if (*rn) return cmd_run(ra);
    if (*ev) return cmd_eval(ev_config, ev_out, threads);
    if (*pd) return cmd_plot(pd_run, pd_kind);
  } catch (const ribbo::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
