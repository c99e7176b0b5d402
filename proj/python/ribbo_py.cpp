#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ribbo/config.hpp"
#include "ribbo/harness.hpp"
#include "ribbo/trainer.hpp"

namespace py = pybind11;
using namespace ribbo;

namespace {

TaskDistribution parse_distribution(const std::string& text) {
  return distribution_from_json(Json::parse(text));
}

py::dict checkpoint_info(const std::string& path) {
  const ModelCheckpoint ck = load_checkpoint(path);
  py::dict d;
  d["config"] = model_config_to_json(ck.model.config()).dump();
  d["meta"] = training_meta_to_json(ck.meta).dump();
  d["mean_worst"] = ck.normalization.mean_worst;
  d["mean_best"] = ck.normalization.mean_best;
  d["n_params"] = ck.model.params().size();
  return d;
}

std::string train(const std::string& dataset, const std::string& out, const std::string& variant,
                  std::int64_t steps, std::uint64_t seed, const std::string& preset, int tau,
                  int batch_size, double lr, const std::string& metrics) {
  const Dataset ds = read_dataset(dataset);
  if (ds.trajectories.empty()) throw ConfigError("dataset is empty");
  TrainerConfig tc;
  tc.total_steps = steps;
  tc.seed = seed;
  tc.tau = tau;
  tc.batch_size = batch_size;
  tc.peak_lr = lr > 0.0 ? lr : (preset == "paper" ? 2e-4 : 1e-3);
  tc.eval_every = std::max<std::int64_t>(1, std::min<std::int64_t>(100, steps));
  if (variant == "bc-filter") {
    tc.variant = ModelVariant::BehaviorCloning;
    tc.excluded_algorithms = {BehaviorId::RandomSearch, BehaviorId::ShuffledGrid};
  } else {
    tc.variant = model_variant_from_string(variant);
  }
  TrainingOutputs io;
  io.checkpoint = out;
  if (!metrics.empty()) io.metrics = metrics;
  py::gil_scoped_release release;
  run_training(ds, model_preset(preset, ds.trajectories.front().dim(), tau + 1), tc, io);
  return out;
}

py::dict run_model(const std::string& ckpt_path, const std::string& distribution, std::int64_t index,
                   int budget, const std::string& strategy, const std::string& mode, std::uint64_t seed) {
  const ModelCheckpoint ck = load_checkpoint(ckpt_path);
  const TaskInstance task = sample_task(parse_distribution(distribution), index);
  InferenceConfig ic;
  ic.budget = budget;
  ic.strategy = RtgStrategy::parse(strategy);
  ic.sampling = sampling_mode_from_string(mode);
  ic.seed = seed;
  InferenceResult r;
  {
    py::gil_scoped_release release;
    r = run_optimization(ck, task, ic);
  }
  Mat xs(budget, task.dim());
  Vec std(budget);
  std::vector<double> rtg;
  for (int t = 0; t < budget; ++t) {
    xs.row(t) = denormalize_x(r.trajectory.xs[t], task.space).transpose();
    std[t] = r.steps[t].prediction.std.mean();
  }
  py::dict d;
  d["xs"] = xs;
  d["ys"] = r.trajectory.ys;
  d["rtgs"] = r.history.aug.rtgs;
  d["mean_std"] = std;
  return d;
}

std::vector<std::pair<std::string, double>> eval_suite(const std::string& config_path,
                                                       const std::string& out_dir) {
  const std::filesystem::path p(config_path);
  const SuiteConfig cfg = suite_config_from_json(parse_json_file(p), p.parent_path());
  SuiteResult res;
  {
    py::gil_scoped_release release;
    res = run_suite(cfg, out_dir);
  }
  std::vector<std::pair<std::string, double>> board;
  for (const auto& e : res.board) board.emplace_back(e.method, e.final_mean);
  return board;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sequence-model black-box optimization: tasks, behaviors, training and evaluation.";

  py::register_exception<Error>(m, "RibboError", PyExc_RuntimeError);

  py::class_<TaskInstance>(m, "Task")
      .def_property_readonly("dim", &TaskInstance::dim)
      .def_property_readonly("lower", [](const TaskInstance& t) { return Vec(t.space.lower()); })
      .def_property_readonly("upper", [](const TaskInstance& t) { return Vec(t.space.upper()); })
      .def_readonly("translation", &TaskInstance::translation)
      .def_readonly("scale", &TaskInstance::scale)
      .def_property_readonly("ref", [](const TaskInstance& t) { return t.ref.str(); })
      .def("__call__", &evaluate, py::arg("x"))
      .def("__repr__", [](const TaskInstance& t) {
        return "<Task " + t.ref.str() + " " + std::string(to_string(t.base)) + " dim=" +
               std::to_string(t.dim()) + ">";
      });

  m.def("sample_task",
        [](const std::string& distribution, std::int64_t index) {
          return sample_task(parse_distribution(distribution), index);
        },
        py::arg("distribution_json"), py::arg("index"));

  m.def("augment_rtg",
        [](const std::vector<double>& ys, double y_star) {
          const std::vector<Vec> xs(ys.size(), Vec::Zero(1));
          return augment_rtg(std::span<const Vec>(xs), std::span<const double>(ys), y_star).rtgs;
        },
        py::arg("ys"), py::arg("y_star"), "Regret-to-go for each step, padding step first.");
  m.def("cumulative_regret",
        [](const std::vector<double>& ys, double y_star) {
          return cumulative_regret(std::span<const double>(ys), y_star);
        },
        py::arg("ys"), py::arg("y_star"));
  m.def("expected_improvement", &expected_improvement, py::arg("mean"), py::arg("std"),
        py::arg("best_y"));

  m.def("run_behavior",
        [](const std::string& name, const TaskInstance& task, int budget, std::uint64_t seed) {
          BehaviorOptions opts;
          opts.budget_hint = budget;
          auto b = make_behavior(behavior_from_string(name), task.space, seed, opts);
          const auto hist = run_behavior(*b, task, budget);
          Mat xs(static_cast<Eigen::Index>(hist.size()), task.dim());
          std::vector<double> ys;
          for (std::size_t t = 0; t < hist.size(); ++t) {
            xs.row(static_cast<Eigen::Index>(t)) = hist[t].first.transpose();
            ys.push_back(hist[t].second);
          }
          return py::make_tuple(xs, ys);
        },
        py::arg("name"), py::arg("task"), py::arg("budget"), py::arg("seed") = 0);
  m.def("behaviors", [] {
    std::vector<std::string> names;
    for (auto id : all_behaviors()) names.emplace_back(to_string(id));
    return names;
  });

  m.def("generate_data",
        [](const std::string& config_path, const std::string& out_dir) {
          const auto cfg = gen_data_config_from_json(parse_json_file(config_path));
          py::gil_scoped_release release;
          const Dataset ds = generate_data(cfg);
          write_dataset(ds, out_dir);
          return ds.trajectories.size();
        },
        py::arg("config"), py::arg("out"));
  m.def("train", &train, py::arg("dataset"), py::arg("out"), py::arg("variant") = "ribbo",
        py::arg("steps") = 5000, py::arg("seed") = 0, py::arg("preset") = "desk", py::arg("tau") = 30,
        py::arg("batch_size") = 32, py::arg("lr") = 0.0, py::arg("metrics") = "");
  m.def("run", &run_model, py::arg("ckpt"), py::arg("distribution_json"), py::arg("index"),
        py::arg("budget") = 60, py::arg("strategy") = "hrr", py::arg("mode") = "stochastic",
        py::arg("seed") = 0);
  m.def("eval", &eval_suite, py::arg("config"), py::arg("out"));
  m.def("plot_data",
        [](const std::string& run_dir, const std::string& kind) {
          std::vector<std::string> out;
          for (const auto& p : plot_data(run_dir, plot_kind_from_string(kind))) out.push_back(p.string());
          return out;
        },
        py::arg("run"), py::arg("kind"));
  m.def("checkpoint_info", &checkpoint_info, py::arg("path"));
}
