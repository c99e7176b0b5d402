#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ribbo/behaviors.hpp"
#include "ribbo/config.hpp"
#include "ribbo/dataset.hpp"
#include "ribbo/inference.hpp"
#include "ribbo/problems.hpp"

namespace ribbo {

/// Sum of y_star - y_t, accumulated from the last step backwards so the
/// result is bit-identical to augment_rtg(...).rtgs[0].
double cumulative_regret(std::span<const double> ys, double y_star);
double cumulative_regret(const Trajectory& traj, double y_star);

struct RegretCurve {
  std::string method;
  TaskRef task;
  std::uint64_t seed = 0;
  std::vector<double> best_so_far;
  std::vector<double> cumulative_regret;
};

RegretCurve make_regret_curve(std::span<const double> ys, double y_star, std::string method,
                              TaskRef task, std::uint64_t seed);

struct AggregateCurve {
  std::string method;
  std::vector<double> mean;
  std::vector<double> std;  // population standard deviation across runs
  std::size_t n_runs = 0;
  std::vector<std::string> skipped_tasks;
};

using TaskRanges = std::map<std::string, std::pair<double, double>>;  // keyed by TaskRef::str()

/// Maps each run's best-so-far through (y - y_min) / (y_max - y_min) of its
/// task, then averages across runs. Tasks with y_max <= y_min are skipped.
AggregateCurve normalized_curve(std::span<const RegretCurve> curves, const TaskRanges& ranges);

struct LeaderboardEntry {
  std::string method;
  double final_mean = 0.0;
  double final_std = 0.0;
};

/// Sorted by final mean, best first; ties keep input order.
std::vector<LeaderboardEntry> leaderboard(std::span<const AggregateCurve> curves);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Offline data generation.

struct GenDataConfig {
  std::vector<TaskDistribution> distributions;
  std::vector<BehaviorId> algorithms;
  int tasks_per_distribution = 20;
  int runs_per_task = 100;
  int budget = 60;
  std::uint64_t base_seed = 0;
  // Reduced quota for the expensive GP-EI behavior.
  int gp_ei_tasks = 5;
  int gp_ei_runs_per_task = 10;
  BehaviorOptions behavior_options;
  int threads = 1;

  void validate() const;
};

GenDataConfig gen_data_config_from_json(const Json& j);

/// Runs every selected behavior on the training tasks (indices
/// 0..tasks_per_distribution-1) and returns the assembled dataset.
Dataset generate_data(const GenDataConfig& cfg);

// ---------------------------------------------------------------------------
// Evaluation suite.

struct MethodSpec {
  std::string name;
  std::optional<BehaviorId> behavior;           // behavior baseline
  std::optional<std::filesystem::path> checkpoint;  // trained model
  RtgStrategy strategy = RtgStrategy::hrr();
  SamplingMode sampling = SamplingMode::Stochastic;
  int context_limit = 0;
  int algo_id = -1;
};

struct SuiteConfig {
  std::vector<TaskDistribution> distributions;
  std::vector<MethodSpec> methods;
  int tasks_per_distribution = 3;
  int seeds = 3;
  int budget = 60;
  std::uint64_t seed = 0;
  std::int64_t test_task_offset = 100000;
  int n_probe = 2000;
  int contour_resolution = 101;
  BehaviorOptions behavior_options;
  int threads = 1;

  void validate() const;
};

/// Relative checkpoint and dataset paths are resolved against `base_dir`.
SuiteConfig suite_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});

struct RunRecord {
  std::string method;
  TaskRef task;
  int seed_index = 0;
  std::uint64_t seed = 0;
  std::vector<Vec> xs;  // raw coordinates
  std::vector<double> ys;
  std::string error;  // non-empty when the run failed
};

struct SuiteResult {
  std::vector<TaskInstance> tasks;
  std::vector<RunRecord> runs;
  TaskRanges ranges;
  std::vector<AggregateCurve> curves;
  std::vector<LeaderboardEntry> board;
};

/// Test tasks: indices test_task_offset + k for k < tasks_per_distribution.
std::vector<TaskInstance> suite_tasks(const SuiteConfig& cfg);

/// Runs methods x tasks x seeds and aggregates. Runs that throw are recorded
/// with their error and left out of the curves.
SuiteResult run_suite(const SuiteConfig& cfg);

/// run_suite plus file output: curves/<method>.csv, leaderboard.csv,
/// runs/*.csv, contour/*.csv for 2-D tasks, failures.csv when needed.
SuiteResult run_suite(const SuiteConfig& cfg, const std::filesystem::path& out_dir);

/// Evaluates a 2-D task on a resolution x resolution grid over its box.
/// Rows: x0, x1, y with x0 varying slowest.
void write_contour_grid(const TaskInstance& task, int resolution, const std::filesystem::path& path);

enum class PlotKind { Curve, Contour };
PlotKind plot_kind_from_string(std::string_view name);

/// Collates a suite directory into plotting-friendly files under
/// <run_dir>/plot and returns the files written.
std::vector<std::filesystem::path> plot_data(const std::filesystem::path& run_dir, PlotKind kind);

/// Writes one run as CSV: t, x0.., y.
void write_run_file(const RunRecord& r, const std::filesystem::path& path);

}  // namespace ribbo
