#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ribbo/behaviors.hpp"
#include "ribbo/common.hpp"
#include "ribbo/problems.hpp"

namespace ribbo {

/// One optimization history. `xs` are in unit coordinates, `ys` are raw
/// objective values.
struct Trajectory {
  TaskRef task;
  BehaviorId algo = BehaviorId::RandomSearch;
  std::uint64_t seed = 0;
  std::vector<Vec> xs;
  std::vector<double> ys;

  int length() const { return static_cast<int>(ys.size()); }
  int dim() const { return xs.empty() ? 0 : static_cast<int>(xs.front().size()); }
  void validate() const;

  friend bool operator==(const Trajectory& a, const Trajectory& b);
};

/// History with regret-to-go attached. Index 0 is the padding step; index T
/// holds the last real step and has rtg == 0.
struct AugmentedTrajectory {
  std::vector<Vec> xs;
  std::vector<double> ys;
  std::vector<double> rtgs;
  int algo = -1;

  int length() const { return static_cast<int>(ys.size()) - 1; }  // T
  int dim() const { return static_cast<int>(xs.front().size()); }
};

/// Padding placeholders: box center in unit coordinates and y = 0.
Vec padding_x(int dim);
inline constexpr double kPaddingY = 0.0;

/// rtg[t] = sum_{t' > t} (y_star - y_{t'}), accumulated from the end.
AugmentedTrajectory augment_rtg(const Trajectory& traj, double y_star);
AugmentedTrajectory augment_rtg(std::span<const Vec> xs, std::span<const double> ys,
                                double y_star);

Vec normalize_x(const Vec& x_raw, const SearchSpace& space);
Vec denormalize_x(const Vec& x_unit, const SearchSpace& space);

enum class YNormalization { Random, Dataset, None };
std::string_view to_string(YNormalization m);
YNormalization y_normalization_from_string(std::string_view name);

struct ScaledValues {
  std::vector<double> ys;
  double y_star = 0.0;
  double lower = 0.0;
  double upper = 1.0;
};

/// Maps every value through (y - lower) / (upper - lower).
ScaledValues scale_y(std::span<const double> ys, double y_star, double lower, double upper);

/// Draws l ~ U(y_min - s/2, y_min + s/2) and u ~ U(y_max - s/2, y_max + s/2)
/// with s = y_max - y_min, redrawing until u - l >= s/4, then scales.
/// Throws MissingData when y_max <= y_min; callers skip such trajectories.
ScaledValues random_scale_y(std::span<const double> ys, double y_star, double y_min,
                            double y_max, Rng& rng);

ScaledValues normalize_y(std::span<const double> ys, double y_star, double y_min, double y_max,
                         YNormalization mode, Rng& rng);

/// Window of consecutive augmented steps. `targets[i]` is the x of the step
/// following window position i; `has_target[i]` is false past the end.
struct SubsequenceWindow {
  int start = 0;
  std::vector<Vec> xs;
  std::vector<double> ys;
  std::vector<double> rtgs;
  std::vector<std::uint8_t> is_pad;
  std::vector<Vec> targets;
  std::vector<std::uint8_t> has_target;
  int algo = -1;

  int size() const { return static_cast<int>(ys.size()); }
};

/// Copies `tau` consecutive steps starting at `start`.
SubsequenceWindow extract_window(const AugmentedTrajectory& aug, int start, int tau);
/// Uniform start over [0, T + 1 - tau].
SubsequenceWindow sample_subsequence(const AugmentedTrajectory& aug, int tau, Rng& rng);

struct TaskStats {
  TaskRef ref;
  double y_min = 0.0;
  double y_max = 0.0;
  double optimum_proxy = 0.0;
};

/// Averages of the per-task worst and best values over the training tasks;
/// used to normalize y at inference time.
struct NormalizationStats {
  double mean_worst = 0.0;
  double mean_best = 1.0;
};

struct DatasetFile {
  std::string path;
  BehaviorId algo = BehaviorId::RandomSearch;
  std::string distribution;
  std::size_t n_trajectories = 0;
  std::string checksum;
};

struct DatasetManifest {
  static constexpr int kVersion = 1;
  int version = kVersion;
  int budget = 0;
  std::uint64_t base_seed = 0;
  std::vector<TaskDistribution> distributions;
  std::vector<BehaviorId> algorithms;
  std::vector<TaskStats> tasks;
  std::vector<DatasetFile> files;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Trajectory> trajectories;

  const TaskStats& stats(const TaskRef& ref) const;
  const TaskDistribution& distribution(const std::string& name) const;
  NormalizationStats normalization() const;
};

/// Best observed y over every trajectory of `ref`.
double optimum_proxy(const TaskRef& ref, std::span<const Trajectory> trajectories);

/// Recomputes per-task statistics from the trajectories.
std::vector<TaskStats> compute_task_stats(std::span<const Trajectory> trajectories);

/// Assembles a dataset and fills manifest task statistics.
Dataset make_dataset(std::vector<Trajectory> trajectories,
                     std::vector<TaskDistribution> distributions, int budget,
                     std::uint64_t base_seed);

/// Writes `manifest.json` plus one trajectory file per (algorithm,
/// distribution) pair into `dir`.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// Single-line text form of a trajectory (tab-separated, %.17g numbers).
std::string format_trajectory_line(const Trajectory& t);
Trajectory parse_trajectory_line(std::string_view line);

void write_trajectory_file(const std::filesystem::path& path, std::span<const Trajectory> trajs);
std::vector<Trajectory> read_trajectory_file(const std::filesystem::path& path);
/// Parses a whole trajectory file body; errors carry `label:line`.
std::vector<Trajectory> parse_trajectory_text(std::string_view text, const std::string& label);

std::string fnv1a64_hex(std::string_view bytes);

}  // namespace ribbo
