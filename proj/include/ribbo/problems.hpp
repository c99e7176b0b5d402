#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ribbo/common.hpp"

namespace ribbo {

/// Axis-aligned box. Validated on construction.
class SearchSpace {
 public:
  SearchSpace() = default;
  SearchSpace(Vec lower, Vec upper);
  static SearchSpace cube(int dim, double lo, double hi);

  int dim() const { return static_cast<int>(lower_.size()); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  Vec width() const { return upper_ - lower_; }
  Vec center() const { return 0.5 * (lower_ + upper_); }
  bool contains(const Vec& x, double tol = 0.0) const;
  Vec clamp(const Vec& x) const;
  Vec sample_uniform(Rng& rng) const;

  friend bool operator==(const SearchSpace& a, const SearchSpace& b);

 private:
  Vec lower_;
  Vec upper_;
};

enum class BaseFunction {
  Sphere,
  Rastrigin,
  Rosenbrock,
  SharpRidge,
  GriewankRosenbrock,
  Lunacek,
  Branin,
  Rover2D,
};

std::string_view to_string(BaseFunction f);
BaseFunction base_function_from_string(std::string_view name);

/// Canonical box the base function is usually studied on.
SearchSpace default_space(BaseFunction f, int dim);

/// Value of the base objective at its known maximizer (maximization
/// convention), if that maximizer is known in closed form.
std::optional<double> known_optimum(BaseFunction f, int dim);
/// Maximizer of the untransformed base objective, if known.
std::optional<Vec> known_argmax(BaseFunction f, int dim);

// Raw textbook forms, minimization convention.
double sphere(const Vec& x);
double rastrigin(const Vec& x);
double rosenbrock(const Vec& x);
double sharp_ridge(const Vec& x);
double griewank_rosenbrock(const Vec& x);
double lunacek_bi_rastrigin(const Vec& x);
double branin(const Vec& x);

/// Parameters of the synthetic rover navigation problem. The obstacle field
/// is a sum of Gaussian bumps whose centers are drawn from `map_seed`.
struct RoverConfig {
  double penalty_weight = 4.0;  // lambda
  double offset = 5.0;          // b
  std::array<double, 2> start{0.05, 0.05};
  std::array<double, 2> goal{0.95, 0.95};
  int n_obstacles = 15;
  double obstacle_height = 1.0;
  double obstacle_width = 0.05;
  std::uint64_t map_seed = 7;
  int n_samples = 1000;

  bool operator==(const RoverConfig&) const = default;
};

class RoverMap {
 public:
  explicit RoverMap(const RoverConfig& cfg = {});
  double cost_at(double px, double py) const;
  const RoverConfig& config() const { return cfg_; }

 private:
  RoverConfig cfg_;
  std::vector<std::array<double, 2>> centers_;
};

/// Natural cubic spline through 30 planar control points, evaluated at
/// `n_samples` equally spaced parameter values in [0, 1].
std::vector<std::array<double, 2>> rover_trajectory(const Vec& x, int n_samples);

/// Line integral of the obstacle cost along the sampled trajectory.
double rover_path_cost(const RoverMap& map, const Vec& x, int n_samples);

/// b - c(x) - lambda * (|x01 - s|_1 + |x5859 - g|_1); requires x.size() == 60.
double rover_objective(const RoverMap& map, const Vec& x);
double rover_objective(const Vec& x);

struct TaskRef {
  std::string distribution;
  std::int64_t index = 0;
  bool operator==(const TaskRef&) const = default;
  std::string str() const { return distribution + ":" + std::to_string(index); }
};

/// A concrete objective: f(x) = scale * g(x - translation), with g the
/// base function expressed under maximization.
struct TaskInstance {
  BaseFunction base = BaseFunction::Sphere;
  SearchSpace space;
  Vec translation;
  double scale = 1.0;
  std::uint64_t seed = 0;
  TaskRef ref;
  RoverConfig rover;

  int dim() const { return space.dim(); }
  friend bool operator==(const TaskInstance& a, const TaskInstance& b);
};

double evaluate(const TaskInstance& task, const Vec& x_raw);

/// Builds the identity-transform task of a base function on its default box.
TaskInstance identity_task(BaseFunction f, int dim);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

struct TaskDistribution {
  std::string name;
  BaseFunction base = BaseFunction::Sphere;
  SearchSpace space;
  Interval translation_range;
  Interval scaling_range{1.0, 1.0};
  std::uint64_t master_seed = 0;
  RoverConfig rover;

  void validate() const;
};

TaskInstance sample_task(const TaskDistribution& dist, std::int64_t index);

/// Running best-observed value for one task.
class OptimumProxy {
 public:
  void observe(double y);
  template <class Range>
  void observe_all(const Range& ys) {
    for (double y : ys) observe(y);
  }
  bool empty() const { return !value_; }
  double value() const;

 private:
  std::optional<double> value_;
};

/// Min and max of the objective on a task, estimated from a uniform probe
/// plus the known optimum when one exists. Used for cross-task normalization
/// of evaluation curves.
std::pair<double, double> probe_value_range(const TaskInstance& task, int n_probe,
                                            std::uint64_t seed);

}  // namespace ribbo
