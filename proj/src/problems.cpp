#include "ribbo/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ribbo {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kRoverPoints = 30;
constexpr int kRoverDim = 2 * kRoverPoints;

bool same_vec(const Vec& a, const Vec& b) {
  return a.size() == b.size() && (a.size() == 0 || a == b);
}

// Natural cubic spline second derivatives for uniformly spaced knots.
std::vector<double> natural_spline_m(const std::vector<double>& y, double h) {
  const int n = static_cast<int>(y.size());
  std::vector<double> m(n, 0.0);
  if (n < 3) return m;
  // Thomas algorithm on the interior system.
  const int k = n - 2;
  std::vector<double> c(k), d(k);
  for (int i = 0; i < k; ++i) {
    double rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h);
    double diag = 4.0;
    if (i == 0) {
      c[i] = 1.0 / diag;
      d[i] = rhs / diag;
    } else {
      double denom = diag - c[i - 1];
      c[i] = 1.0 / denom;
      d[i] = (rhs - d[i - 1]) / denom;
    }
  }
  for (int i = k - 1; i >= 0; --i) {
    m[i + 1] = d[i] - (i + 1 < k ? c[i] * m[i + 2] : 0.0);
  }
  return m;
}

double spline_eval(const std::vector<double>& y, const std::vector<double>& m, double h,
                   double t) {
  const int n = static_cast<int>(y.size());
  int i = std::min(static_cast<int>(t / h), n - 2);
  i = std::max(i, 0);
  double a = (i + 1) * h - t;
  double b = t - i * h;
  return m[i] * a * a * a / (6 * h) + m[i + 1] * b * b * b / (6 * h) +
         (y[i] / h - m[i] * h / 6) * a + (y[i + 1] / h - m[i + 1] * h / 6) * b;
}

}  // namespace

SearchSpace::SearchSpace(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() < 1) throw InvalidInput("search space must have dim >= 1");
  if (lower_.size() != upper_.size()) throw InvalidInput("search space bound lengths differ");
  for (int i = 0; i < lower_.size(); ++i) {
    if (!(lower_[i] < upper_[i])) {
      throw InvalidInput("search space requires lower < upper in every coordinate");
    }
  }
}

SearchSpace SearchSpace::cube(int dim, double lo, double hi) {
  if (dim < 1) throw InvalidInput("search space must have dim >= 1");
  return SearchSpace(Vec::Constant(dim, lo), Vec::Constant(dim, hi));
}

bool SearchSpace::contains(const Vec& x, double tol) const {
  if (x.size() != lower_.size()) return false;
  for (int i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lower_[i] - tol && x[i] <= upper_[i] + tol)) return false;
  }
  return true;
}

Vec SearchSpace::clamp(const Vec& x) const { return x.cwiseMax(lower_).cwiseMin(upper_); }

Vec SearchSpace::sample_uniform(Rng& rng) const {
  Vec x(dim());
  for (int i = 0; i < dim(); ++i) x[i] = uniform(rng, lower_[i], upper_[i]);
  return x;
}

bool operator==(const SearchSpace& a, const SearchSpace& b) {
  return same_vec(a.lower_, b.lower_) && same_vec(a.upper_, b.upper_);
}

bool operator==(const TaskInstance& a, const TaskInstance& b) {
  return a.base == b.base && a.space == b.space && same_vec(a.translation, b.translation) &&
         a.scale == b.scale && a.seed == b.seed && a.ref == b.ref && a.rover == b.rover;
}

std::string_view to_string(BaseFunction f) {
  switch (f) {
    case BaseFunction::Sphere: return "sphere";
    case BaseFunction::Rastrigin: return "rastrigin";
    case BaseFunction::Rosenbrock: return "rosenbrock";
    case BaseFunction::SharpRidge: return "sharp_ridge";
    case BaseFunction::GriewankRosenbrock: return "griewank_rosenbrock";
    case BaseFunction::Lunacek: return "lunacek";
    case BaseFunction::Branin: return "branin";
    case BaseFunction::Rover2D: return "rover";
  }
  return "unknown";
}

BaseFunction base_function_from_string(std::string_view name) {
  for (auto f : {BaseFunction::Sphere, BaseFunction::Rastrigin, BaseFunction::Rosenbrock,
                 BaseFunction::SharpRidge, BaseFunction::GriewankRosenbrock,
                 BaseFunction::Lunacek, BaseFunction::Branin, BaseFunction::Rover2D}) {
    if (to_string(f) == name) return f;
  }
  throw InvalidInput("unknown base function: " + std::string(name));
}

SearchSpace default_space(BaseFunction f, int dim) {
  switch (f) {
    case BaseFunction::Branin: {
      Vec lo(2), hi(2);
      lo << -5.0, 0.0;
      hi << 10.0, 15.0;
      return SearchSpace(lo, hi);
    }
    case BaseFunction::Rover2D: return SearchSpace::cube(kRoverDim, 0.0, 1.0);
    default: return SearchSpace::cube(dim, -5.0, 5.0);
  }
}

std::optional<Vec> known_argmax(BaseFunction f, int dim) {
  switch (f) {
    case BaseFunction::Sphere:
    case BaseFunction::Rastrigin:
    case BaseFunction::SharpRidge: return Vec::Zero(dim);
    case BaseFunction::Rosenbrock: return Vec::Ones(dim);
    case BaseFunction::GriewankRosenbrock:
      return Vec::Constant(dim, 0.5 / std::max(1.0, std::sqrt(static_cast<double>(dim)) / 8.0));
    case BaseFunction::Lunacek: return Vec::Constant(dim, 1.25);
    case BaseFunction::Branin: {
      Vec x(2);
      x << kPi, 2.275;
      return x;
    }
    case BaseFunction::Rover2D: return std::nullopt;
  }
  return std::nullopt;
}

std::optional<double> known_optimum(BaseFunction f, int /*dim*/) {
  switch (f) {
    case BaseFunction::Branin: return -5.0 / (4.0 * kPi);  // -0.397887...
    case BaseFunction::Rover2D: return std::nullopt;
    default: return 0.0;
  }
}

double sphere(const Vec& x) { return x.squaredNorm(); }

double rastrigin(const Vec& x) {
  double s = 10.0 * static_cast<double>(x.size());
  for (int i = 0; i < x.size(); ++i) s += x[i] * x[i] - 10.0 * std::cos(2.0 * kPi * x[i]);
  return s;
}

double rosenbrock(const Vec& x) {
  double s = 0.0;
  for (int i = 0; i + 1 < x.size(); ++i) {
    double a = x[i + 1] - x[i] * x[i];
    double b = 1.0 - x[i];
    s += 100.0 * a * a + b * b;
  }
  return s;
}

double sharp_ridge(const Vec& x) {
  double tail = x.size() > 1 ? x.tail(x.size() - 1).squaredNorm() : 0.0;
  return x[0] * x[0] + 100.0 * std::sqrt(tail);
}

double griewank_rosenbrock(const Vec& x) {
  const int d = static_cast<int>(x.size());
  if (d < 2) throw InvalidInput("griewank_rosenbrock requires dim >= 2");
  const double c = std::max(1.0, std::sqrt(static_cast<double>(d)) / 8.0);
  Vec z = (c * x).array() + 0.5;
  double s = 0.0;
  for (int i = 0; i + 1 < d; ++i) {
    double a = z[i] * z[i] - z[i + 1];
    double si = 100.0 * a * a + (z[i] - 1.0) * (z[i] - 1.0);
    s += si / 4000.0 - std::cos(si);
  }
  return 10.0 * s / (d - 1) + 10.0;
}

double lunacek_bi_rastrigin(const Vec& x) {
  const double d = static_cast<double>(x.size());
  const double mu0 = 2.5;
  const double dd = 1.0;
  const double s = 1.0 - 1.0 / (2.0 * std::sqrt(d + 20.0) - 8.2);
  const double mu1 = -std::sqrt((mu0 * mu0 - dd) / s);
  Vec xh = 2.0 * x;
  double a = (xh.array() - mu0).square().sum();
  double b = dd * d + s * (xh.array() - mu1).square().sum();
  double c = 0.0;
  for (int i = 0; i < xh.size(); ++i) c += std::cos(2.0 * kPi * (xh[i] - mu0));
  return std::min(a, b) + 10.0 * (d - c);
}

double branin(const Vec& x) {
  if (x.size() != 2) throw InvalidInput("branin requires dim == 2");
  const double b = 5.1 / (4.0 * kPi * kPi);
  const double c = 5.0 / kPi;
  const double t = 1.0 / (8.0 * kPi);
  double q = x[1] - b * x[0] * x[0] + c * x[0] - 6.0;
  return q * q + 10.0 * (1.0 - t) * std::cos(x[0]) + 10.0;
}

RoverMap::RoverMap(const RoverConfig& cfg) : cfg_(cfg) {
  Rng rng(derive_seed(cfg.map_seed, 0));
  centers_.reserve(cfg.n_obstacles);
  for (int i = 0; i < cfg.n_obstacles; ++i) {
    double px = uniform(rng, 0.1, 0.9);
    double py = uniform(rng, 0.1, 0.9);
    centers_.push_back({px, py});
  }
}

double RoverMap::cost_at(double px, double py) const {
  const double inv = 1.0 / (2.0 * cfg_.obstacle_width * cfg_.obstacle_width);
  double c = 0.0;
  for (const auto& ctr : centers_) {
    double dx = px - ctr[0];
    double dy = py - ctr[1];
    c += cfg_.obstacle_height * std::exp(-(dx * dx + dy * dy) * inv);
  }
  return c;
}

std::vector<std::array<double, 2>> rover_trajectory(const Vec& x, int n_samples) {
  if (x.size() != kRoverDim) throw InvalidInput("rover expects a 60-dimensional input");
  if (n_samples < 2) throw InvalidInput("rover trajectory needs at least 2 samples");
  std::vector<double> px(kRoverPoints), py(kRoverPoints);
  for (int i = 0; i < kRoverPoints; ++i) {
    px[i] = x[2 * i];
    py[i] = x[2 * i + 1];
  }
  const double h = 1.0 / (kRoverPoints - 1);
  auto mx = natural_spline_m(px, h);
  auto my = natural_spline_m(py, h);
  std::vector<std::array<double, 2>> out(n_samples);
  for (int k = 0; k < n_samples; ++k) {
    double t = static_cast<double>(k) / (n_samples - 1);
    out[k] = {spline_eval(px, mx, h, t), spline_eval(py, my, h, t)};
  }
  return out;
}

double rover_path_cost(const RoverMap& map, const Vec& x, int n_samples) {
  auto pts = rover_trajectory(x, n_samples);
  double c = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    double mxp = 0.5 * (pts[k][0] + pts[k + 1][0]);
    double myp = 0.5 * (pts[k][1] + pts[k + 1][1]);
    double len = std::hypot(pts[k + 1][0] - pts[k][0], pts[k + 1][1] - pts[k][1]);
    c += map.cost_at(mxp, myp) * len;
  }
  return c;
}

double rover_objective(const RoverMap& map, const Vec& x) {
  const auto& cfg = map.config();
  double c = rover_path_cost(map, x, cfg.n_samples);
  double pen = std::abs(x[0] - cfg.start[0]) + std::abs(x[1] - cfg.start[1]) +
               std::abs(x[kRoverDim - 2] - cfg.goal[0]) + std::abs(x[kRoverDim - 1] - cfg.goal[1]);
  return cfg.offset - c - cfg.penalty_weight * pen;
}

double rover_objective(const Vec& x) { return rover_objective(RoverMap{}, x); }

double evaluate(const TaskInstance& task, const Vec& x_raw) {
  if (x_raw.size() != task.dim()) {
    throw InvalidInput("evaluate: dimension mismatch (got " + std::to_string(x_raw.size()) +
                       ", task has " + std::to_string(task.dim()) + ")");
  }
  Vec z = task.translation.size() == 0 ? x_raw : Vec(x_raw - task.translation);
  double g = 0.0;
  switch (task.base) {
    case BaseFunction::Sphere: g = -sphere(z); break;
    case BaseFunction::Rastrigin: g = -rastrigin(z); break;
    case BaseFunction::Rosenbrock: g = -rosenbrock(z); break;
    case BaseFunction::SharpRidge: g = -sharp_ridge(z); break;
    case BaseFunction::GriewankRosenbrock: g = -griewank_rosenbrock(z); break;
    case BaseFunction::Lunacek: g = -lunacek_bi_rastrigin(z); break;
    case BaseFunction::Branin: g = -branin(z); break;
    case BaseFunction::Rover2D: g = rover_objective(RoverMap(task.rover), z); break;
  }
  return task.scale * g;
}

TaskInstance identity_task(BaseFunction f, int dim) {
  TaskInstance t;
  t.base = f;
  t.space = default_space(f, dim);
  t.translation = Vec::Zero(t.space.dim());
  t.scale = 1.0;
  t.ref = {std::string(to_string(f)), 0};
  return t;
}

void TaskDistribution::validate() const {
  if (space.dim() < 1) throw ConfigError("distribution '" + name + "' has an empty search space");
  if (translation_range.lo > translation_range.hi) {
    throw ConfigError("distribution '" + name + "': translation range is inverted");
  }
  if (!(scaling_range.lo > 0.0) || scaling_range.lo > scaling_range.hi) {
    throw ConfigError("distribution '" + name + "': scaling range must be positive and ordered");
  }
  if (base == BaseFunction::Branin && space.dim() != 2) {
    throw ConfigError("branin distributions must be 2-dimensional");
  }
  if (base == BaseFunction::Rover2D && space.dim() != kRoverDim) {
    throw ConfigError("rover distributions must be 60-dimensional");
  }
  if (base == BaseFunction::GriewankRosenbrock && space.dim() < 2) {
    throw ConfigError("griewank_rosenbrock distributions need dim >= 2");
  }
}

TaskInstance sample_task(const TaskDistribution& dist, std::int64_t index) {
  if (index < 0) throw InvalidInput("task index must be non-negative");
  TaskInstance t;
  t.base = dist.base;
  t.space = dist.space;
  t.seed = derive_seed(dist.master_seed, static_cast<std::uint64_t>(index));
  t.ref = {dist.name, index};
  t.rover = dist.rover;
  Rng rng(t.seed);
  t.translation.resize(dist.space.dim());
  for (int i = 0; i < t.translation.size(); ++i) {
    t.translation[i] = uniform(rng, dist.translation_range.lo, dist.translation_range.hi);
  }
  t.scale = uniform(rng, dist.scaling_range.lo, dist.scaling_range.hi);
  return t;
}

void OptimumProxy::observe(double y) {
  if (!value_ || y > *value_) value_ = y;
}

double OptimumProxy::value() const {
  if (!value_) throw MissingData("optimum proxy requested before any observation");
  return *value_;
}

std::pair<double, double> probe_value_range(const TaskInstance& task, int n_probe,
                                            std::uint64_t seed) {
  Rng rng(derive_seed(seed, task.seed));
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int i = 0; i < n_probe; ++i) {
    double y = evaluate(task, task.space.sample_uniform(rng));
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  if (auto arg = known_argmax(task.base, task.dim())) {
    Vec x = *arg + task.translation;
    if (task.space.contains(x)) hi = std::max(hi, evaluate(task, x));
  }
  return {lo, hi};
}

}  // namespace ribbo
