#include "ribbo/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ribbo/config.hpp"

namespace ribbo {

namespace {

constexpr std::string_view kTrajectoryHeader = "#ribbo-trajectories v1";

void append_number(std::string& out, double v) {
  char buf[32];
  int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

double parse_number(std::string_view tok) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw FormatError("malformed number '" + std::string(tok) + "'");
  }
  return v;
}

template <class Int>
Int parse_int(std::string_view tok) {
  Int v{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw FormatError("malformed integer '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? next : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_name_for(BehaviorId algo, const std::string& dist) {
  return std::string(to_string(algo)) + "__" + dist + ".tsv";
}

}  // namespace

void Trajectory::validate() const {
  if (ys.empty()) throw InvalidInput("trajectory must contain at least one step");
  if (xs.size() != ys.size()) throw InvalidInput("trajectory xs and ys differ in length");
  const auto d = xs.front().size();
  for (const auto& x : xs) {
    if (x.size() != d) throw InvalidInput("trajectory points differ in dimension");
    if ((x.array() < 0.0).any() || (x.array() > 1.0).any()) {
      throw InvalidInput("trajectory x must lie in the unit box");
    }
  }
}

bool operator==(const Trajectory& a, const Trajectory& b) {
  if (!(a.task == b.task && a.algo == b.algo && a.seed == b.seed && a.ys == b.ys)) return false;
  if (a.xs.size() != b.xs.size()) return false;
  for (std::size_t i = 0; i < a.xs.size(); ++i) {
    if (a.xs[i].size() != b.xs[i].size() || a.xs[i] != b.xs[i]) return false;
  }
  return true;
}

Vec padding_x(int dim) { return Vec::Constant(dim, 0.5); }

AugmentedTrajectory augment_rtg(std::span<const Vec> xs, std::span<const double> ys,
                                double y_star) {
  if (ys.empty()) throw InvalidInput("augment_rtg requires T >= 1");
  const auto T = ys.size();
  AugmentedTrajectory aug;
  aug.xs.reserve(T + 1);
  aug.ys.reserve(T + 1);
  aug.xs.push_back(padding_x(static_cast<int>(xs.front().size())));
  aug.ys.push_back(kPaddingY);
  for (std::size_t t = 0; t < T; ++t) {
    aug.xs.push_back(xs[t]);
    aug.ys.push_back(ys[t]);
  }
  aug.rtgs.assign(T + 1, 0.0);
  for (std::size_t t = T; t >= 1; --t) aug.rtgs[t - 1] = aug.rtgs[t] + (y_star - aug.ys[t]);
  return aug;
}

AugmentedTrajectory augment_rtg(const Trajectory& traj, double y_star) {
  auto aug = augment_rtg(traj.xs, traj.ys, y_star);
  aug.algo = static_cast<int>(traj.algo);
  return aug;
}

Vec normalize_x(const Vec& x_raw, const SearchSpace& space) {
  if (!space.contains(x_raw)) throw InvalidInput("normalize_x: point outside the search space");
  return ((x_raw - space.lower()).array() / space.width().array()).matrix();
}

Vec denormalize_x(const Vec& x_unit, const SearchSpace& space) {
  if (x_unit.size() != space.dim()) throw InvalidInput("denormalize_x: dimension mismatch");
  return space.lower() + Vec(x_unit.array() * space.width().array());
}

std::string_view to_string(YNormalization m) {
  switch (m) {
    case YNormalization::Random: return "random";
    case YNormalization::Dataset: return "dataset";
    case YNormalization::None: return "none";
  }
  return "unknown";
}

YNormalization y_normalization_from_string(std::string_view name) {
  for (auto m : {YNormalization::Random, YNormalization::Dataset, YNormalization::None}) {
    if (to_string(m) == name) return m;
  }
  throw InvalidInput("unknown y normalization: " + std::string(name));
}

ScaledValues scale_y(std::span<const double> ys, double y_star, double lower, double upper) {
  ScaledValues out;
  out.lower = lower;
  out.upper = upper;
  const double inv = 1.0 / (upper - lower);
  out.ys.reserve(ys.size());
  for (double y : ys) out.ys.push_back((y - lower) * inv);
  out.y_star = (y_star - lower) * inv;
  return out;
}

ScaledValues random_scale_y(std::span<const double> ys, double y_star, double y_min,
                            double y_max, Rng& rng) {
  if (!(y_max > y_min)) throw MissingData("degenerate y range; trajectory skipped");
  const double s = y_max - y_min;
  double l = 0.0, u = 0.0;
  do {
    l = uniform(rng, y_min - 0.5 * s, y_min + 0.5 * s);
    u = uniform(rng, y_max - 0.5 * s, y_max + 0.5 * s);
  } while (u - l < 0.25 * s);
  return scale_y(ys, y_star, l, u);
}

ScaledValues normalize_y(std::span<const double> ys, double y_star, double y_min, double y_max,
                         YNormalization mode, Rng& rng) {
  switch (mode) {
    case YNormalization::Random: return random_scale_y(ys, y_star, y_min, y_max, rng);
    case YNormalization::Dataset:
      if (!(y_max > y_min)) throw MissingData("degenerate y range; trajectory skipped");
      return scale_y(ys, y_star, y_min, y_max);
    case YNormalization::None: return scale_y(ys, y_star, 0.0, 1.0);
  }
  throw InvalidInput("unknown y normalization");
}

SubsequenceWindow extract_window(const AugmentedTrajectory& aug, int start, int tau) {
  const int n = static_cast<int>(aug.ys.size());  // T + 1
  if (tau < 1 || tau > n) throw InvalidInput("subsequence length out of range");
  if (start < 0 || start + tau > n) throw InvalidInput("subsequence start out of range");
  SubsequenceWindow w;
  w.start = start;
  w.algo = aug.algo;
  const int d = aug.dim();
  for (int i = start; i < start + tau; ++i) {
    w.xs.push_back(aug.xs[i]);
    w.ys.push_back(aug.ys[i]);
    w.rtgs.push_back(aug.rtgs[i]);
    w.is_pad.push_back(i == 0 ? 1 : 0);
    const bool has = i + 1 < n;
    w.has_target.push_back(has ? 1 : 0);
    w.targets.push_back(has ? aug.xs[i + 1] : Vec::Zero(d));
  }
  return w;
}

SubsequenceWindow sample_subsequence(const AugmentedTrajectory& aug, int tau, Rng& rng) {
  const int n = static_cast<int>(aug.ys.size());
  if (tau < 1 || tau > n) throw InvalidInput("subsequence length out of range");
  const int start = std::uniform_int_distribution<int>(0, n - tau)(rng);
  return extract_window(aug, start, tau);
}

const TaskStats& Dataset::stats(const TaskRef& ref) const {
  for (const auto& t : manifest.tasks) {
    if (t.ref == ref) return t;
  }
  throw MissingData("no statistics for task " + ref.str());
}

const TaskDistribution& Dataset::distribution(const std::string& name) const {
  for (const auto& d : manifest.distributions) {
    if (d.name == name) return d;
  }
  throw ConfigError("dataset has no distribution named '" + name + "'");
}

NormalizationStats Dataset::normalization() const {
  if (manifest.tasks.empty()) throw MissingData("dataset has no task statistics");
  NormalizationStats s{0.0, 0.0};
  for (const auto& t : manifest.tasks) {
    s.mean_worst += t.y_min;
    s.mean_best += t.y_max;
  }
  s.mean_worst /= static_cast<double>(manifest.tasks.size());
  s.mean_best /= static_cast<double>(manifest.tasks.size());
  return s;
}

double optimum_proxy(const TaskRef& ref, std::span<const Trajectory> trajectories) {
  OptimumProxy proxy;
  for (const auto& t : trajectories) {
    if (t.task == ref) proxy.observe_all(t.ys);
  }
  if (proxy.empty()) throw MissingData("no trajectories recorded for task " + ref.str());
  return proxy.value();
}

std::vector<TaskStats> compute_task_stats(std::span<const Trajectory> trajectories) {
  std::map<std::pair<std::string, std::int64_t>, TaskStats> by_task;
  for (const auto& t : trajectories) {
    auto key = std::make_pair(t.task.distribution, t.task.index);
    auto [it, fresh] = by_task.try_emplace(key);
    auto& s = it->second;
    const auto [mn, mx] = std::minmax_element(t.ys.begin(), t.ys.end());
    if (fresh) {
      s.ref = t.task;
      s.y_min = *mn;
      s.y_max = *mx;
    } else {
      s.y_min = std::min(s.y_min, *mn);
      s.y_max = std::max(s.y_max, *mx);
    }
    s.optimum_proxy = s.y_max;
  }
  std::vector<TaskStats> out;
  out.reserve(by_task.size());
  for (auto& [k, v] : by_task) out.push_back(v);
  return out;
}

Dataset make_dataset(std::vector<Trajectory> trajectories,
                     std::vector<TaskDistribution> distributions, int budget,
                     std::uint64_t base_seed) {
  Dataset ds;
  ds.trajectories = std::move(trajectories);
  ds.manifest.distributions = std::move(distributions);
  ds.manifest.budget = budget;
  ds.manifest.base_seed = base_seed;
  ds.manifest.tasks = compute_task_stats(ds.trajectories);
  for (const auto& t : ds.trajectories) {
    if (std::find(ds.manifest.algorithms.begin(), ds.manifest.algorithms.end(), t.algo) ==
        ds.manifest.algorithms.end()) {
      ds.manifest.algorithms.push_back(t.algo);
    }
  }
  return ds;
}

std::string format_trajectory_line(const Trajectory& t) {
  std::string out;
  out += t.task.distribution;
  out += '\t';
  out += std::to_string(t.task.index);
  out += '\t';
  out += to_string(t.algo);
  out += '\t';
  out += std::to_string(t.seed);
  out += '\t';
  out += std::to_string(t.length());
  out += '\t';
  out += std::to_string(t.dim());
  out += '\t';
  bool first = true;
  for (const auto& x : t.xs) {
    for (int k = 0; k < x.size(); ++k) {
      if (!first) out += ' ';
      first = false;
      append_number(out, x[k]);
    }
  }
  out += '\t';
  for (std::size_t i = 0; i < t.ys.size(); ++i) {
    if (i) out += ' ';
    append_number(out, t.ys[i]);
  }
  return out;
}

Trajectory parse_trajectory_line(std::string_view line) {
  auto fields = split(line, '\t');
  if (fields.size() != 8) {
    throw FormatError("expected 8 tab-separated fields, found " + std::to_string(fields.size()));
  }
  Trajectory t;
  t.task.distribution = std::string(fields[0]);
  t.task.index = parse_int<std::int64_t>(fields[1]);
  try {
    t.algo = behavior_from_string(fields[2]);
  } catch (const InvalidInput& e) {
    throw FormatError(e.what());
  }
  t.seed = parse_int<std::uint64_t>(fields[3]);
  const int T = parse_int<int>(fields[4]);
  const int d = parse_int<int>(fields[5]);
  if (T < 1 || d < 1) throw FormatError("trajectory length and dimension must be positive");
  auto xt = split(fields[6], ' ');
  auto yt = split(fields[7], ' ');
  if (xt.size() != static_cast<std::size_t>(T) * d || yt.size() != static_cast<std::size_t>(T)) {
    throw FormatError("trajectory value count does not match its header");
  }
  t.xs.reserve(T);
  for (int i = 0; i < T; ++i) {
    Vec x(d);
    for (int k = 0; k < d; ++k) x[k] = parse_number(xt[static_cast<std::size_t>(i) * d + k]);
    t.xs.push_back(std::move(x));
  }
  for (const auto& tok : yt) t.ys.push_back(parse_number(tok));
  return t;
}

void write_trajectory_file(const std::filesystem::path& path, std::span<const Trajectory> trajs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << kTrajectoryHeader << '\n';
  for (const auto& t : trajs) out << format_trajectory_line(t) << '\n';
}

std::vector<Trajectory> parse_trajectory_text(std::string_view text, const std::string& label) {
  std::vector<Trajectory> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto next = text.find('\n', pos);
    auto line = text.substr(pos, (next == std::string_view::npos ? text.size() : next) - pos);
    pos = next == std::string_view::npos ? text.size() : next + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != kTrajectoryHeader) {
        throw FormatError(label + ":1: unsupported trajectory file header or version");
      }
      continue;
    }
    if (line.empty()) continue;
    try {
      out.push_back(parse_trajectory_line(line));
    } catch (const FormatError& e) {
      throw FormatError(label + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (line_no == 0) throw FormatError(label + ": empty trajectory file");
  return out;
}

std::vector<Trajectory> read_trajectory_file(const std::filesystem::path& path) {
  return parse_trajectory_text(read_file(path), path.string());
}

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::pair<BehaviorId, std::string>, std::vector<const Trajectory*>> groups;
  for (const auto& t : ds.trajectories) groups[{t.algo, t.task.distribution}].push_back(&t);

  DatasetManifest manifest = ds.manifest;
  manifest.files.clear();
  for (const auto& [key, members] : groups) {
    DatasetFile f;
    f.algo = key.first;
    f.distribution = key.second;
    f.path = file_name_for(key.first, key.second);
    f.n_trajectories = members.size();
    std::string body(kTrajectoryHeader);
    body += '\n';
    for (const auto* t : members) {
      body += format_trajectory_line(*t);
      body += '\n';
    }
    f.checksum = fnv1a64_hex(body);
    std::ofstream out(dir / f.path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + (dir / f.path).string());
    out << body;
    manifest.files.push_back(std::move(f));
  }
  std::ofstream mout(dir / "manifest.json", std::ios::trunc);
  if (!mout) throw FormatError("cannot write manifest in " + dir.string());
  mout << manifest_to_json(manifest).dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw FormatError("dataset directory has no manifest.json: " + dir.string());
  }
  ds.manifest = manifest_from_json(parse_json_file(manifest_path));
  for (const auto& f : ds.manifest.files) {
    const auto path = dir / f.path;
    std::string body = read_file(path);
    auto trajs = parse_trajectory_text(body, path.string());
    if (fnv1a64_hex(body) != f.checksum) {
      throw FormatError("checksum mismatch for " + path.string());
    }
    if (trajs.size() != f.n_trajectories) {
      throw FormatError("trajectory count mismatch for " + path.string());
    }
    for (auto& t : trajs) ds.trajectories.push_back(std::move(t));
  }
  return ds;
}

}  // namespace ribbo
