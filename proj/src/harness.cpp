#include "ribbo/harness.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <limits>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "ribbo/model.hpp"

namespace ribbo {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each job owns its
// output slot, so the result is independent of scheduling.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return s;
}

std::string task_file_stem(const TaskRef& r) {
  return safe_name(r.distribution) + "_" + std::to_string(r.index);
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::trunc | std::ios::binary);
  if (!out) throw FormatError("cannot write " + p.string());
  return out;
}

std::vector<TaskDistribution> distributions_from_json(const Json& j) {
  std::vector<TaskDistribution> out;
  if (!j.is_array() || j.empty()) throw ConfigError("'distributions' must be a non-empty array");
  for (const auto& d : j) out.push_back(distribution_from_json(d));
  std::set<std::string> names;
  for (const auto& d : out) {
    if (!names.insert(d.name).second) throw ConfigError("duplicate distribution name " + d.name);
  }
  return out;
}

}  // namespace

double cumulative_regret(std::span<const double> ys, double y_star) {
  double acc = 0.0;
  for (std::size_t t = ys.size(); t-- > 0;) acc = acc + (y_star - ys[t]);
  return acc;
}

double cumulative_regret(const Trajectory& traj, double y_star) {
  return cumulative_regret(traj.ys, y_star);
}

RegretCurve make_regret_curve(std::span<const double> ys, double y_star, std::string method,
                              TaskRef task, std::uint64_t seed) {
  RegretCurve c;
  c.method = std::move(method);
  c.task = std::move(task);
  c.seed = seed;
  double best = -std::numeric_limits<double>::infinity();
  double reg = 0.0;
  for (double y : ys) {
    best = std::max(best, y);
    reg += y_star - y;
    c.best_so_far.push_back(best);
    c.cumulative_regret.push_back(reg);
  }
  return c;
}

AggregateCurve normalized_curve(std::span<const RegretCurve> curves, const TaskRanges& ranges) {
  AggregateCurve agg;
  if (!curves.empty()) agg.method = curves.front().method;
  std::vector<std::vector<double>> rows;
  std::size_t len = std::numeric_limits<std::size_t>::max();
  std::set<std::string> skipped;
  for (const auto& c : curves) {
    const auto key = c.task.str();
    auto it = ranges.find(key);
    if (it == ranges.end() || !(it->second.second > it->second.first)) {
      if (skipped.insert(key).second) {
        std::cerr << "warning: task " << key << " has a degenerate value range; skipped\n";
      }
      continue;
    }
    const double lo = it->second.first;
    const double span = it->second.second - lo;
    std::vector<double> r;
    r.reserve(c.best_so_far.size());
    for (double v : c.best_so_far) r.push_back((v - lo) / span);
    len = std::min(len, r.size());
    rows.push_back(std::move(r));
  }
  agg.skipped_tasks.assign(skipped.begin(), skipped.end());
  agg.n_runs = rows.size();
  if (rows.empty()) return agg;
  agg.mean.assign(len, 0.0);
  agg.std.assign(len, 0.0);
  const double n = static_cast<double>(rows.size());
  for (std::size_t t = 0; t < len; ++t) {
    double s = 0.0;
    for (const auto& r : rows) s += r[t];
    const double m = s / n;
    double v = 0.0;
    for (const auto& r : rows) v += (r[t] - m) * (r[t] - m);
    agg.mean[t] = m;
    agg.std[t] = std::sqrt(v / n);
  }
  return agg;
}

std::vector<LeaderboardEntry> leaderboard(std::span<const AggregateCurve> curves) {
  std::vector<LeaderboardEntry> out;
  for (const auto& c : curves) {
    if (c.mean.empty()) continue;
    out.push_back({c.method, c.mean.back(), c.std.back()});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.final_mean > b.final_mean; });
  return out;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidInput("spearman needs two equal samples");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------

void GenDataConfig::validate() const {
  if (distributions.empty()) throw ConfigError("gen-data needs at least one distribution");
  if (algorithms.empty()) throw ConfigError("gen-data needs at least one algorithm");
  if (tasks_per_distribution < 1 || runs_per_task < 1 || budget < 1) {
    throw ConfigError("tasks_per_distribution, runs_per_task and budget must be positive");
  }
  if (gp_ei_tasks < 0 || gp_ei_runs_per_task < 0) throw ConfigError("gp_ei quota must be >= 0");
  for (const auto& d : distributions) d.validate();
}

GenDataConfig gen_data_config_from_json(const Json& j) {
  GenDataConfig c;
  c.distributions = distributions_from_json(j.at("distributions"));
  if (j.contains("algorithms")) {
    for (const auto& a : j.at("algorithms")) {
      try {
        c.algorithms.push_back(behavior_from_string(a.get<std::string>()));
      } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
      }
    }
  } else {
    c.algorithms = all_behaviors();
  }
  c.tasks_per_distribution = get_or(j, "tasks_per_distribution", c.tasks_per_distribution);
  c.runs_per_task = get_or(j, "runs_per_task", c.runs_per_task);
  c.budget = get_or(j, "budget", c.budget);
  c.base_seed = get_or(j, "base_seed", c.base_seed);
  if (j.contains("gp_ei")) {
    c.gp_ei_tasks = get_or(j.at("gp_ei"), "tasks", c.gp_ei_tasks);
    c.gp_ei_runs_per_task = get_or(j.at("gp_ei"), "runs_per_task", c.gp_ei_runs_per_task);
  }
  if (j.contains("behavior_options")) c.behavior_options = behavior_options_from_json(j.at("behavior_options"));
  c.behavior_options.budget_hint = c.budget;
  c.threads = get_or(j, "threads", c.threads);
  c.validate();
  return c;
}

Dataset generate_data(const GenDataConfig& cfg) {
  cfg.validate();
  struct Job {
    const TaskDistribution* dist;
    std::int64_t task_index;
    BehaviorId algo;
    int run;
  };
  std::vector<Job> jobs;
  for (const auto& d : cfg.distributions) {
    for (auto algo : cfg.algorithms) {
      const bool gp = algo == BehaviorId::GpEi;
      const int n_tasks = gp ? std::min(cfg.gp_ei_tasks, cfg.tasks_per_distribution) : cfg.tasks_per_distribution;
      const int n_runs = gp ? cfg.gp_ei_runs_per_task : cfg.runs_per_task;
      for (int k = 0; k < n_tasks; ++k) {
        for (int r = 0; r < n_runs; ++r) jobs.push_back({&d, k, algo, r});
      }
    }
  }
  std::vector<TaskInstance> tasks;
  std::map<std::string, std::size_t> task_slot;
  for (const auto& d : cfg.distributions) {
    for (int k = 0; k < cfg.tasks_per_distribution; ++k) {
      task_slot[TaskRef{d.name, k}.str()] = tasks.size();
      tasks.push_back(sample_task(d, k));
    }
  }
  std::vector<Trajectory> out(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
    const auto& job = jobs[i];
    const auto& task = tasks[task_slot.at(TaskRef{job.dist->name, job.task_index}.str())];
    const std::uint64_t stream = derive_seed(cfg.base_seed, static_cast<std::uint64_t>(job.algo) + 1);
    const std::uint64_t seed = derive_seed(derive_seed(stream, task.seed), static_cast<std::uint64_t>(job.run));
    auto behavior = make_behavior(job.algo, task.space, seed, cfg.behavior_options);
    auto pairs = run_behavior(*behavior, task, cfg.budget);
    Trajectory& t = out[i];
    t.task = task.ref;
    t.algo = job.algo;
    t.seed = seed;
    for (auto& [x, y] : pairs) {
      t.xs.push_back(normalize_x(x, task.space));
      t.ys.push_back(y);
    }
  });
  return make_dataset(std::move(out), cfg.distributions, cfg.budget, cfg.base_seed);
}

// ---------------------------------------------------------------------------

void SuiteConfig::validate() const {
  if (distributions.empty()) throw ConfigError("eval needs at least one distribution");
  if (methods.empty()) throw ConfigError("eval needs at least one method");
  if (tasks_per_distribution < 1 || seeds < 1 || budget < 1) {
    throw ConfigError("tasks_per_distribution, seeds and budget must be positive");
  }
  if (contour_resolution < 2) throw ConfigError("contour_resolution must be >= 2");
  if (n_probe < 0) throw ConfigError("n_probe must be >= 0");
  std::set<std::string> names;
  for (const auto& m : methods) {
    if (m.name.empty()) throw ConfigError("method name must not be empty");
    if (!names.insert(m.name).second) throw ConfigError("duplicate method name " + m.name);
    if (m.behavior.has_value() == m.checkpoint.has_value()) {
      throw ConfigError("method " + m.name + " needs exactly one of 'behavior' or 'checkpoint'");
    }
  }
}

SuiteConfig suite_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  SuiteConfig c;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  if (j.contains("distributions")) {
    c.distributions = distributions_from_json(j.at("distributions"));
  } else if (j.contains("dataset")) {
    const auto manifest = manifest_from_json(parse_json_file(resolve(j.at("dataset").get<std::string>()) / "manifest.json"));
    c.distributions = manifest.distributions;
  }
  c.tasks_per_distribution = get_or(j, "tasks_per_distribution", c.tasks_per_distribution);
  c.seeds = get_or(j, "seeds", c.seeds);
  c.budget = get_or(j, "budget", c.budget);
  c.seed = get_or(j, "seed", c.seed);
  c.test_task_offset = get_or(j, "test_task_offset", c.test_task_offset);
  c.n_probe = get_or(j, "n_probe", c.n_probe);
  c.contour_resolution = get_or(j, "contour_resolution", c.contour_resolution);
  c.threads = get_or(j, "threads", c.threads);
  if (j.contains("behavior_options")) c.behavior_options = behavior_options_from_json(j.at("behavior_options"));
  c.behavior_options.budget_hint = c.budget;
  if (!j.contains("methods")) throw ConfigError("eval config needs 'methods'");
  for (const auto& m : j.at("methods")) {
    MethodSpec s;
    if (m.is_string()) {
      s.name = m.get<std::string>();
      s.behavior = behavior_from_string(s.name);
    } else {
      s.name = require<std::string>(m, "name");
      if (m.contains("behavior")) s.behavior = behavior_from_string(m.at("behavior").get<std::string>());
      if (m.contains("checkpoint")) s.checkpoint = resolve(m.at("checkpoint").get<std::string>());
      s.strategy = RtgStrategy::parse(get_or<std::string>(m, "strategy", "hrr"));
      s.sampling = sampling_mode_from_string(get_or<std::string>(m, "sampling", "stochastic"));
      s.context_limit = get_or(m, "context_limit", 0);
      s.algo_id = get_or(m, "algo_id", -1);
    }
    c.methods.push_back(std::move(s));
  }
  c.validate();
  return c;
}

std::vector<TaskInstance> suite_tasks(const SuiteConfig& cfg) {
  std::vector<TaskInstance> tasks;
  for (const auto& d : cfg.distributions) {
    for (int k = 0; k < cfg.tasks_per_distribution; ++k) {
      tasks.push_back(sample_task(d, cfg.test_task_offset + k));
    }
  }
  return tasks;
}

SuiteResult run_suite(const SuiteConfig& cfg) {
  cfg.validate();
  SuiteResult res;
  res.tasks = suite_tasks(cfg);

  std::vector<std::optional<ModelCheckpoint>> models(cfg.methods.size());
  std::vector<std::string> load_errors(cfg.methods.size());
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    if (!cfg.methods[m].checkpoint) continue;
    try {
      models[m] = load_checkpoint(*cfg.methods[m].checkpoint);
    } catch (const Error& e) {
      load_errors[m] = e.what();
    }
  }

  const std::size_t n_tasks = res.tasks.size();
  const std::size_t n_seeds = static_cast<std::size_t>(cfg.seeds);
  const std::size_t n_jobs = cfg.methods.size() * n_tasks * n_seeds;
  res.runs.resize(n_jobs);
  parallel_for(n_jobs, cfg.threads, [&](std::size_t i) {
    const std::size_t m = i / (n_tasks * n_seeds);
    const std::size_t k = (i / n_seeds) % n_tasks;
    const std::size_t s = i % n_seeds;
    const auto& spec = cfg.methods[m];
    const auto& task = res.tasks[k];
    RunRecord& rec = res.runs[i];
    rec.method = spec.name;
    rec.task = task.ref;
    rec.seed_index = static_cast<int>(s);
    rec.seed = derive_seed(derive_seed(cfg.seed, task.seed), s);
    try {
      if (spec.behavior) {
        auto b = make_behavior(*spec.behavior, task.space, rec.seed, cfg.behavior_options);
        for (auto& [x, y] : run_behavior(*b, task, cfg.budget)) {
          rec.xs.push_back(std::move(x));
          rec.ys.push_back(y);
        }
      } else {
        if (!models[m]) throw ConfigError(load_errors[m]);
        InferenceConfig ic;
        ic.budget = cfg.budget;
        ic.context_limit = spec.context_limit;
        ic.strategy = spec.strategy;
        ic.sampling = spec.sampling;
        ic.seed = rec.seed;
        ic.algo_id = spec.algo_id;
        auto r = run_optimization(*models[m], task, ic);
        for (std::size_t t = 0; t < r.trajectory.xs.size(); ++t) {
          rec.xs.push_back(denormalize_x(r.trajectory.xs[t], task.space));
          rec.ys.push_back(r.trajectory.ys[t]);
        }
      }
    } catch (const std::exception& e) {
      rec.xs.clear();
      rec.ys.clear();
      rec.error = e.what();
    }
  });

  for (std::size_t k = 0; k < n_tasks; ++k) {
    const auto& task = res.tasks[k];
    auto [lo, hi] = cfg.n_probe > 0 ? probe_value_range(task, cfg.n_probe, cfg.seed)
                                    : std::pair{std::numeric_limits<double>::infinity(),
                                                -std::numeric_limits<double>::infinity()};
    for (const auto& r : res.runs) {
      if (!(r.task == task.ref)) continue;
      for (double y : r.ys) {
        lo = std::min(lo, y);
        hi = std::max(hi, y);
      }
    }
    res.ranges[task.ref.str()] = {lo, hi};
  }

  for (const auto& spec : cfg.methods) {
    std::vector<RegretCurve> curves;
    for (const auto& r : res.runs) {
      if (r.method != spec.name || !r.error.empty()) continue;
      const double y_star = res.ranges.at(r.task.str()).second;
      curves.push_back(make_regret_curve(r.ys, y_star, r.method, r.task, r.seed));
    }
    AggregateCurve agg = normalized_curve(curves, res.ranges);
    agg.method = spec.name;
    res.curves.push_back(std::move(agg));
  }
  res.board = leaderboard(res.curves);
  return res;
}

void write_run_file(const RunRecord& r, const std::filesystem::path& path) {
  auto out = open_out(path);
  const std::size_t d = r.xs.empty() ? 0 : static_cast<std::size_t>(r.xs.front().size());
  out << "t";
  for (std::size_t i = 0; i < d; ++i) out << ",x" << i;
  out << ",y\n";
  for (std::size_t t = 0; t < r.ys.size(); ++t) {
    out << t + 1;
    for (std::size_t i = 0; i < d; ++i) out << ',' << fmt(r.xs[t][static_cast<Eigen::Index>(i)]);
    out << ',' << fmt(r.ys[t]) << '\n';
  }
}

void write_contour_grid(const TaskInstance& task, int resolution, const std::filesystem::path& path) {
  if (task.dim() != 2) throw InvalidInput("contour grids need a 2-D task");
  if (resolution < 2) throw InvalidInput("contour resolution must be >= 2");
  auto out = open_out(path);
  out << "x0,x1,y\n";
  const Vec lo = task.space.lower();
  const Vec w = task.space.width();
  Vec x(2);
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      x[0] = lo[0] + w[0] * i / (resolution - 1);
      x[1] = lo[1] + w[1] * j / (resolution - 1);
      out << fmt(x[0]) << ',' << fmt(x[1]) << ',' << fmt(evaluate(task, x)) << '\n';
    }
  }
}

SuiteResult run_suite(const SuiteConfig& cfg, const std::filesystem::path& out_dir) {
  SuiteResult res = run_suite(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "curves");
  fs::create_directories(out_dir / "runs");

  for (const auto& c : res.curves) {
    auto out = open_out(out_dir / "curves" / (safe_name(c.method) + ".csv"));
    out << "step,mean,std\n";
    for (std::size_t t = 0; t < c.mean.size(); ++t) {
      out << t + 1 << ',' << fmt(c.mean[t]) << ',' << fmt(c.std[t]) << '\n';
    }
  }
  {
    auto out = open_out(out_dir / "leaderboard.csv");
    out << "rank,method,final_mean,final_std\n";
    for (std::size_t i = 0; i < res.board.size(); ++i) {
      out << i + 1 << ',' << res.board[i].method << ',' << fmt(res.board[i].final_mean) << ','
          << fmt(res.board[i].final_std) << '\n';
    }
  }
  bool any_failure = false;
  for (const auto& r : res.runs) {
    if (!r.error.empty()) {
      any_failure = true;
      continue;
    }
    write_run_file(r, out_dir / "runs" /
                          (safe_name(r.method) + "__" + task_file_stem(r.task) + "__s" +
                           std::to_string(r.seed_index) + ".csv"));
  }
  if (any_failure) {
    auto out = open_out(out_dir / "failures.csv");
    out << "method,task,seed,error\n";
    for (const auto& r : res.runs) {
      if (r.error.empty()) continue;
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << r.method << ',' << r.task.str() << ',' << r.seed_index << ',' << msg << '\n';
    }
  }
  {
    auto out = open_out(out_dir / "ranges.csv");
    out << "task,y_min,y_max\n";
    for (const auto& t : res.tasks) {
      const auto& [lo, hi] = res.ranges.at(t.ref.str());
      out << t.ref.str() << ',' << fmt(lo) << ',' << fmt(hi) << '\n';
    }
  }
  for (const auto& task : res.tasks) {
    if (task.dim() != 2) continue;
    fs::create_directories(out_dir / "contour");
    const auto stem = task_file_stem(task.ref);
    write_contour_grid(task, cfg.contour_resolution, out_dir / "contour" / (stem + "__grid.csv"));
    auto out = open_out(out_dir / "contour" / (stem + "__points.csv"));
    out << "method,seed,t,x0,x1,y\n";
    for (const auto& r : res.runs) {
      if (!(r.task == task.ref) || !r.error.empty()) continue;
      for (std::size_t t = 0; t < r.ys.size(); ++t) {
        out << r.method << ',' << r.seed_index << ',' << t + 1 << ',' << fmt(r.xs[t][0]) << ','
            << fmt(r.xs[t][1]) << ',' << fmt(r.ys[t]) << '\n';
      }
    }
  }
  return res;
}

PlotKind plot_kind_from_string(std::string_view name) {
  if (name == "curve") return PlotKind::Curve;
  if (name == "contour") return PlotKind::Contour;
  throw ConfigError("unknown plot kind: " + std::string(name));
}

std::vector<std::filesystem::path> plot_data(const std::filesystem::path& run_dir, PlotKind kind) {
  namespace fs = std::filesystem;
  std::vector<fs::path> written;
  const fs::path plot_dir = run_dir / "plot";
  auto sorted_files = [](const fs::path& dir, const std::string& suffix) {
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) return files;
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    return files;
  };
  if (kind == PlotKind::Curve) {
    const auto files = sorted_files(run_dir / "curves", ".csv");
    if (files.empty()) throw MissingData("no curves found under " + (run_dir / "curves").string());
    fs::create_directories(plot_dir);
    const auto path = plot_dir / "curves_long.csv";
    auto out = open_out(path);
    out << "method,step,mean,lower,upper\n";
    for (const auto& f : files) {
      std::ifstream in(f);
      std::string line;
      std::getline(in, line);
      const auto method = f.stem().string();
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string step, mean, sd;
        std::getline(ss, step, ',');
        std::getline(ss, mean, ',');
        std::getline(ss, sd, ',');
        const double m = std::stod(mean);
        const double s = std::stod(sd);
        out << method << ',' << step << ',' << mean << ',' << fmt(m - s) << ',' << fmt(m + s) << '\n';
      }
    }
    written.push_back(path);
  } else {
    const auto grids = sorted_files(run_dir / "contour", "__grid.csv");
    if (grids.empty()) throw MissingData("no contour grids found under " + (run_dir / "contour").string());
    fs::create_directories(plot_dir);
    for (const auto& g : grids) {
      std::ifstream in(g);
      std::string line;
      std::getline(in, line);
      std::vector<std::array<double, 3>> pts;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<double, 3> p{};
        std::stringstream ss(line);
        std::string tok;
        for (auto& v : p) {
          std::getline(ss, tok, ',');
          v = std::stod(tok);
        }
        pts.push_back(p);
      }
      const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pts.size()))));
      if (n * n != pts.size()) throw FormatError(g.string() + " is not a square grid");
      auto stem = g.filename().string();
      stem = stem.substr(0, stem.size() - std::string("__grid.csv").size());
      const auto path = plot_dir / (stem + "_matrix.dat");
      auto out = open_out(path);
      out << "# rows: x1 ascending, columns: x0 ascending; x0 " << fmt(pts.front()[0]) << ".."
          << fmt(pts.back()[0]) << ", x1 " << fmt(pts.front()[1]) << ".." << fmt(pts.back()[1]) << '\n';
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) out << (i ? " " : "") << fmt(pts[i * n + j][2]);
        out << '\n';
      }
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace ribbo
