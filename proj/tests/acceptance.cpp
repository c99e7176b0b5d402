// Acceptance runner: one PASS/FAIL line per criterion.
//
//   ribbo_acceptance [--only 1,2,7] [--workdir DIR] [--threads N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "CLI11.hpp"
#include "ribbo/harness.hpp"
#include "ribbo/trainer.hpp"

using namespace ribbo;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> random_ys(int n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> ys(n);
  for (double& y : ys) y = g(rng);
  return ys;
}

Trajectory random_trajectory(int T, int dim, Rng& rng) {
  Trajectory t;
  t.task = {"acc", 0};
  t.ys = random_ys(T, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < T; ++i) t.xs.push_back(Vec::NullaryExpr(dim, [&] { return u(rng); }));
  return t;
}

TaskDistribution sphere2d() {
  TaskDistribution d;
  d.name = "sphere2d";
  d.base = BaseFunction::Sphere;
  d.space = default_space(d.base, 2);
  d.translation_range = {-1.0, 1.0};
  d.scaling_range = {0.5, 2.0};
  d.master_seed = 606;
  return d;
}

TaskDistribution rastrigin2d() {
  TaskDistribution d;
  d.name = "rastrigin2d";
  d.base = BaseFunction::Rastrigin;
  d.space = default_space(d.base, 2);
  d.translation_range = {-2.0, 2.0};
  d.scaling_range = {0.5, 2.0};
  d.master_seed = 2024;
  return d;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int T = 1 + static_cast<int>(rng() % 200);
    const Trajectory t = random_trajectory(T, 2, rng);
    const double y_star = *std::max_element(t.ys.begin(), t.ys.end());
    const auto aug = augment_rtg(t, y_star);
    for (int s = 0; s <= T; ++s) {
      long double want = 0.0L;
      for (int k = s + 1; k <= T; ++k) want += static_cast<long double>(y_star) - t.ys[k - 1];
      worst = std::max(worst, static_cast<double>(std::abs(aug.rtgs[s] - want)));
    }
  }
  return {worst <= 1e-12, fmt("max |rtg - oracle| = %.3g", worst)};
}

Outcome criterion2() {
  ModelConfig mc = model_preset("tiny", 2, 31);
  mc.embed_dim = 16;
  mc.n_heads = 2;
  const SequenceModel model(mc, 202);
  const TaskDistribution dist = sphere2d();
  double worst = 0.0, worst_tele = 0.0;
  std::size_t exact = 0, total = 0;
  for (int run = 0; run < 100; ++run) {
    const TaskInstance task = sample_task(dist, run);
    const auto [lo, hi] = probe_value_range(task, 500, 7);
    const NormalizedObjective f(task, NormalizationStats{lo, hi});
    auto h = InferenceHistory::start(2);
    Rng rng(derive_seed(202, run));
    for (int t = 0; t < 30; ++t) {
      hrr_step(h, model, f, 1.0, 31, SamplingMode::Stochastic, rng);
      const auto& a = h.aug;
      const auto fresh = augment_rtg(std::span<const Vec>(a.xs.data() + 1, a.xs.size() - 1),
                                     std::span<const double>(a.ys.data() + 1, a.ys.size() - 1), 1.0);
      for (std::size_t i = 0; i < a.rtgs.size(); ++i) worst = std::max(worst, std::abs(a.rtgs[i] - fresh.rtgs[i]));
    }
    for (std::size_t i = 1; i < h.aug.rtgs.size(); ++i) {
      const double lhs = h.aug.rtgs[i - 1] - h.aug.rtgs[i];
      const double rhs = 1.0 - h.aug.ys[i];
      worst_tele = std::max(worst_tele, std::abs(lhs - rhs));
      exact += lhs == rhs ? 1 : 0;
      ++total;
    }
  }
  // Differences of rounded sums are not bit-exact in general; 1e-12 is the
  // tolerance applied to the telescoping identity.
  return {worst <= 1e-10 && worst_tele <= 1e-12,
          fmt("max |HRR - Eq3| = %.3g; telescoping max dev %.3g (%zu/%zu bit-exact)", worst,
              worst_tele, exact, total)};
}

Outcome criterion3() {
  ModelConfig mc = model_preset("desk", 2, 31);
  const SequenceModel model(mc, 303);
  Rng rng(303);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto token = [&](bool pad) {
    Token t;
    t.x = Vec::NullaryExpr(2, [&] { return u(rng); });
    t.y = u(rng);
    t.rtg = 5.0 * u(rng);
    t.is_pad = pad;
    return t;
  };
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const int L = 2 + static_cast<int>(rng() % 30);
    std::vector<Token> seq;
    for (int i = 0; i < L; ++i) seq.push_back(token(i == 0));
    const int t = static_cast<int>(rng() % (L - 1));
    auto mod = seq;
    const int k = t + 1 + static_cast<int>(rng() % (L - t - 1));
    mod[k] = token(false);
    const auto a = model.forward(make_batch({seq}));
    const auto b = model.forward(make_batch({mod}));
    for (int r = 0; r <= t; ++r) {
      worst = std::max(worst, (a.mean.row(r) - b.mean.row(r)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (a.std.row(r) - b.std.row(r)).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-6, fmt("max change at positions <= t: %.3g", worst)};
}

Outcome criterion4() {
  ModelConfig mc = model_preset("tiny", 2, 4);  // embed 8, 1 layer, 2 heads
  double worst = 0.0;
  std::string worst_name;
  for (auto variant : {ModelVariant::Ribbo, ModelVariant::BehaviorCloning, ModelVariant::AlgoId}) {
    mc.variant = variant;
    SequenceModel model(mc, 404);
    Rng rng(404);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<Token>> seqs(2);
    for (auto& s : seqs) {
      for (int i = 0; i < 4; ++i) {
        s.push_back({Vec::NullaryExpr(2, [&] { return u(rng); }), u(rng), 2 * u(rng), i == 0});
      }
    }
    const TokenBatch batch = make_batch(seqs, variant == ModelVariant::AlgoId ? std::vector<int>{0, 6}
                                                                               : std::vector<int>{});
    const Mat targets = Mat::NullaryExpr(8, 2, [&] { return u(rng); });
    const std::vector<std::uint8_t> mask{1, 1, 1, 0, 1, 1, 1, 0};
    ParamStore g = model.params().zeros_like();
    loss_and_gradient(model, batch, targets, mask, &g);
    auto& w = model.params().data();
    for (const auto& e : model.params().entries()) {
      double d2 = 0.0, n2 = 0.0, a2 = 0.0;
      for (std::size_t i = e.offset; i < e.offset + e.size(); ++i) {
        const double keep = w[i];
        w[i] = keep + 1e-4;
        const double lp = loss_and_gradient(model, batch, targets, mask, nullptr);
        w[i] = keep - 1e-4;
        const double lm = loss_and_gradient(model, batch, targets, mask, nullptr);
        w[i] = keep;
        const double num = (lp - lm) / 2e-4;
        d2 += (num - g.data()[i]) * (num - g.data()[i]);
        n2 += num * num;
        a2 += g.data()[i] * g.data()[i];
      }
      const double scale = std::max(std::sqrt(n2), std::sqrt(a2));
      const double rel = scale > 0.0 ? std::sqrt(d2) / scale : 0.0;
      if (rel >= worst) {
        worst = rel;
        worst_name = std::string(to_string(variant)) + "/" + e.name;
      }
    }
  }
  return {worst < 1e-4, fmt("worst per-tensor relative error %.3g (%s)", worst, worst_name.c_str())};
}

Outcome criterion5() {
  // NLL at the mean with unit std.
  Prediction p;
  p.mean = Mat::Constant(1, 3, 0.25);
  p.std = Mat::Ones(1, 3);
  const std::vector<std::uint8_t> mask{1};
  const double nll_err = std::abs(nll_loss(p, p.mean, mask) - 1.5 * std::log(2 * M_PI));

  // EI against trapezoid quadrature of max(0, y - best) under N(1, 1).
  const int n = 400000;
  const double hi = 13.0, h = hi / n;
  double quad = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double y = i * h;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    quad += w * y * std::exp(-0.5 * (y - 1) * (y - 1)) / std::sqrt(2 * M_PI);
  }
  quad *= h;
  const double ei = expected_improvement(1.0, 1.0, 0.0);
  const double ei_err = std::max(std::abs(ei - quad), std::abs(ei - 1.08332));

  // GP posterior against a dense explicit inverse.
  Rng rng(505);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double gp_err = 0.0;
  for (int d = 0; d < 20; ++d) {
    const int m = 1 + static_cast<int>(rng() % 8);
    const double ell = 0.1 + 0.4 * u(rng);
    const double s2 = 0.5 + u(rng);
    const double noise = 0.01;
    std::vector<Vec> xs;
    Vec ys(m);
    for (int i = 0; i < m; ++i) {
      xs.push_back(Vec::Constant(1, u(rng)));
      ys[i] = 2 * u(rng) - 1;
    }
    GpModel gp(MaternKernel{ell, s2}, noise);
    gp.fit(xs, ys);
    auto k = [&](double a, double b) {
      const double r = std::abs(a - b) / ell;
      return s2 * (1 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r);
    };
    Mat K(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) K(i, j) = k(xs[i][0], xs[j][0]) + (i == j ? noise + gp.jitter() : 0.0);
    const Mat Kinv = K.inverse();
    for (int q = 0; q < 10; ++q) {
      const double xq = u(rng);
      Vec kx(m);
      for (int i = 0; i < m; ++i) kx[i] = k(xq, xs[i][0]);
      const auto post = gp.posterior(Vec::Constant(1, xq));
      gp_err = std::max(gp_err, std::abs(post.mean - kx.dot(Kinv * ys)));
      gp_err = std::max(gp_err, std::abs(post.variance - std::max(0.0, k(xq, xq) - kx.dot(Kinv * kx))));
    }
  }
  return {nll_err <= 1e-10 && ei_err <= 1e-4 && gp_err <= 1e-10,
          fmt("NLL err %.3g; EI %.6f (quadrature %.6f); GP err %.3g", nll_err, ei, quad, gp_err)};
}

Outcome criterion6(int threads) {
  SuiteConfig cfg;
  cfg.distributions = {sphere2d()};
  cfg.tasks_per_distribution = 1;
  cfg.seeds = 21;
  cfg.budget = 100;
  cfg.seed = 606;
  cfg.n_probe = 5000;
  cfg.threads = threads;
  cfg.behavior_options.budget_hint = 100;
  for (auto id : all_behaviors()) {
    if (id == BehaviorId::ShuffledGrid) continue;
    MethodSpec m;
    m.name = std::string(to_string(id));
    m.behavior = id;
    cfg.methods.push_back(m);
  }
  const SuiteResult res = run_suite(cfg);
  const auto& task = res.tasks.front();
  const double y_opt = 0.0;  // sphere maximum, reachable inside the box
  const double y_lo = res.ranges.at(task.ref.str()).first;
  std::map<std::string, double> med;
  for (const auto& m : cfg.methods) {
    std::vector<double> finals;
    for (const auto& r : res.runs) {
      if (r.method != m.name || !r.error.empty()) continue;
      finals.push_back((*std::max_element(r.ys.begin(), r.ys.end()) - y_lo) / (y_opt - y_lo));
    }
    med[m.name] = finals.size() == 21 ? median(finals) : -1.0;
  }
  bool ok = true;
  std::ostringstream os;
  for (const auto& [name, v] : med) {
    os << name << '=' << fmt("%.5f", v) << ' ';
    if (name != "random_search") ok = ok && v > med["random_search"];
  }
  ok = ok && 1.0 - med["cma_es"] <= 1e-2 && 1.0 - med["gp_ei"] <= 1e-2;
  return {ok, "median normalized best: " + os.str()};
}

// Shared state for criteria 7-9.
struct DeskSetup {
  bool ready = false;
  std::string error;
  Dataset data;
  fs::path ribbo_ckpt, bc_ckpt;
  std::vector<TaskInstance> test_tasks;
};

DeskSetup build_desk_setup(const fs::path& work, int threads) {
  DeskSetup s;
  try {
    fs::create_directories(work);
    GenDataConfig g;
    g.distributions = {rastrigin2d()};
    g.algorithms = {BehaviorId::RandomSearch, BehaviorId::HillClimbing, BehaviorId::Firefly};
    g.tasks_per_distribution = 20;
    g.runs_per_task = 100;
    g.budget = 60;
    g.base_seed = 11;
    g.behavior_options.budget_hint = 60;
    g.threads = threads;
    auto t0 = std::chrono::steady_clock::now();
    s.data = generate_data(g);
    write_dataset(s.data, work / "dataset");
    std::printf("  [desk] generated %zu trajectories in %.1f s\n", s.data.trajectories.size(),
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

    for (auto variant : {ModelVariant::Ribbo, ModelVariant::BehaviorCloning}) {
      TrainerConfig tc;
      tc.batch_size = 32;
      tc.total_steps = 5000;
      tc.peak_lr = 1e-3;
      tc.tau = 30;
      tc.seed = 1;
      tc.eval_every = 250;
      tc.variant = variant;
      const ModelConfig mc = model_preset("desk", 2, tc.tau + 1);
      TrainingOutputs io;
      const fs::path ck = work / (variant == ModelVariant::Ribbo ? "ribbo.ckpt" : "bc.ckpt");
      io.checkpoint = ck;
      io.metrics = work / (ck.stem().string() + ".metrics.csv");
      t0 = std::chrono::steady_clock::now();
      run_training(s.data, mc, tc, io);
      std::printf("  [desk] trained %s in %.1f s\n", std::string(to_string(variant)).c_str(),
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      (variant == ModelVariant::Ribbo ? s.ribbo_ckpt : s.bc_ckpt) = ck;
    }
    s.ready = true;
  } catch (const std::exception& e) {
    s.error = e.what();
  }
  return s;
}

SuiteConfig desk_suite(const DeskSetup& s, int threads) {
  SuiteConfig cfg;
  cfg.distributions = {rastrigin2d()};
  cfg.tasks_per_distribution = 3;
  cfg.seeds = 5;
  cfg.budget = 60;
  cfg.seed = 707;
  cfg.threads = threads;
  cfg.behavior_options.budget_hint = 60;
  MethodSpec ribbo;
  ribbo.name = "ribbo_hrr";
  ribbo.checkpoint = s.ribbo_ckpt;
  MethodSpec bc;
  bc.name = "bc";
  bc.checkpoint = s.bc_ckpt;
  cfg.methods = {ribbo, bc};
  for (auto id : {BehaviorId::RandomSearch, BehaviorId::HillClimbing, BehaviorId::Firefly}) {
    MethodSpec m;
    m.name = std::string(to_string(id));
    m.behavior = id;
    cfg.methods.push_back(m);
  }
  return cfg;
}

Outcome criterion7(const DeskSetup& s, const fs::path& work, int threads) {
  if (!s.ready) return {false, "setup failed: " + s.error};
  const SuiteResult res = run_suite(desk_suite(s, threads), work / "eval");
  std::map<std::string, double> final_mean;
  std::ostringstream os;
  for (const auto& e : res.board) {
    final_mean[e.method] = e.final_mean;
    os << e.method << '=' << fmt("%.4f", e.final_mean) << ' ';
  }
  for (const auto& r : res.runs) {
    if (!r.error.empty()) return {false, "run failed: " + r.error};
  }
  const double best_behavior =
      std::max({final_mean["random_search"], final_mean["hill_climbing"], final_mean["firefly"]});
  const bool ok = final_mean["ribbo_hrr"] >= final_mean["bc"] &&
                  final_mean["ribbo_hrr"] >= 0.95 * best_behavior;
  return {ok, "final normalized best-so-far: " + os.str()};
}

struct ModelRuns {
  std::vector<double> regret;     // normalized Reg_T per run
  std::vector<double> final_best; // normalized final best-so-far per run
};

ModelRuns run_model(const ModelCheckpoint& ck, const std::vector<TaskInstance>& tasks,
                    const TaskRanges& ranges, RtgStrategy strategy, std::uint64_t seed) {
  ModelRuns out;
  for (const auto& task : tasks) {
    for (int s = 0; s < 5; ++s) {
      InferenceConfig ic;
      ic.budget = 60;
      ic.strategy = strategy;
      ic.seed = derive_seed(derive_seed(seed, task.seed), s);
      const auto r = run_optimization(ck, task, ic);
      double reg = 0.0;
      for (int t = ic.budget - 1; t >= 0; --t) reg += 1.0 - r.steps[t].y_norm;
      out.regret.push_back(reg);
      const auto [lo, hi] = ranges.at(task.ref.str());
      const double best = *std::max_element(r.trajectory.ys.begin(), r.trajectory.ys.end());
      out.final_best.push_back((best - lo) / (hi - lo));
    }
  }
  return out;
}

TaskRanges probe_ranges(const std::vector<TaskInstance>& tasks) {
  TaskRanges r;
  for (const auto& t : tasks) r[t.ref.str()] = probe_value_range(t, 2000, 707);
  return r;
}

Outcome criterion8(const DeskSetup& s) {
  if (!s.ready) return {false, "setup failed: " + s.error};
  const ModelCheckpoint ck = load_checkpoint(s.ribbo_ckpt);
  const NormalizationStats ns = ck.normalization;
  std::vector<double> train_reg;
  for (const auto& t : s.data.trajectories) {
    double reg = 0.0;
    for (int i = t.length() - 1; i >= 0; --i) {
      reg += 1.0 - (t.ys[i] - ns.mean_worst) / (ns.mean_best - ns.mean_worst);
    }
    train_reg.push_back(reg);
  }
  const double r_med = median(train_reg);
  const double r_max = *std::max_element(train_reg.begin(), train_reg.end());
  SuiteConfig cfg = desk_suite(s, 1);
  const auto tasks = suite_tasks(cfg);
  const auto ranges = probe_ranges(tasks);
  std::vector<double> r0s, regs;
  std::ostringstream os;
  for (double r0 : {0.0, r_med, r_max}) {
    const auto runs = run_model(ck, tasks, ranges, RtgStrategy::naive(r0), 808);
    double mean = 0.0;
    for (double v : runs.regret) {
      r0s.push_back(r0);
      regs.push_back(v);
      mean += v / runs.regret.size();
    }
    os << fmt("R0=%.2f -> mean Reg_T %.3f; ", r0, mean);
  }
  const double rho = spearman(r0s, regs);
  return {rho > 0.0, os.str() + fmt("Spearman %.3f", rho)};
}

Outcome criterion9(const DeskSetup& s) {
  if (!s.ready) return {false, "setup failed: " + s.error};
  const ModelCheckpoint ck = load_checkpoint(s.ribbo_ckpt);
  const auto tasks = suite_tasks(desk_suite(s, 1));
  const auto ranges = probe_ranges(tasks);
  auto mean = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x / v.size();
    return m;
  };
  const double hrr = mean(run_model(ck, tasks, ranges, RtgStrategy::hrr(), 909).final_best);
  const double naive = mean(run_model(ck, tasks, ranges, RtgStrategy::naive(0.0), 909).final_best);
  return {hrr >= naive, fmt("mean final normalized best: HRR %.4f, naive(R0=0) %.4f", hrr, naive)};
}

Outcome criterion10(const fs::path& work) {
  fs::create_directories(work);
  GenDataConfig g;
  g.distributions = {sphere2d()};
  g.algorithms = all_behaviors();
  g.tasks_per_distribution = 3;
  g.runs_per_task = 3;
  g.gp_ei_tasks = 1;
  g.gp_ei_runs_per_task = 2;
  g.budget = 15;
  g.base_seed = 1010;
  const Dataset ds = generate_data(g);
  const fs::path dir = work / "roundtrip_dataset";
  fs::remove_all(dir);
  write_dataset(ds, dir);
  const Dataset back = read_dataset(dir);
  bool data_ok = back.trajectories.size() == ds.trajectories.size();
  for (const auto& t : ds.trajectories) {
    data_ok = data_ok && std::find(back.trajectories.begin(), back.trajectories.end(), t) !=
                             back.trajectories.end();
  }
  data_ok = data_ok && back.manifest.tasks.size() == ds.manifest.tasks.size();
  for (std::size_t i = 0; data_ok && i < ds.manifest.tasks.size(); ++i) {
    const auto& a = ds.manifest.tasks[i];
    const auto& b = back.manifest.tasks[i];
    data_ok = a.ref == b.ref && a.y_min == b.y_min && a.y_max == b.y_max && a.optimum_proxy == b.optimum_proxy;
  }

  TrainerConfig tc;
  tc.batch_size = 4;
  tc.total_steps = 5;
  tc.tau = 8;
  tc.eval_every = 5;
  const ModelCheckpoint ck = run_training(ds, model_preset("desk", 2, 9), tc);
  save_checkpoint(ck, work / "roundtrip.ckpt");
  const ModelCheckpoint ck2 = load_checkpoint(work / "roundtrip.ckpt");
  bool ck_ok = ck2.model.params().data() == ck.model.params().data() && ck2.adam_m == ck.adam_m &&
               ck2.adam_v == ck.adam_v && ck2.meta.step == ck.meta.step &&
               ck2.model.config() == ck.model.config() &&
               ck2.normalization.mean_best == ck.normalization.mean_best &&
               ck2.normalization.mean_worst == ck.normalization.mean_worst;
  WindowSampler sampler(ds, 8, YNormalization::Random);
  Rng rng(1010);
  const TokenBatch batch = make_batch(sampler.sample_batch(6, rng).windows);
  const auto a = ck.model.forward(batch);
  const auto b = ck2.model.forward(batch);
  ck_ok = ck_ok && a.mean == b.mean && a.std == b.std;
  return {data_ok && ck_ok, fmt("dataset %s (%zu trajectories); checkpoint %s", data_ok ? "identical" : "DIFFERS",
                                ds.trajectories.size(), ck_ok ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ribbo acceptance criteria"};
  std::vector<int> only;
  std::string workdir = (fs::temp_directory_path() / "ribbo_acceptance").string();
  int threads = 1;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--workdir", workdir, "Scratch directory for generated data and checkpoints");
  app.add_option("--threads", threads, "Worker threads for data generation and evaluation");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}
                                              : std::set<int>(only.begin(), only.end());
  const fs::path work(workdir);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // stated runtime limit; 0 when none is given
    std::function<Outcome()> run;
  };
  DeskSetup desk;
  bool desk_built = false;
  auto need_desk = [&]() -> const DeskSetup& {
    if (!desk_built) {
      desk = build_desk_setup(work / "desk", threads);
      desk_built = true;
    }
    return desk;
  };
  const std::vector<Criterion> criteria{
      {1, "rtg oracle equivalence", 5, criterion1},
      {2, "hrr matches eq. 3", 30, criterion2},
      {3, "causality", 60, criterion3},
      {4, "gradient check", 120, criterion4},
      {5, "closed-form checks", 60, criterion5},
      {6, "behavior sanity", 600, [&] { return criterion6(threads); }},
      {7, "desk-scale mechanism reproduction", 2700, [&] { return criterion7(need_desk(), work / "desk", threads); }},
      {8, "rtg conditioning", 0, [&] { return criterion8(need_desk()); }},
      {9, "hrr vs naive", 0, [&] { return criterion9(need_desk()); }},
      {10, "format round trips", 60, [&] { return criterion10(work); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt(" [runtime %.1f s exceeds %.0f s]", secs, c.budget_s);
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s  criterion %2d  %-36s %8.1f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
