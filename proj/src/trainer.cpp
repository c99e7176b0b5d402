#include "ribbo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace ribbo {

void TrainerConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (total_steps < 1) throw ConfigError("total_steps must be positive");
  if (!(peak_lr > 0.0)) throw ConfigError("peak_lr must be positive");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup_fraction must lie in (0, 1)");
  }
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (tau < 1) throw ConfigError("tau must be at least 1");
  if (eval_every < 1) throw ConfigError("eval_every must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
}

std::int64_t TrainerConfig::warmup_steps() const {
  return std::clamp<std::int64_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)),
                                  1, total_steps);
}

double lr_schedule(std::int64_t step, const TrainerConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) throw InvalidInput("lr_schedule: step out of range");
  const auto warm = cfg.warmup_steps();
  if (step <= warm) return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warm);
  if (warm == cfg.total_steps) return cfg.peak_lr;
  const double progress =
      static_cast<double>(step - warm) / static_cast<double>(cfg.total_steps - warm);
  return 0.5 * cfg.peak_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------

WindowSampler::WindowSampler(const Dataset& ds, int tau, YNormalization mode,
                             std::span<const BehaviorId> excluded)
    : tau_(tau), mode_(mode) {
  std::map<std::string, const TaskStats*> stats;
  for (const auto& t : ds.manifest.tasks) stats[t.ref.str()] = &t;
  for (const auto& traj : ds.trajectories) {
    if (std::find(excluded.begin(), excluded.end(), traj.algo) != excluded.end()) continue;
    auto it = stats.find(traj.task.str());
    if (it == stats.end()) throw ConfigError("manifest has no statistics for task " + traj.task.str());
    const auto* s = it->second;
    if (mode != YNormalization::None && !(s->y_max > s->y_min)) continue;  // degenerate task
    if (traj.length() + 1 < tau) {
      throw ConfigError("tau " + std::to_string(tau) + " exceeds trajectory length + 1 for " +
                        traj.task.str());
    }
    trajectories_.push_back({&traj, s->y_min, s->y_max, s->optimum_proxy});
  }
  if (trajectories_.empty()) throw ConfigError("no trajectories available for training");
}

std::size_t WindowSampler::sample_index(Rng& rng) const {
  return std::uniform_int_distribution<std::size_t>(0, trajectories_.size() - 1)(rng);
}

SubsequenceWindow WindowSampler::make_window(std::size_t id, Rng& rng) const {
  const auto& e = trajectories_.at(id);
  const auto scaled = normalize_y(e.traj->ys, e.y_star, e.y_min, e.y_max, mode_, rng);
  auto aug = augment_rtg(e.traj->xs, scaled.ys, scaled.y_star);
  aug.algo = static_cast<int>(e.traj->algo);
  return sample_subsequence(aug, tau_, rng);
}

TrainingBatch WindowSampler::sample_batch(int batch_size, Rng& rng) const {
  TrainingBatch b;
  b.windows.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const auto id = sample_index(rng);
    b.trajectory_ids.push_back(id);
    b.windows.push_back(make_window(id, rng));
  }
  return b;
}

void batch_targets(std::span<const SubsequenceWindow> windows, Mat& targets,
                   std::vector<std::uint8_t>& mask) {
  if (windows.empty()) throw InvalidInput("batch_targets: empty batch");
  const int len = windows.front().size();
  const auto d = windows.front().targets.front().size();
  targets.setZero(static_cast<Eigen::Index>(windows.size()) * len, d);
  mask.assign(windows.size() * len, 0);
  for (std::size_t b = 0; b < windows.size(); ++b) {
    for (int t = 0; t < len; ++t) {
      const auto r = static_cast<Eigen::Index>(b) * len + t;
      if (windows[b].has_target[t]) {
        targets.row(r) = windows[b].targets[t].transpose();
        mask[r] = 1;
      }
    }
  }
}

// ---------------------------------------------------------------------------

double loss_and_gradient(const SequenceModel& model, const TokenBatch& tokens,
                         const Mat& targets, std::span<const std::uint8_t> mask,
                         ParamStore* grads) {
  ForwardCache cache;
  Prediction pred = model.forward(tokens, false, nullptr, grads ? &cache : nullptr);
  Mat dmean, dstd;
  const double loss = nll_loss(pred, targets, mask, grads ? &dmean : nullptr, grads ? &dstd : nullptr);
  if (grads) model.backward(cache, dmean, dstd, *grads);
  return loss;
}

StepResult train_step(SequenceModel& model, const TrainingBatch& batch, AdamState& opt,
                      const TrainerConfig& cfg, std::int64_t step, Rng& rng) {
  auto& params = model.params();
  if (opt.m.size() != params.size() || opt.v.size() != params.size()) {
    throw InvalidInput("optimizer state does not match the model");
  }
  const TokenBatch tokens = make_batch(batch.windows);
  Mat targets;
  std::vector<std::uint8_t> mask;
  batch_targets(batch.windows, targets, mask);

  ForwardCache cache;
  Prediction pred = model.forward(tokens, true, &rng, &cache);
  Mat dmean, dstd;
  StepResult res;
  res.loss = nll_loss(pred, targets, mask, &dmean, &dstd);
  if (!std::isfinite(res.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << step << "; trajectory ids:";
    for (auto id : batch.trajectory_ids) msg << ' ' << id;
    throw NumericalError(msg.str());
  }
  ParamStore grads = params.zeros_like();
  model.backward(cache, dmean, dstd, grads);

  auto& g = grads.data();
  double sq = 0.0;
  for (double v : g) sq += v * v;
  res.grad_norm = std::sqrt(sq);
  if (!std::isfinite(res.grad_norm)) {
    throw NumericalError("non-finite gradient at step " + std::to_string(step));
  }
  const double clip =
      cfg.grad_clip > 0.0 && res.grad_norm > cfg.grad_clip ? cfg.grad_clip / res.grad_norm : 1.0;

  res.lr = lr_schedule(std::min(step, cfg.total_steps), cfg);
  opt.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.t));
  auto& p = params.data();
  for (const auto& e : params.entries()) {
    // Gains and biases are stored as single rows and are not decayed.
    const double wd = e.rows > 1 ? cfg.weight_decay : 0.0;
    for (std::size_t i = e.offset; i < e.offset + e.size(); ++i) {
      const double gi = g[i] * clip;
      opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * gi;
      opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = opt.m[i] / bc1;
      const double vhat = opt.v[i] / bc2;
      p[i] -= res.lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + wd * p[i]);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------

namespace {

void check_dataset(const Dataset& ds, const ModelConfig& mc, const TrainerConfig& tc) {
  if (ds.trajectories.empty()) throw ConfigError("dataset is empty");
  for (const auto& t : ds.trajectories) {
    if (t.dim() != mc.x_dim) {
      throw ConfigError("trajectory dimension " + std::to_string(t.dim()) +
                        " does not match model x_dim " + std::to_string(mc.x_dim));
    }
    if (std::find(ds.manifest.algorithms.begin(), ds.manifest.algorithms.end(), t.algo) ==
        ds.manifest.algorithms.end()) {
      throw ConfigError("trajectory algorithm missing from the manifest");
    }
  }
  if (tc.tau + 1 > mc.max_len) throw ConfigError("max_len must be at least tau + 1");
}

ModelCheckpoint make_checkpoint(const SequenceModel& model, const Dataset& ds,
                                const TrainerConfig& cfg, const AdamState& opt) {
  ModelCheckpoint ck;
  ck.model = model;
  ck.normalization = ds.normalization();
  ck.meta.step = opt.t;
  ck.meta.seed = cfg.seed;
  ck.meta.tau = cfg.tau;
  ck.meta.y_normalization = cfg.y_normalization;
  ck.meta.excluded_algorithms = cfg.excluded_algorithms;
  ck.meta.distributions = ds.manifest.distributions;
  ck.adam_m = opt.m;
  ck.adam_v = opt.v;
  return ck;
}

}  // namespace

ModelCheckpoint run_training(const Dataset& ds, ModelConfig model_cfg, const TrainerConfig& cfg,
                             const TrainingOutputs& io) {
  cfg.validate();
  model_cfg.variant = cfg.variant;
  model_cfg.validate();
  check_dataset(ds, model_cfg, cfg);
  const WindowSampler sampler(ds, cfg.tau, cfg.y_normalization, cfg.excluded_algorithms);

  SequenceModel model(model_cfg, derive_seed(cfg.seed, 0xC0FFEE));
  AdamState opt = AdamState::zeros(model.params().size());
  if (io.resume_from) {
    auto ck = load_checkpoint(*io.resume_from);
    if (!(ck.model.config() == model_cfg)) {
      throw ConfigError("resume checkpoint was trained with a different model configuration");
    }
    if (ck.adam_m.empty()) throw ConfigError("resume checkpoint carries no optimizer state");
    if (ck.meta.seed != cfg.seed || ck.meta.tau != cfg.tau) {
      throw ConfigError("resume checkpoint seed or tau differs from the trainer configuration");
    }
    model = std::move(ck.model);
    opt.m = std::move(ck.adam_m);
    opt.v = std::move(ck.adam_v);
    opt.t = ck.meta.step;
    if (opt.t > cfg.total_steps) throw ConfigError("resume checkpoint is past total_steps");
  }

  std::ofstream metrics;
  if (io.metrics) {
    const bool append = io.resume_from.has_value() && std::filesystem::exists(*io.metrics);
    metrics.open(*io.metrics, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw FormatError("cannot write metrics to " + io.metrics->string());
    if (!append) metrics << "step,loss,lr,grad_norm\n";
  }

  double loss_sum = 0.0;
  double norm_sum = 0.0;
  int window = 0;
  for (std::int64_t step = opt.t + 1; step <= cfg.total_steps; ++step) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(step)));
    const TrainingBatch batch = sampler.sample_batch(cfg.batch_size, rng);
    const StepResult res = train_step(model, batch, opt, cfg, step, rng);
    if (io.on_step) io.on_step(step, res);
    loss_sum += res.loss;
    norm_sum += res.grad_norm;
    ++window;
    if (step % cfg.eval_every == 0) {
      if (metrics) {
        char line[160];
        std::snprintf(line, sizeof line, "%lld,%.10g,%.10g,%.10g\n", static_cast<long long>(step),
                      loss_sum / window, res.lr, norm_sum / window);
        metrics << line << std::flush;
      }
      loss_sum = norm_sum = 0.0;
      window = 0;
    }
    if (io.checkpoint && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.total_steps) {
      save_checkpoint(make_checkpoint(model, ds, cfg, opt), *io.checkpoint);
    }
  }
  auto final_ck = make_checkpoint(model, ds, cfg, opt);
  if (io.checkpoint) save_checkpoint(final_ck, *io.checkpoint);
  return final_ck;
}

}  // namespace ribbo
