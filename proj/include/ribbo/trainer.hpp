#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ribbo/dataset.hpp"
#include "ribbo/model.hpp"

namespace ribbo {

struct TrainerConfig {
  int batch_size = 32;
  std::int64_t total_steps = 5000;
  double peak_lr = 2e-4;
  double warmup_fraction = 0.05;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  // global norm; <= 0 disables clipping
  int tau = 50;
  std::uint64_t seed = 0;
  int eval_every = 100;
  int checkpoint_every = 0;  // 0 writes only the final checkpoint
  ModelVariant variant = ModelVariant::Ribbo;
  YNormalization y_normalization = YNormalization::Random;
  std::vector<BehaviorId> excluded_algorithms;

  void validate() const;
  std::int64_t warmup_steps() const;
};

/// Linear warmup to peak_lr, then cosine decay to zero at total_steps.
double lr_schedule(std::int64_t step, const TrainerConfig& cfg);

/// Adam first and second moments plus the number of completed updates.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  static AdamState zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
};

/// Windows plus the trajectory ids they came from (for diagnostics).
struct TrainingBatch {
  std::vector<SubsequenceWindow> windows;
  std::vector<std::size_t> trajectory_ids;
};

/// Draws training windows: a trajectory uniformly, then a start uniformly,
/// with the y values rescaled per sample according to the chosen mode.
class WindowSampler {
 public:
  WindowSampler(const Dataset& ds, int tau, YNormalization mode,
                std::span<const BehaviorId> excluded = {});

  std::size_t size() const { return trajectories_.size(); }
  std::size_t sample_index(Rng& rng) const;
  SubsequenceWindow make_window(std::size_t id, Rng& rng) const;
  TrainingBatch sample_batch(int batch_size, Rng& rng) const;

 private:
  struct Entry {
    const Trajectory* traj;
    double y_min;
    double y_max;
    double y_star;
  };
  std::vector<Entry> trajectories_;
  int tau_;
  YNormalization mode_;
};

/// Assembles targets and mask for the windows of a batch.
void batch_targets(std::span<const SubsequenceWindow> windows, Mat& targets,
                   std::vector<std::uint8_t>& mask);

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  double lr = 0.0;
};

/// Forward, backward and one AdamW update. Throws NumericalError naming the
/// step and trajectory ids when the loss is not finite.
StepResult train_step(SequenceModel& model, const TrainingBatch& batch, AdamState& opt,
                      const TrainerConfig& cfg, std::int64_t step, Rng& rng);

/// Loss and gradient without an update, used by gradient checks.
double loss_and_gradient(const SequenceModel& model, const TokenBatch& tokens,
                         const Mat& targets, std::span<const std::uint8_t> mask,
                         ParamStore* grads);

struct TrainingOutputs {
  std::optional<std::filesystem::path> checkpoint;  // periodic and final checkpoint
  std::optional<std::filesystem::path> metrics;     // CSV: step,loss,lr,grad_norm
  std::optional<std::filesystem::path> resume_from;
  std::function<void(std::int64_t, const StepResult&)> on_step;
};

/// Trains from scratch (or resumes) and returns the final checkpoint.
ModelCheckpoint run_training(const Dataset& ds, ModelConfig model_cfg, const TrainerConfig& cfg,
                             const TrainingOutputs& io = {});

}  // namespace ribbo
