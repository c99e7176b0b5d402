#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ribbo/dataset.hpp"
#include "ribbo/model.hpp"
#include "ribbo/problems.hpp"

namespace ribbo {

/// How the rtg of each newly appended token is chosen.
///   Hrr:      appended rtg 0, every earlier rtg grows by the new regret.
///   Naive:    running value starting at R0, decremented by each regret;
///             earlier rtgs are never touched.
///   Constant: like Hrr but the appended rtg is `value`.
struct RtgStrategy {
  enum class Kind { Hrr, Naive, Constant };
  Kind kind = Kind::Hrr;
  double value = 0.0;

  static RtgStrategy hrr() { return {Kind::Hrr, 0.0}; }
  static RtgStrategy naive(double r0) { return {Kind::Naive, r0}; }
  static RtgStrategy constant(double c) { return {Kind::Constant, c}; }
  /// "hrr", "naive:R0" or "const:c".
  static RtgStrategy parse(std::string_view text);
  std::string str() const;
};

enum class SamplingMode { Stochastic, Mean };
std::string_view to_string(SamplingMode m);
SamplingMode sampling_mode_from_string(std::string_view name);

struct InferenceConfig {
  int budget = 60;
  int context_limit = 0;  // 0 uses the training tau (or max_len when unknown)
  RtgStrategy strategy = RtgStrategy::hrr();
  SamplingMode sampling = SamplingMode::Stochastic;
  std::uint64_t seed = 0;
  int algo_id = -1;  // required by the algoid variant

  void validate() const;
};

/// Task wrapper returning raw and inference-normalized values.
class NormalizedObjective {
 public:
  NormalizedObjective(const TaskInstance& task, NormalizationStats stats);
  struct Value {
    double raw;
    double norm;
  };
  Value operator()(const Vec& x_unit) const;
  double normalize(double y_raw) const;
  const TaskInstance& task() const { return *task_; }

 private:
  const TaskInstance* task_;
  NormalizationStats stats_;
};

/// History fed to the model. Index 0 is the padding token.
struct InferenceHistory {
  AugmentedTrajectory aug;  // unit-box xs, normalized ys
  double running_rtg = 0.0;  // naive strategy only
  int algo = -1;

  static InferenceHistory start(int dim, double initial_rtg = 0.0, int algo = -1);
  int steps() const { return aug.length(); }
};

struct StepRecord {
  Vec x_unit;
  double y_raw = 0.0;
  double y_norm = 0.0;
  GaussianPrediction prediction;
  double context_rtg = 0.0;  // rtg of the last context token when x was proposed
};

/// Model input for the next query: padding token plus the latest
/// context_limit - 1 steps.
TokenBatch build_context(const InferenceHistory& h, int context_limit);

/// Gaussian prediction for the next x given the current history.
GaussianPrediction predict_next(const SequenceModel& model, const InferenceHistory& h,
                                int context_limit);

/// Draws x (or takes the mean) and clamps it to the unit box.
Vec sample_query(const GaussianPrediction& pred, SamplingMode mode, Rng& rng);

/// Relabel rule: adds r = y_star - y to every stored rtg, then appends
/// (x, y, immediate).
void relabel_append(AugmentedTrajectory& aug, const Vec& x, double y, double y_star,
                    double immediate = 0.0);

/// One HRR iteration: propose, evaluate, relabel, append with rtg 0.
StepRecord hrr_step(InferenceHistory& h, const SequenceModel& model,
                    const NormalizedObjective& f, double y_star_norm, int context_limit,
                    SamplingMode mode, Rng& rng, double immediate = 0.0);

/// One naive iteration: running_rtg -= y_star - y, appended as the new rtg.
StepRecord naive_step(InferenceHistory& h, const SequenceModel& model,
                      const NormalizedObjective& f, double y_star_norm, int context_limit,
                      SamplingMode mode, Rng& rng);

struct InferenceResult {
  Trajectory trajectory;  // unit-box xs, raw ys; `algo` is unused for model runs
  InferenceHistory history;
  std::vector<StepRecord> steps;
};

/// Runs the checkpoint as an optimizer on `task` for cfg.budget queries.
InferenceResult run_optimization(const ModelCheckpoint& ckpt, const TaskInstance& task,
                                 const InferenceConfig& cfg);

/// Writes one line per step: t, x (raw), y (raw), y_norm, rtg, predicted std.
void write_inference_trace(const InferenceResult& r, const TaskInstance& task,
                           const std::filesystem::path& path);

}  // namespace ribbo
