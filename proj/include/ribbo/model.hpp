#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ribbo/common.hpp"
#include "ribbo/dataset.hpp"

namespace ribbo {

enum class ModelVariant { Ribbo, BehaviorCloning, AlgoId };
std::string_view to_string(ModelVariant v);
ModelVariant model_variant_from_string(std::string_view name);

struct ModelConfig {
  int x_dim = 2;
  int embed_dim = 64;
  int n_layers = 4;
  int n_heads = 4;
  int ff_dim = 256;
  double dropout = 0.1;
  int max_len = 64;
  ModelVariant variant = ModelVariant::Ribbo;
  double min_std = 1e-4;
  double max_std = 1.0;
  int n_algos = kNumBehaviors;

  int input_dim() const { return x_dim + 3; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Named presets: "desk" (64/4/4/256), "paper" (256/12/8/1024) and "tiny"
/// (8/1/2/16, used by gradient checks).
ModelConfig model_preset(std::string_view name, int x_dim, int max_len);

/// Flat parameter buffer with named matrix views (column-major storage).
class ParamStore {
 public:
  struct Entry {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
  };

  std::size_t add(std::string name, int rows, int cols);
  std::size_t size() const { return data_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  const Entry& entry(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;

  Eigen::Map<Mat> mat(std::size_t id) {
    auto& e = entries_[id];
    return {data_.data() + e.offset, e.rows, e.cols};
  }
  Eigen::Map<const Mat> mat(std::size_t id) const {
    const auto& e = entries_[id];
    return {data_.data() + e.offset, e.rows, e.cols};
  }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  void zero() { std::fill(data_.begin(), data_.end(), 0.0); }
  /// Same layout, zero-filled.
  ParamStore zeros_like() const;

 private:
  std::vector<Entry> entries_;
  std::vector<double> data_;
};

/// One (x, y, rtg, is_pad) triplet fed to the model.
struct Token {
  Vec x;
  double y = 0.0;
  double rtg = 0.0;
  bool is_pad = false;
};

/// Equal-length sequences stacked row-wise: row b * len + t holds token t of
/// sequence b. `algo[b]` selects the learned prefix for the AlgoId variant.
struct TokenBatch {
  int batch = 0;
  int len = 0;
  Mat features;  // (batch * len) x (x_dim + 3)
  std::vector<int> algo;
};

TokenBatch make_batch(const std::vector<std::vector<Token>>& sequences,
                      const std::vector<int>& algos = {});
TokenBatch make_batch(const std::vector<SubsequenceWindow>& windows);

struct GaussianPrediction {
  Vec mean;
  Vec std;
};

struct Prediction {
  Mat mean;  // rows aligned with TokenBatch rows
  Mat std;
  GaussianPrediction at(Eigen::Index row) const { return {mean.row(row).transpose(), std.row(row).transpose()}; }
};

struct LayerNormCache {
  Mat xhat;
  Vec rstd;
};

struct BlockCache {
  Mat x_in;
  LayerNormCache ln1;
  Mat a;
  Mat qkv;
  std::vector<Mat> probs;  // one L x L matrix per (sequence, head)
  Mat att;
  Mat drop_attn;
  Mat x_mid;
  LayerNormCache ln2;
  Mat c;
  Mat f1;
  Mat g;
  Mat g_tanh;
  Mat drop_ff;
};

/// Activations retained by a forward pass for backpropagation.
struct ForwardCache {
  int batch = 0;
  int len = 0;
  bool train = false;
  Mat inputs;
  std::vector<int> prefix_algo;  // per row; -1 when the MLP embedding is used
  Mat h1pre;
  Mat h1;
  Mat h1_tanh;
  Mat drop_emb;
  std::vector<BlockCache> blocks;
  Mat x_final;
  LayerNormCache lnf;
  Mat xf;
  Mat sig;
  Mat std;
};

/// Causal transformer policy: triplet MLP embedding, learned absolute
/// positions, pre-norm attention blocks and a diagonal Gaussian head.
class SequenceModel {
 public:
  SequenceModel() = default;
  SequenceModel(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Two-layer MLP over concat(x, y, rtg, is_pad). The BC variant zeroes the
  /// rtg channel first.
  Vec embed_triplet(const Vec& x, double y, double rtg, bool is_pad) const;

  /// Learned initial-token embedding for the AlgoId variant.
  Vec algo_id_prefix(int algo) const;

  /// Runs the model. When `train` is set, dropout draws from `rng`. When
  /// `cache` is non-null, activations needed by `backward` are kept.
  Prediction forward(const TokenBatch& batch, bool train = false, Rng* rng = nullptr,
                     ForwardCache* cache = nullptr) const;

  /// Accumulates parameter gradients given dLoss/dmean and dLoss/dstd.
  void backward(const ForwardCache& cache, const Mat& dmean, const Mat& dstd,
                ParamStore& grads) const;

 private:
  struct LayerIds {
    std::size_t ln1_g, ln1_b, wqkv, bqkv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  void init_weights(std::uint64_t seed);
  Mat embed_rows(const Mat& inputs, Mat* h1pre, Mat* h1, Mat* h1_tanh) const;

  ModelConfig cfg_;
  ParamStore params_;
  std::size_t emb_w1_ = 0, emb_b1_ = 0, emb_w2_ = 0, emb_b2_ = 0;
  std::optional<std::size_t> algo_table_;
  std::size_t pos_ = 0;
  std::vector<LayerIds> layers_;
  std::size_t lnf_g_ = 0, lnf_b_ = 0;
  std::size_t head_wm_ = 0, head_bm_ = 0, head_ws_ = 0, head_bs_ = 0;
};

/// Mean negative Gaussian log-density over rows with mask != 0. Optionally
/// returns gradients w.r.t. the prediction (zero on masked rows).
double nll_loss(const Prediction& pred, const Mat& targets, std::span<const std::uint8_t> mask,
                Mat* dmean = nullptr, Mat* dstd = nullptr);

/// Training bookkeeping stored next to the weights.
struct TrainingMeta {
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  int tau = 0;
  YNormalization y_normalization = YNormalization::Random;
  std::vector<BehaviorId> excluded_algorithms;
  // Task families of the training data, so runs can name tasks as dist:index.
  std::vector<TaskDistribution> distributions;
};

struct ModelCheckpoint {
  static constexpr std::uint32_t kVersion = 1;
  SequenceModel model;
  NormalizationStats normalization;
  TrainingMeta meta;
  // Adam moments; empty when the checkpoint is inference-only.
  std::vector<double> adam_m;
  std::vector<double> adam_v;
};

/// Binary container: magic, version, JSON header (config, stats, metadata,
/// tensor table), then little-endian float64 tensors in row-major order.
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ribbo
