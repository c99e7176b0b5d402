#include "ribbo/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

#include "ribbo/config.hpp"

namespace ribbo {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr char kMagic[8] = {'R', 'I', 'B', 'B', 'O', 'C', 'K', 'P'};

// tanh-approximated GELU; `t` receives the tanh term for the backward pass.
Mat gelu(const Mat& x, Mat* t) {
  // tanh(u) = 1 - 2 / (exp(2u) + 1); the exp form vectorizes for doubles.
  const auto u2 = 2.0 * kGeluK * (x.array() + 0.044715 * x.array().cube());
  Mat th = (1.0 - 2.0 / (u2.exp() + 1.0)).matrix();
  Mat y = (0.5 * x.array() * (1.0 + th.array())).matrix();
  if (t) *t = std::move(th);
  return y;
}

Mat gelu_backward(const Mat& dy, const Mat& x, const Mat& t) {
  const auto xa = x.array();
  const auto ta = t.array();
  return (dy.array() * (0.5 * (1.0 + ta) + 0.5 * xa * (1.0 - ta.square()) * kGeluK *
                                               (1.0 + 3.0 * 0.044715 * xa.square())))
      .matrix();
}

Mat layer_norm(const Mat& x, const Eigen::Map<const Mat>& g, const Eigen::Map<const Mat>& b,
               LayerNormCache* cache) {
  const auto e = static_cast<double>(x.cols());
  Vec mu = x.rowwise().mean();
  Mat xc = x.colwise() - mu;
  Vec var = xc.rowwise().squaredNorm() / e;
  Vec rstd = (var.array() + kLnEps).rsqrt();
  Mat xhat = xc.array().colwise() * rstd.array();
  Mat y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

// Returns dx; accumulates dg, db.
Mat layer_norm_backward(const Mat& dy, const LayerNormCache& c, const Eigen::Map<const Mat>& g,
                        Eigen::Map<Mat> dg, Eigen::Map<Mat> db) {
  dg.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  Mat dxhat = dy.array().rowwise() * g.row(0).array();
  Vec m1 = dxhat.rowwise().mean();
  Vec m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
  Mat dx = dxhat.colwise() - m1;
  dx -= (c.xhat.array().colwise() * m2.array()).matrix();
  dx = dx.array().colwise() * c.rstd.array();
  return dx;
}

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat m(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  const auto threshold = static_cast<std::uint64_t>(p * 0x1p64);
  double* out = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) out[i] = rng() < threshold ? 0.0 : keep;
  return m;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

std::uint64_t read_uint(const std::string& buf, std::size_t& pos, int bytes) {
  if (pos + bytes > buf.size()) throw FormatError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  }
  pos += bytes;
  return v;
}

double read_f64(const std::string& buf, std::size_t& pos) {
  std::uint64_t bits = read_uint(buf, pos, 8);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Ribbo: return "ribbo";
    case ModelVariant::BehaviorCloning: return "bc";
    case ModelVariant::AlgoId: return "algoid";
  }
  return "unknown";
}

ModelVariant model_variant_from_string(std::string_view name) {
  for (auto v : {ModelVariant::Ribbo, ModelVariant::BehaviorCloning, ModelVariant::AlgoId}) {
    if (to_string(v) == name) return v;
  }
  throw InvalidInput("unknown model variant: " + std::string(name));
}

void ModelConfig::validate() const {
  if (x_dim < 1) throw ConfigError("model x_dim must be positive");
  if (embed_dim < 1 || n_layers < 0 || n_heads < 1 || ff_dim < 1 || max_len < 1) {
    throw ConfigError("model sizes must be positive");
  }
  if (embed_dim % n_heads != 0) throw ConfigError("embed_dim must be divisible by n_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(min_std > 0.0 && max_std > min_std)) throw ConfigError("need 0 < min_std < max_std");
  if (variant == ModelVariant::AlgoId && n_algos < 1) {
    throw ConfigError("algoid variant needs n_algos >= 1");
  }
}

ModelConfig model_preset(std::string_view name, int x_dim, int max_len) {
  ModelConfig c;
  c.x_dim = x_dim;
  c.max_len = max_len;
  if (name == "desk") {
    c.embed_dim = 64;
    c.n_layers = 4;
    c.n_heads = 4;
    c.ff_dim = 256;
    c.dropout = 0.1;
  } else if (name == "paper") {
    c.embed_dim = 256;
    c.n_layers = 12;
    c.n_heads = 8;
    c.ff_dim = 1024;
    c.dropout = 0.1;
  } else if (name == "tiny") {
    c.embed_dim = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.ff_dim = 16;
    c.dropout = 0.0;
  } else {
    throw ConfigError("unknown model preset: " + std::string(name));
  }
  return c;
}

// ---------------------------------------------------------------------------

std::size_t ParamStore::add(std::string name, int rows, int cols) {
  Entry e{std::move(name), rows, cols, data_.size()};
  data_.resize(data_.size() + e.size(), 0.0);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

const ParamStore::Entry& ParamStore::entry(std::string_view name) const {
  if (auto id = find(name)) return entries_[*id];
  throw InvalidInput("no parameter named " + std::string(name));
}

std::optional<std::size_t> ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out = *this;
  out.zero();
  return out;
}

// ---------------------------------------------------------------------------

TokenBatch make_batch(const std::vector<std::vector<Token>>& sequences,
                      const std::vector<int>& algos) {
  if (sequences.empty()) throw InvalidInput("make_batch: no sequences");
  TokenBatch b;
  b.batch = static_cast<int>(sequences.size());
  b.len = static_cast<int>(sequences.front().size());
  if (b.len < 1) throw InvalidInput("make_batch: empty sequence");
  const auto d = sequences.front().front().x.size();
  b.features.resize(static_cast<Eigen::Index>(b.batch) * b.len, d + 3);
  for (int s = 0; s < b.batch; ++s) {
    if (static_cast<int>(sequences[s].size()) != b.len) {
      throw InvalidInput("make_batch: sequences must share one length");
    }
    for (int t = 0; t < b.len; ++t) {
      const auto& tok = sequences[s][t];
      if (tok.x.size() != d) throw InvalidInput("make_batch: token dimension mismatch");
      auto row = b.features.row(static_cast<Eigen::Index>(s) * b.len + t);
      row.head(d) = tok.x.transpose();
      row[d] = tok.y;
      row[d + 1] = tok.rtg;
      row[d + 2] = tok.is_pad ? 1.0 : 0.0;
    }
  }
  b.algo = algos.empty() ? std::vector<int>(b.batch, -1) : algos;
  if (static_cast<int>(b.algo.size()) != b.batch) throw InvalidInput("make_batch: algo count");
  return b;
}

TokenBatch make_batch(const std::vector<SubsequenceWindow>& windows) {
  std::vector<std::vector<Token>> seqs;
  std::vector<int> algos;
  seqs.reserve(windows.size());
  for (const auto& w : windows) {
    std::vector<Token> seq(w.size());
    for (int i = 0; i < w.size(); ++i) seq[i] = {w.xs[i], w.ys[i], w.rtgs[i], w.is_pad[i] != 0};
    seqs.push_back(std::move(seq));
    algos.push_back(w.algo);
  }
  return make_batch(seqs, algos);
}

// ---------------------------------------------------------------------------

SequenceModel::SequenceModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  const int E = cfg_.embed_dim;
  emb_w1_ = params_.add("embed.w1", cfg_.input_dim(), E);
  emb_b1_ = params_.add("embed.b1", 1, E);
  emb_w2_ = params_.add("embed.w2", E, E);
  emb_b2_ = params_.add("embed.b2", 1, E);
  if (cfg_.variant == ModelVariant::AlgoId) {
    algo_table_ = params_.add("embed.algo", cfg_.n_algos, E);
  }
  pos_ = params_.add("pos", cfg_.max_len, E);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    LayerIds ids{};
    ids.ln1_g = params_.add(p + "ln1.g", 1, E);
    ids.ln1_b = params_.add(p + "ln1.b", 1, E);
    ids.wqkv = params_.add(p + "attn.wqkv", E, 3 * E);
    ids.bqkv = params_.add(p + "attn.bqkv", 1, 3 * E);
    ids.wo = params_.add(p + "attn.wo", E, E);
    ids.bo = params_.add(p + "attn.bo", 1, E);
    ids.ln2_g = params_.add(p + "ln2.g", 1, E);
    ids.ln2_b = params_.add(p + "ln2.b", 1, E);
    ids.w1 = params_.add(p + "ff.w1", E, cfg_.ff_dim);
    ids.b1 = params_.add(p + "ff.b1", 1, cfg_.ff_dim);
    ids.w2 = params_.add(p + "ff.w2", cfg_.ff_dim, E);
    ids.b2 = params_.add(p + "ff.b2", 1, E);
    layers_.push_back(ids);
  }
  lnf_g_ = params_.add("lnf.g", 1, E);
  lnf_b_ = params_.add("lnf.b", 1, E);
  head_wm_ = params_.add("head.wm", E, cfg_.x_dim);
  head_bm_ = params_.add("head.bm", 1, cfg_.x_dim);
  head_ws_ = params_.add("head.ws", E, cfg_.x_dim);
  head_bs_ = params_.add("head.bs", 1, cfg_.x_dim);
  init_weights(init_seed);
}

void SequenceModel::init_weights(std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&](std::size_t id, double sd) {
    auto m = params_.mat(id);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = sd * standard_normal(rng);
    }
  };
  const double resid = 0.02 / std::sqrt(2.0 * std::max(1, cfg_.n_layers));
  fill(emb_w1_, 1.0 / std::sqrt(static_cast<double>(cfg_.input_dim())));
  fill(emb_w2_, 1.0 / std::sqrt(static_cast<double>(cfg_.embed_dim)));
  if (algo_table_) fill(*algo_table_, 1.0);
  fill(pos_, 0.02);
  for (const auto& ids : layers_) {
    params_.mat(ids.ln1_g).setOnes();
    params_.mat(ids.ln2_g).setOnes();
    fill(ids.wqkv, 0.02);
    fill(ids.wo, resid);
    fill(ids.w1, 0.02);
    fill(ids.w2, resid);
  }
  params_.mat(lnf_g_).setOnes();
  fill(head_wm_, 0.02);
  fill(head_ws_, 0.02);
  params_.mat(head_bm_).setConstant(0.5);
  // sigmoid(2) places the initial std near 0.3 for the default bounds.
  params_.mat(head_bs_).setConstant(2.0);
}

Mat SequenceModel::embed_rows(const Mat& inputs, Mat* h1pre_out, Mat* h1_out, Mat* h1_tanh) const {
  Mat u = inputs;
  if (cfg_.variant == ModelVariant::BehaviorCloning) u.col(cfg_.x_dim + 1).setZero();
  Mat h1pre = (u * params_.mat(emb_w1_)).rowwise() + params_.mat(emb_b1_).row(0);
  Mat h1 = gelu(h1pre, h1_tanh);
  Mat e = (h1 * params_.mat(emb_w2_)).rowwise() + params_.mat(emb_b2_).row(0);
  if (h1pre_out) *h1pre_out = std::move(h1pre);
  if (h1_out) *h1_out = std::move(h1);
  return e;
}

Vec SequenceModel::embed_triplet(const Vec& x, double y, double rtg, bool is_pad) const {
  if (x.size() != cfg_.x_dim) throw InvalidInput("embed_triplet: x has the wrong dimension");
  if (!x.allFinite() || !std::isfinite(y) || !std::isfinite(rtg)) {
    throw InvalidInput("embed_triplet: non-finite input");
  }
  Mat in(1, cfg_.input_dim());
  in.row(0).head(cfg_.x_dim) = x.transpose();
  in(0, cfg_.x_dim) = y;
  in(0, cfg_.x_dim + 1) = rtg;
  in(0, cfg_.x_dim + 2) = is_pad ? 1.0 : 0.0;
  return embed_rows(in, nullptr, nullptr, nullptr).row(0).transpose();
}

Vec SequenceModel::algo_id_prefix(int algo) const {
  if (cfg_.variant != ModelVariant::AlgoId || !algo_table_) {
    throw InvalidInput("algo_id_prefix is only defined for the algoid variant");
  }
  if (algo < 0 || algo >= cfg_.n_algos) throw InvalidInput("algo id out of range");
  return params_.mat(*algo_table_).row(algo).transpose();
}

Prediction SequenceModel::forward(const TokenBatch& batch, bool train, Rng* rng,
                                  ForwardCache* cache) const {
  const int B = batch.batch;
  const int L = batch.len;
  const int E = cfg_.embed_dim;
  const int H = cfg_.n_heads;
  const int hd = E / H;
  const Eigen::Index N = static_cast<Eigen::Index>(B) * L;
  if (L > cfg_.max_len) throw InvalidInput("sequence longer than the model's max_len");
  if (batch.features.rows() != N || batch.features.cols() != cfg_.input_dim()) {
    throw InvalidInput("token batch shape does not match the model");
  }
  if (!batch.features.allFinite()) throw InvalidInput("token batch contains non-finite values");
  const bool use_dropout = train && cfg_.dropout > 0.0;
  if (use_dropout && !rng) throw InvalidInput("training forward requires an rng");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c = ForwardCache{};
  c.batch = B;
  c.len = L;
  c.train = use_dropout;
  c.inputs = batch.features;

  Mat x = embed_rows(batch.features, &c.h1pre, &c.h1, &c.h1_tanh);
  c.prefix_algo.assign(N, -1);
  if (algo_table_) {
    const auto table = params_.mat(*algo_table_);
    for (int b = 0; b < B; ++b) {
      const int a = batch.algo.empty() ? -1 : batch.algo[b];
      if (a < 0) continue;
      if (a >= cfg_.n_algos) throw InvalidInput("algo id out of range");
      for (int t = 0; t < L; ++t) {
        const Eigen::Index r = static_cast<Eigen::Index>(b) * L + t;
        if (batch.features(r, cfg_.x_dim + 2) > 0.5) {
          x.row(r) = table.row(a);
          c.prefix_algo[r] = a;
        }
      }
    }
  }
  const auto pos = params_.mat(pos_);
  for (int b = 0; b < B; ++b) x.middleRows(static_cast<Eigen::Index>(b) * L, L) += pos.topRows(L);
  if (use_dropout) {
    c.drop_emb = dropout_mask(N, E, cfg_.dropout, *rng);
    x = x.cwiseProduct(c.drop_emb);
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  c.blocks.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& ids = layers_[l];
    auto& bc = c.blocks[l];
    bc.x_in = x;
    bc.a = layer_norm(x, params_.mat(ids.ln1_g), params_.mat(ids.ln1_b), &bc.ln1);
    bc.qkv = (bc.a * params_.mat(ids.wqkv)).rowwise() + params_.mat(ids.bqkv).row(0);
    bc.att.setZero(N, E);
    bc.probs.resize(static_cast<std::size_t>(B) * H);
    for (int b = 0; b < B; ++b) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(b) * L;
      for (int h = 0; h < H; ++h) {
        auto q = bc.qkv.block(r0, h * hd, L, hd);
        auto k = bc.qkv.block(r0, E + h * hd, L, hd);
        auto v = bc.qkv.block(r0, 2 * E + h * hd, L, hd);
        Mat s = (q * k.transpose()) * scale;
        Mat& p = bc.probs[static_cast<std::size_t>(b) * H + h];
        p.setZero(L, L);
        for (int i = 0; i < L; ++i) {
          const double mx = s.row(i).head(i + 1).maxCoeff();
          double z = 0.0;
          for (int j = 0; j <= i; ++j) {
            p(i, j) = std::exp(s(i, j) - mx);
            z += p(i, j);
          }
          p.row(i).head(i + 1) /= z;
        }
        bc.att.block(r0, h * hd, L, hd) = p * v;
      }
    }
    Mat o = (bc.att * params_.mat(ids.wo)).rowwise() + params_.mat(ids.bo).row(0);
    if (use_dropout) {
      bc.drop_attn = dropout_mask(N, E, cfg_.dropout, *rng);
      o = o.cwiseProduct(bc.drop_attn);
    }
    x += o;
    bc.x_mid = x;
    bc.c = layer_norm(x, params_.mat(ids.ln2_g), params_.mat(ids.ln2_b), &bc.ln2);
    bc.f1 = (bc.c * params_.mat(ids.w1)).rowwise() + params_.mat(ids.b1).row(0);
    bc.g = gelu(bc.f1, &bc.g_tanh);
    Mat f2 = (bc.g * params_.mat(ids.w2)).rowwise() + params_.mat(ids.b2).row(0);
    if (use_dropout) {
      bc.drop_ff = dropout_mask(N, E, cfg_.dropout, *rng);
      f2 = f2.cwiseProduct(bc.drop_ff);
    }
    x += f2;
  }
  c.x_final = x;
  c.xf = layer_norm(x, params_.mat(lnf_g_), params_.mat(lnf_b_), &c.lnf);

  Prediction out;
  out.mean = (c.xf * params_.mat(head_wm_)).rowwise() + params_.mat(head_bm_).row(0);
  Mat z = (c.xf * params_.mat(head_ws_)).rowwise() + params_.mat(head_bs_).row(0);
  const double lo = std::log(cfg_.min_std);
  const double hi = std::log(cfg_.max_std);
  c.sig = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  const double floor = cfg_.min_std;
  out.std = c.sig.unaryExpr([&](double s) { return std::max(floor, std::exp(lo + (hi - lo) * s)); });
  c.std = out.std;
  return out;
}

void SequenceModel::backward(const ForwardCache& c, const Mat& dmean, const Mat& dstd,
                             ParamStore& grads) const {
  const int B = c.batch;
  const int L = c.len;
  const int E = cfg_.embed_dim;
  const int H = cfg_.n_heads;
  const int hd = E / H;
  const Eigen::Index N = static_cast<Eigen::Index>(B) * L;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  if (grads.size() != params_.size()) throw InvalidInput("gradient buffer layout mismatch");

  // Head.
  const double lo = std::log(cfg_.min_std);
  const double hi = std::log(cfg_.max_std);
  Mat dz = (dstd.array() * c.std.array() * (hi - lo) * c.sig.array() * (1.0 - c.sig.array())).matrix();
  grads.mat(head_wm_).noalias() += c.xf.transpose() * dmean;
  grads.mat(head_bm_).row(0) += dmean.colwise().sum();
  grads.mat(head_ws_).noalias() += c.xf.transpose() * dz;
  grads.mat(head_bs_).row(0) += dz.colwise().sum();
  Mat dxf = dmean * params_.mat(head_wm_).transpose() + dz * params_.mat(head_ws_).transpose();
  Mat dx = layer_norm_backward(dxf, c.lnf, params_.mat(lnf_g_), grads.mat(lnf_g_), grads.mat(lnf_b_));

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& ids = layers_[li];
    const auto& bc = c.blocks[li];
    // Feed-forward branch.
    Mat df2 = c.train ? Mat(dx.cwiseProduct(bc.drop_ff)) : dx;
    grads.mat(ids.w2).noalias() += bc.g.transpose() * df2;
    grads.mat(ids.b2).row(0) += df2.colwise().sum();
    Mat dg = df2 * params_.mat(ids.w2).transpose();
    Mat df1 = gelu_backward(dg, bc.f1, bc.g_tanh);
    grads.mat(ids.w1).noalias() += bc.c.transpose() * df1;
    grads.mat(ids.b1).row(0) += df1.colwise().sum();
    Mat dc = df1 * params_.mat(ids.w1).transpose();
    dx += layer_norm_backward(dc, bc.ln2, params_.mat(ids.ln2_g), grads.mat(ids.ln2_g),
                              grads.mat(ids.ln2_b));

    // Attention branch.
    Mat dout = c.train ? Mat(dx.cwiseProduct(bc.drop_attn)) : dx;
    grads.mat(ids.wo).noalias() += bc.att.transpose() * dout;
    grads.mat(ids.bo).row(0) += dout.colwise().sum();
    Mat datt = dout * params_.mat(ids.wo).transpose();
    Mat dqkv = Mat::Zero(N, 3 * E);
    for (int b = 0; b < B; ++b) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(b) * L;
      for (int h = 0; h < H; ++h) {
        const Mat& p = bc.probs[static_cast<std::size_t>(b) * H + h];
        auto q = bc.qkv.block(r0, h * hd, L, hd);
        auto k = bc.qkv.block(r0, E + h * hd, L, hd);
        auto v = bc.qkv.block(r0, 2 * E + h * hd, L, hd);
        Mat dO = datt.block(r0, h * hd, L, hd);
        Mat dP = dO * v.transpose();
        dqkv.block(r0, 2 * E + h * hd, L, hd) = p.transpose() * dO;
        Vec rs = (dP.array() * p.array()).rowwise().sum();
        Mat dS = (p.array() * (dP.colwise() - rs).array()).matrix() * scale;
        dqkv.block(r0, h * hd, L, hd) = dS * k;
        dqkv.block(r0, E + h * hd, L, hd) = dS.transpose() * q;
      }
    }
    grads.mat(ids.wqkv).noalias() += bc.a.transpose() * dqkv;
    grads.mat(ids.bqkv).row(0) += dqkv.colwise().sum();
    Mat da = dqkv * params_.mat(ids.wqkv).transpose();
    dx += layer_norm_backward(da, bc.ln1, params_.mat(ids.ln1_g), grads.mat(ids.ln1_g),
                              grads.mat(ids.ln1_b));
  }

  if (c.train) dx = dx.cwiseProduct(c.drop_emb);
  auto dpos = grads.mat(pos_);
  for (int b = 0; b < B; ++b) dpos.topRows(L) += dx.middleRows(static_cast<Eigen::Index>(b) * L, L);
  if (algo_table_) {
    auto dtable = grads.mat(*algo_table_);
    for (Eigen::Index r = 0; r < N; ++r) {
      if (c.prefix_algo[r] >= 0) {
        dtable.row(c.prefix_algo[r]) += dx.row(r);
        dx.row(r).setZero();
      }
    }
  }
  grads.mat(emb_w2_).noalias() += c.h1.transpose() * dx;
  grads.mat(emb_b2_).row(0) += dx.colwise().sum();
  Mat dh1 = dx * params_.mat(emb_w2_).transpose();
  Mat dh1pre = gelu_backward(dh1, c.h1pre, c.h1_tanh);
  Mat u = c.inputs;
  if (cfg_.variant == ModelVariant::BehaviorCloning) u.col(cfg_.x_dim + 1).setZero();
  grads.mat(emb_w1_).noalias() += u.transpose() * dh1pre;
  grads.mat(emb_b1_).row(0) += dh1pre.colwise().sum();
}

double nll_loss(const Prediction& pred, const Mat& targets, std::span<const std::uint8_t> mask,
                Mat* dmean, Mat* dstd) {
  const auto n = pred.mean.rows();
  const auto d = pred.mean.cols();
  if (targets.rows() != n || targets.cols() != d || pred.std.rows() != n ||
      static_cast<Eigen::Index>(mask.size()) != n) {
    throw InvalidInput("nll_loss: shape mismatch");
  }
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  std::size_t count = 0;
  for (auto m : mask) count += m ? 1 : 0;
  if (dmean) dmean->setZero(n, d);
  if (dstd) dstd->setZero(n, d);
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  double total = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    if (!mask[r]) continue;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double s = pred.std(r, j);
      const double diff = targets(r, j) - pred.mean(r, j);
      total += half_log_2pi + std::log(s) + diff * diff / (2.0 * s * s);
      if (dmean) (*dmean)(r, j) = -diff / (s * s) * inv;
      if (dstd) (*dstd)(r, j) = (1.0 / s - diff * diff / (s * s * s)) * inv;
    }
  }
  return total * inv;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  const auto& params = ckpt.model.params();
  nlohmann::json header;
  header["format"] = "ribbo-checkpoint";
  header["version"] = ModelCheckpoint::kVersion;
  header["config"] = model_config_to_json(ckpt.model.config());
  header["normalization"] = {{"mean_worst", ckpt.normalization.mean_worst},
                             {"mean_best", ckpt.normalization.mean_best}};
  header["meta"] = training_meta_to_json(ckpt.meta);
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  auto add_tensor = [&](const std::string& name, int rows, int cols) {
    tensors.push_back({{"name", name},
                       {"shape", {rows, cols}},
                       {"dtype", "f64"},
                       {"offset", offset}});
    offset += static_cast<std::uint64_t>(rows) * cols * 8;
  };
  for (const auto& e : params.entries()) add_tensor(e.name, e.rows, e.cols);
  const int n = static_cast<int>(params.size());
  if (!ckpt.adam_m.empty()) {
    add_tensor("optimizer.adam_m", 1, n);
    add_tensor("optimizer.adam_v", 1, n);
  }
  header["tensors"] = tensors;
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, ModelCheckpoint::kVersion);
  write_u64(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (std::size_t id = 0; id < params.entries().size(); ++id) {
    const auto m = params.mat(id);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) write_f64(out, m(i, j));
    }
  }
  if (!ckpt.adam_m.empty()) {
    if (ckpt.adam_m.size() != params.size() || ckpt.adam_v.size() != params.size()) {
      throw InvalidInput("optimizer state does not match the parameter count");
    }
    for (double v : ckpt.adam_m) write_f64(out, v);
    for (double v : ckpt.adam_v) write_f64(out, v);
  }
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 20 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + " is not a checkpoint file");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = static_cast<std::uint32_t>(read_uint(buf, pos, 4));
  if (version != ModelCheckpoint::kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = read_uint(buf, pos, 8);
  if (pos + header_len > buf.size()) throw FormatError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  pos += header_len;
  const std::size_t data_start = pos;

  ModelCheckpoint ckpt;
  ModelConfig cfg = model_config_from_json(header.at("config"));
  ckpt.model = SequenceModel(cfg, 0);
  ckpt.normalization.mean_worst = header.at("normalization").at("mean_worst").get<double>();
  ckpt.normalization.mean_best = header.at("normalization").at("mean_best").get<double>();
  ckpt.meta = training_meta_from_json(header.at("meta"));

  auto& params = ckpt.model.params();
  std::size_t seen = 0;
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const int rows = t.at("shape").at(0).get<int>();
    const int cols = t.at("shape").at(1).get<int>();
    if (t.at("dtype").get<std::string>() != "f64") throw FormatError("unsupported dtype in " + name);
    std::size_t p = data_start + t.at("offset").get<std::size_t>();
    if (p + static_cast<std::size_t>(rows) * cols * 8 > buf.size()) {
      throw FormatError("tensor " + name + " extends past the end of the file");
    }
    if (name == "optimizer.adam_m" || name == "optimizer.adam_v") {
      auto& dst = name == "optimizer.adam_m" ? ckpt.adam_m : ckpt.adam_v;
      dst.resize(static_cast<std::size_t>(cols));
      for (auto& v : dst) v = read_f64(buf, p);
      continue;
    }
    const auto id = params.find(name);
    if (!id) throw FormatError("checkpoint tensor " + name + " is unknown to the model");
    auto m = params.mat(*id);
    if (m.rows() != rows || m.cols() != cols) throw FormatError("shape mismatch for " + name);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = read_f64(buf, p);
    }
    ++seen;
  }
  if (seen != params.entries().size()) throw FormatError("checkpoint is missing tensors");
  return ckpt;
}

}  // namespace ribbo
