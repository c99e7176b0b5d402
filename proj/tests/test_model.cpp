#include <cmath>
#include <fstream>

#include "doctest.h"
#include "ribbo/model.hpp"
#include "ribbo/trainer.hpp"
#include "test_util.hpp"

using namespace ribbo;

namespace {

ModelConfig tiny(ModelVariant v = ModelVariant::Ribbo) {
  ModelConfig c;
  c.x_dim = 2;
  c.embed_dim = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ff_dim = 16;
  c.dropout = 0.0;
  c.max_len = 6;
  c.variant = v;
  return c;
}

std::vector<Token> random_tokens(int len, int dim, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Token> seq(len);
  for (int t = 0; t < len; ++t) {
    seq[t].x = Vec::NullaryExpr(dim, [&] { return u(rng); });
    seq[t].y = u(rng);
    seq[t].rtg = 3.0 * u(rng);
    seq[t].is_pad = t == 0;
  }
  return seq;
}

double density_oracle_nll(const Vec& mean, const Vec& std, const Vec& x) {
  double p = 1.0;
  for (int j = 0; j < x.size(); ++j) {
    const double z = (x[j] - mean[j]) / std[j];
    p *= std::exp(-0.5 * z * z) / (std::sqrt(2.0 * M_PI) * std[j]);
  }
  return -std::log(p);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation and presets") {
  ModelConfig c = tiny();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const ModelConfig paper = model_preset("paper", 10, 51);
  CHECK(paper.embed_dim == 256);
  CHECK(paper.n_layers == 12);
  CHECK(paper.n_heads == 8);
  CHECK(paper.ff_dim == 1024);
  CHECK(paper.dropout == 0.1);
  const ModelConfig desk = model_preset("desk", 2, 31);
  CHECK(desk.embed_dim == 64);
  CHECK(desk.n_layers == 4);
  CHECK(desk.n_heads == 4);
  CHECK(desk.ff_dim == 256);
  for (auto v : {ModelVariant::Ribbo, ModelVariant::BehaviorCloning, ModelVariant::AlgoId}) {
    CHECK(model_variant_from_string(to_string(v)) == v);
  }
}

TEST_CASE("embedding shape, determinism, bc rtg invariance") {
  const SequenceModel m(tiny(), 1);
  Vec x(2);
  x << 0.3, 0.7;
  const Vec e = m.embed_triplet(x, 0.4, 1.2, false);
  CHECK(e.size() == 8);
  CHECK(e == m.embed_triplet(x, 0.4, 1.2, false));
  CHECK(e != m.embed_triplet(x, 0.4, 1.3, false));
  CHECK_THROWS_AS(m.embed_triplet(x, std::nan(""), 1.2, false), InvalidInput);
  CHECK_THROWS_AS(m.embed_triplet(Vec::Zero(3), 0.0, 0.0, false), InvalidInput);

  const SequenceModel bc(tiny(ModelVariant::BehaviorCloning), 1);
  CHECK(bc.embed_triplet(x, 0.4, 1.2, false) == bc.embed_triplet(x, 0.4, -7.0, false));

  // BC forward outputs ignore the rtg channel as well.
  Rng rng(2);
  auto seq = random_tokens(5, 2, rng);
  auto seq2 = seq;
  for (auto& t : seq2) t.rtg += 5.0;
  const auto a = bc.forward(make_batch({seq}));
  const auto b = bc.forward(make_batch({seq2}));
  CHECK(a.mean == b.mean);
  CHECK(a.std == b.std);
}

TEST_CASE("forward shapes, causality and positional sensitivity") {
  ModelConfig c = tiny();
  c.embed_dim = 16;
  c.n_layers = 2;
  c.n_heads = 4;
  c.max_len = 8;
  const SequenceModel m(c, 3);
  Rng rng(4);
  const auto seq = random_tokens(3, 2, rng);
  const auto p = m.forward(make_batch({seq}));
  CHECK(p.mean.rows() == 3);
  CHECK(p.mean.cols() == 2);
  CHECK(p.std.rows() == 3);
  CHECK(p.std.cols() == 2);

  const auto base_seq = random_tokens(8, 2, rng);
  const auto base = m.forward(make_batch({base_seq}));
  for (int t = 0; t < 7; ++t) {
    for (int trial = 0; trial < 3; ++trial) {
      auto mod = base_seq;
      for (int k = t + 1; k < 8; ++k) mod[k] = random_tokens(2, 2, rng)[1];
      const auto q = m.forward(make_batch({mod}));
      for (int r = 0; r <= t; ++r) {
        CHECK((q.mean.row(r) - base.mean.row(r)).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK((q.std.row(r) - base.std.row(r)).cwiseAbs().maxCoeff() <= 1e-6);
      }
    }
  }
  auto swapped = base_seq;
  std::swap(swapped[2], swapped[5]);
  const auto s = m.forward(make_batch({swapped}));
  CHECK((s.mean.row(7) - base.mean.row(7)).cwiseAbs().maxCoeff() > 1e-9);

  CHECK_THROWS_AS(m.forward(make_batch({random_tokens(9, 2, rng)})), InvalidInput);
}

TEST_CASE("nll loss") {
  Prediction p;
  p.mean = Mat::Constant(1, 2, 0.4);
  p.std = Mat::Ones(1, 2);
  const Mat target = p.mean;
  const std::vector<std::uint8_t> mask{1};
  const double base = nll_loss(p, target, mask);
  CHECK(base == doctest::Approx(std::log(2 * M_PI)).epsilon(1e-14));
  CHECK(base == doctest::Approx(1.83788).epsilon(1e-5));
  p.std *= 2.0;
  CHECK(nll_loss(p, target, mask) - base == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));

  Rng rng(5);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Prediction q;
  q.mean = Mat::NullaryExpr(4, 3, [&] { return u(rng); });
  q.std = Mat::NullaryExpr(4, 3, [&] { return u(rng); });
  const Mat tg = Mat::NullaryExpr(4, 3, [&] { return u(rng); });
  const std::vector<std::uint8_t> m2{1, 0, 1, 1};
  double want = 0.0;
  for (int r : {0, 2, 3}) {
    want += density_oracle_nll(q.mean.row(r).transpose(), q.std.row(r).transpose(), tg.row(r).transpose());
  }
  CHECK(std::abs(nll_loss(q, tg, m2) - want / 3.0) <= 1e-10);
}

TEST_CASE("analytic gradients match central differences") {
  for (auto v : {ModelVariant::Ribbo, ModelVariant::AlgoId}) {
    CAPTURE(to_string(v));
    SequenceModel m(tiny(v), 7);
    Rng rng(8);
    std::vector<std::vector<Token>> seqs{random_tokens(4, 2, rng), random_tokens(4, 2, rng)};
    const TokenBatch batch = make_batch(seqs, v == ModelVariant::AlgoId ? std::vector<int>{1, 4}
                                                                         : std::vector<int>{});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Mat targets = Mat::NullaryExpr(8, 2, [&] { return u(rng); });
    const std::vector<std::uint8_t> mask{1, 1, 1, 0, 1, 1, 1, 0};
    ParamStore grads = m.params().zeros_like();
    loss_and_gradient(m, batch, targets, mask, &grads);

    auto& w = m.params().data();
    const double h = 1e-4;
    double worst = 0.0;
    for (const auto& e : m.params().entries()) {
      double num2 = 0.0, diff2 = 0.0, ana2 = 0.0;
      for (std::size_t i = e.offset; i < e.offset + e.size(); ++i) {
        const double keep = w[i];
        w[i] = keep + h;
        const double lp = loss_and_gradient(m, batch, targets, mask, nullptr);
        w[i] = keep - h;
        const double lm = loss_and_gradient(m, batch, targets, mask, nullptr);
        w[i] = keep;
        const double num = (lp - lm) / (2 * h);
        const double ana = grads.data()[i];
        num2 += num * num;
        ana2 += ana * ana;
        diff2 += (num - ana) * (num - ana);
        CHECK(std::abs(num - ana) <= 1e-4 * std::max(std::abs(num), std::abs(ana)) + 1e-8);
      }
      const double rel = std::sqrt(diff2) / std::max(1e-12, std::max(std::sqrt(num2), std::sqrt(ana2)));
      CAPTURE(e.name);
      CHECK(rel < 1e-4);
      worst = std::max(worst, rel);
    }
    MESSAGE("worst per-tensor relative error " << worst);
  }
}

TEST_CASE("std floor over many random forwards") {
  ModelConfig c = tiny();
  c.max_len = 10;
  SequenceModel m(c, 9);
  // Push the std pre-activation to both extremes.
  auto ws = m.params().mat(*m.params().find("head.ws"));
  ws *= 400.0;
  Rng rng(10);
  std::normal_distribution<double> g(0.0, 5.0);
  double lo = 1e300;
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::vector<Token>> seqs;
    for (int b = 0; b < 10; ++b) {
      auto s = random_tokens(10, 2, rng);
      for (auto& t : s) {
        t.y = g(rng);
        t.rtg = g(rng);
      }
      seqs.push_back(std::move(s));
    }
    const auto p = m.forward(make_batch(seqs));
    CHECK(p.std.allFinite());
    CHECK(p.mean.allFinite());
    lo = std::min(lo, p.std.minCoeff());
  }
  CHECK(lo >= c.min_std);
}

TEST_CASE("algo id prefix") {
  SequenceModel m(tiny(ModelVariant::AlgoId), 11);
  CHECK(m.algo_id_prefix(2) == m.algo_id_prefix(2));
  const Vec a = m.algo_id_prefix(0), b = m.algo_id_prefix(5);
  CHECK(a.dot(b) / (a.norm() * b.norm()) < 1.0);
  CHECK_THROWS_AS(m.algo_id_prefix(7), InvalidInput);
  CHECK_THROWS_AS(m.algo_id_prefix(-1), InvalidInput);
  const SequenceModel r(tiny(), 11);
  CHECK_THROWS_AS(r.algo_id_prefix(0), InvalidInput);

  // Prefix substitution changes the prediction at the pad position only via the id.
  Rng rng(12);
  const auto seq = random_tokens(4, 2, rng);
  const auto p1 = m.forward(make_batch({seq}, {1}));
  const auto p3 = m.forward(make_batch({seq}, {3}));
  CHECK((p1.mean.row(0) - p3.mean.row(0)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("checkpoint round trip") {
  ModelCheckpoint ck;
  ck.model = SequenceModel(tiny(ModelVariant::AlgoId), 13);
  ck.normalization = {-3.5, 12.25};
  ck.meta.step = 77;
  ck.meta.seed = 5;
  ck.meta.tau = 5;
  ck.meta.excluded_algorithms = {BehaviorId::ShuffledGrid};
  ck.meta.distributions = {testutil::sphere_distribution(2)};
  ck.adam_m.assign(ck.model.params().size(), 0.25);
  ck.adam_v.assign(ck.model.params().size(), 0.5);
  const auto dir = testutil::scratch_dir("ckpt");
  save_checkpoint(ck, dir / "m.ckpt");
  const ModelCheckpoint back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.model.config() == ck.model.config());
  CHECK(back.model.params().data() == ck.model.params().data());
  CHECK(back.normalization.mean_worst == -3.5);
  CHECK(back.normalization.mean_best == 12.25);
  CHECK(back.meta.step == 77);
  CHECK(back.meta.seed == 5);
  CHECK(back.meta.tau == 5);
  CHECK(back.meta.excluded_algorithms == ck.meta.excluded_algorithms);
  REQUIRE(back.meta.distributions.size() == 1);
  CHECK(back.meta.distributions[0].space == ck.meta.distributions[0].space);
  CHECK(back.adam_m == ck.adam_m);
  CHECK(back.adam_v == ck.adam_v);
  Rng rng(14);
  const auto batch = make_batch({random_tokens(5, 2, rng)}, {2});
  const auto p = ck.model.forward(batch);
  const auto q = back.model.forward(batch);
  CHECK(p.mean == q.mean);
  CHECK(p.std == q.std);

  {
    std::fstream f(dir / "m.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt"), FormatError);
  save_checkpoint(ck, dir / "m.ckpt");
  std::filesystem::resize_file(dir / "m.ckpt", std::filesystem::file_size(dir / "m.ckpt") - 16);
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt"), FormatError);
}

}  // TEST_SUITE
