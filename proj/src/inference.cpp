#include "ribbo/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace ribbo {

namespace {

double parse_number(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError("invalid number in " + std::string(what) + ": '" + std::string(s) + "'");
  }
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RtgStrategy RtgStrategy::parse(std::string_view text) {
  if (text == "hrr") return hrr();
  const auto colon = text.find(':');
  if (colon != std::string_view::npos) {
    const auto head = text.substr(0, colon);
    const auto tail = text.substr(colon + 1);
    if (head == "naive") return naive(parse_number(tail, "strategy"));
    if (head == "const") return constant(parse_number(tail, "strategy"));
  }
  throw ConfigError("unknown rtg strategy '" + std::string(text) + "' (hrr, naive:R0, const:c)");
}

std::string RtgStrategy::str() const {
  switch (kind) {
    case Kind::Hrr: return "hrr";
    case Kind::Naive: return "naive:" + fmt(value);
    case Kind::Constant: return "const:" + fmt(value);
  }
  return "unknown";
}

std::string_view to_string(SamplingMode m) {
  return m == SamplingMode::Mean ? "mean" : "stochastic";
}

SamplingMode sampling_mode_from_string(std::string_view name) {
  if (name == "stochastic") return SamplingMode::Stochastic;
  if (name == "mean") return SamplingMode::Mean;
  throw ConfigError("unknown sampling mode: " + std::string(name));
}

void InferenceConfig::validate() const {
  if (budget < 1) throw ConfigError("inference budget must be at least 1");
  if (context_limit != 0 && context_limit < 2) throw ConfigError("context_limit must be >= 2");
}

NormalizedObjective::NormalizedObjective(const TaskInstance& task, NormalizationStats stats)
    : task_(&task), stats_(stats) {
  if (!(stats.mean_best > stats.mean_worst) || !std::isfinite(stats.mean_best) ||
      !std::isfinite(stats.mean_worst)) {
    throw ConfigError("checkpoint normalization statistics are missing or degenerate");
  }
}

double NormalizedObjective::normalize(double y_raw) const {
  return (y_raw - stats_.mean_worst) / (stats_.mean_best - stats_.mean_worst);
}

NormalizedObjective::Value NormalizedObjective::operator()(const Vec& x_unit) const {
  const double raw = evaluate(*task_, denormalize_x(x_unit, task_->space));
  return {raw, normalize(raw)};
}

InferenceHistory InferenceHistory::start(int dim, double initial_rtg, int algo) {
  InferenceHistory h;
  h.aug.xs.push_back(padding_x(dim));
  h.aug.ys.push_back(kPaddingY);
  h.aug.rtgs.push_back(initial_rtg);
  h.aug.algo = algo;
  h.running_rtg = initial_rtg;
  h.algo = algo;
  return h;
}

TokenBatch build_context(const InferenceHistory& h, int context_limit) {
  const int n = static_cast<int>(h.aug.ys.size());
  if (n < 1) throw InvalidInput("history has no padding token");
  if (context_limit < 2) throw InvalidInput("context_limit must be >= 2");
  const int first = std::max(1, n - (context_limit - 1));
  std::vector<Token> seq;
  seq.push_back({h.aug.xs[0], h.aug.ys[0], h.aug.rtgs[0], true});
  for (int i = first; i < n; ++i) seq.push_back({h.aug.xs[i], h.aug.ys[i], h.aug.rtgs[i], false});
  return make_batch({seq}, {h.algo});
}

GaussianPrediction predict_next(const SequenceModel& model, const InferenceHistory& h,
                                int context_limit) {
  if (h.aug.xs.front().size() != model.config().x_dim) {
    throw ConfigError("model x_dim does not match the task dimension");
  }
  const TokenBatch tokens = build_context(h, context_limit);
  const Prediction pred = model.forward(tokens);
  return pred.at(pred.mean.rows() - 1);
}

Vec sample_query(const GaussianPrediction& pred, SamplingMode mode, Rng& rng) {
  Vec x = pred.mean;
  if (mode == SamplingMode::Stochastic) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += pred.std[i] * standard_normal(rng);
  }
  return x.cwiseMax(0.0).cwiseMin(1.0);
}

void relabel_append(AugmentedTrajectory& aug, const Vec& x, double y, double y_star,
                    double immediate) {
  const double r = y_star - y;
  for (double& g : aug.rtgs) g += r;
  aug.xs.push_back(x);
  aug.ys.push_back(y);
  aug.rtgs.push_back(immediate);
}

namespace {

StepRecord propose_and_evaluate(const InferenceHistory& h, const SequenceModel& model,
                                const NormalizedObjective& f, int context_limit,
                                SamplingMode mode, Rng& rng) {
  if (f.task().dim() != model.config().x_dim) {
    throw ConfigError("model x_dim does not match the task dimension");
  }
  StepRecord rec;
  rec.context_rtg = h.aug.rtgs.back();
  rec.prediction = predict_next(model, h, context_limit);
  rec.x_unit = sample_query(rec.prediction, mode, rng);
  const auto v = f(rec.x_unit);
  rec.y_raw = v.raw;
  rec.y_norm = v.norm;
  return rec;
}

}  // namespace

StepRecord hrr_step(InferenceHistory& h, const SequenceModel& model,
                    const NormalizedObjective& f, double y_star_norm, int context_limit,
                    SamplingMode mode, Rng& rng, double immediate) {
  StepRecord rec = propose_and_evaluate(h, model, f, context_limit, mode, rng);
  relabel_append(h.aug, rec.x_unit, rec.y_norm, y_star_norm, immediate);
  return rec;
}

StepRecord naive_step(InferenceHistory& h, const SequenceModel& model,
                      const NormalizedObjective& f, double y_star_norm, int context_limit,
                      SamplingMode mode, Rng& rng) {
  StepRecord rec = propose_and_evaluate(h, model, f, context_limit, mode, rng);
  h.running_rtg -= y_star_norm - rec.y_norm;
  h.aug.xs.push_back(rec.x_unit);
  h.aug.ys.push_back(rec.y_norm);
  h.aug.rtgs.push_back(h.running_rtg);
  return rec;
}

InferenceResult run_optimization(const ModelCheckpoint& ckpt, const TaskInstance& task,
                                 const InferenceConfig& cfg) {
  cfg.validate();
  const auto& model = ckpt.model;
  const auto& mc = model.config();
  if (task.dim() != mc.x_dim) throw ConfigError("model x_dim does not match the task dimension");
  int ctx = cfg.context_limit > 0 ? cfg.context_limit : (ckpt.meta.tau > 1 ? ckpt.meta.tau : mc.max_len);
  ctx = std::min(ctx, mc.max_len);
  if (ctx < 2) throw ConfigError("context_limit must be >= 2");
  int algo = -1;
  if (mc.variant == ModelVariant::AlgoId) {
    if (cfg.algo_id < 0 || cfg.algo_id >= mc.n_algos) {
      throw ConfigError("the algoid variant needs an algorithm id at inference");
    }
    algo = cfg.algo_id;
  }
  const NormalizedObjective f(task, ckpt.normalization);
  constexpr double y_star = 1.0;
  const bool naive = cfg.strategy.kind == RtgStrategy::Kind::Naive;
  const double immediate = cfg.strategy.kind == RtgStrategy::Kind::Constant ? cfg.strategy.value : 0.0;

  InferenceResult res;
  res.history = InferenceHistory::start(task.dim(), naive ? cfg.strategy.value : 0.0, algo);
  res.trajectory.task = task.ref;
  res.trajectory.seed = cfg.seed;
  Rng rng(cfg.seed);
  for (int t = 0; t < cfg.budget; ++t) {
    StepRecord rec = naive ? naive_step(res.history, model, f, y_star, ctx, cfg.sampling, rng)
                           : hrr_step(res.history, model, f, y_star, ctx, cfg.sampling, rng, immediate);
    res.trajectory.xs.push_back(rec.x_unit);
    res.trajectory.ys.push_back(rec.y_raw);
    res.steps.push_back(std::move(rec));
  }
  return res;
}

void write_inference_trace(const InferenceResult& r, const TaskInstance& task,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  const int d = task.dim();
  out << "t";
  for (int i = 0; i < d; ++i) out << ",x" << i;
  out << ",y,y_norm,context_rtg,final_rtg";
  for (int i = 0; i < d; ++i) out << ",std" << i;
  out << '\n';
  for (std::size_t t = 0; t < r.steps.size(); ++t) {
    const auto& s = r.steps[t];
    const Vec x = denormalize_x(s.x_unit, task.space);
    out << t + 1;
    for (int i = 0; i < d; ++i) out << ',' << fmt(x[i]);
    out << ',' << fmt(s.y_raw) << ',' << fmt(s.y_norm) << ',' << fmt(s.context_rtg) << ','
        << fmt(r.history.aug.rtgs[t + 1]);
    for (int i = 0; i < d; ++i) out << ',' << fmt(s.prediction.std[i]);
    out << '\n';
  }
}

}  // namespace ribbo
