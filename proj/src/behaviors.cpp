#include "ribbo/behaviors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace ribbo {

std::string_view to_string(BehaviorId id) {
  switch (id) {
    case BehaviorId::RandomSearch: return "random_search";
    case BehaviorId::ShuffledGrid: return "shuffled_grid";
    case BehaviorId::HillClimbing: return "hill_climbing";
    case BehaviorId::RegularizedEvolution: return "regularized_evolution";
    case BehaviorId::Firefly: return "firefly";
    case BehaviorId::CmaEs: return "cma_es";
    case BehaviorId::GpEi: return "gp_ei";
  }
  return "unknown";
}

std::vector<BehaviorId> all_behaviors() {
  return {BehaviorId::RandomSearch, BehaviorId::ShuffledGrid, BehaviorId::HillClimbing,
          BehaviorId::RegularizedEvolution, BehaviorId::Firefly, BehaviorId::CmaEs,
          BehaviorId::GpEi};
}

BehaviorId behavior_from_string(std::string_view name) {
  for (auto id : all_behaviors()) {
    if (to_string(id) == name) return id;
  }
  throw InvalidInput("unknown behavior algorithm: " + std::string(name));
}

// ---------------------------------------------------------------------------

Behavior::Behavior(BehaviorId id, SearchSpace space, std::uint64_t seed)
    : id_(id), space_(std::move(space)), rng_(seed) {}

Vec Behavior::ask() {
  if (pending_) throw ProtocolError("ask called twice without an intervening tell");
  Vec x = space_.clamp(propose());
  pending_ = x;
  return x;
}

void Behavior::tell(const Vec& x, double y) {
  if (!pending_) throw ProtocolError("tell called without a preceding ask");
  if (x.size() != pending_->size() || x != *pending_) {
    throw ProtocolError("tell: point does not match the most recent ask");
  }
  pending_.reset();
  ++n_told_;
  observe(x, y);
}

Vec Behavior::to_unit(const Vec& x) const {
  return ((x - space_.lower()).array() / space_.width().array()).matrix();
}

Vec Behavior::from_unit(const Vec& u) const {
  return space_.lower() + Vec(u.array() * space_.width().array());
}

Vec Behavior::mutate_one(const Vec& x) {
  Vec out = x;
  int k = std::uniform_int_distribution<int>(0, space_.dim() - 1)(rng_);
  out[k] = uniform(rng_, space_.lower()[k], space_.upper()[k]);
  return out;
}

// ---------------------------------------------------------------------------

RandomSearch::RandomSearch(SearchSpace space, std::uint64_t seed)
    : Behavior(BehaviorId::RandomSearch, std::move(space), seed) {}

Vec RandomSearch::propose() { return space().sample_uniform(rng()); }

// ---------------------------------------------------------------------------

ShuffledGrid::ShuffledGrid(SearchSpace space, std::uint64_t seed)
    : Behavior(BehaviorId::ShuffledGrid, std::move(space), seed) {}

Vec ShuffledGrid::grid_point(const std::vector<int>& idx) const {
  Vec x(space().dim());
  for (int i = 0; i < space().dim(); ++i) {
    x[i] = space().lower()[i] + idx[i] * space().width()[i] / (kPointsPerAxis - 1);
  }
  return x;
}

Vec ShuffledGrid::propose() {
  if (space().dim() == 1) {
    if (cursor_ == order_.size()) {
      order_.resize(kPointsPerAxis);
      std::iota(order_.begin(), order_.end(), 0);
      std::shuffle(order_.begin(), order_.end(), rng());
      cursor_ = 0;
    }
    return grid_point({order_[cursor_++]});
  }
  std::uniform_int_distribution<int> pick(0, kPointsPerAxis - 1);
  std::vector<int> idx(space().dim());
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    for (auto& k : idx) k = pick(rng());
    if (std::find(visited_.begin(), visited_.end(), idx) == visited_.end()) break;
  }
  visited_.push_back(idx);
  return grid_point(idx);
}

// ---------------------------------------------------------------------------

HillClimbing::HillClimbing(SearchSpace space, std::uint64_t seed)
    : Behavior(BehaviorId::HillClimbing, std::move(space), seed) {}

Vec HillClimbing::propose() {
  if (!best_x_) return space().sample_uniform(rng());
  return mutate_one(*best_x_);
}

void HillClimbing::observe(const Vec& x, double y) {
  if (!best_x_ || y > best_y_) {
    best_x_ = x;
    best_y_ = y;
  }
}

// ---------------------------------------------------------------------------

RegularizedEvolution::RegularizedEvolution(SearchSpace space, std::uint64_t seed, int population,
                                           int tournament)
    : Behavior(BehaviorId::RegularizedEvolution, std::move(space), seed),
      capacity_(population),
      tournament_(tournament) {
  if (capacity_ < 1 || tournament_ < 1) {
    throw InvalidInput("regularized evolution needs positive population and tournament sizes");
  }
}

Vec RegularizedEvolution::propose() {
  if (static_cast<int>(population_.size()) < capacity_) return space().sample_uniform(rng());
  std::vector<std::size_t> idx(population_.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto k = std::min<std::size_t>(tournament_, idx.size());
  // Partial Fisher-Yates draws the tournament without replacement.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng())]);
  }
  std::size_t winner = idx[0];
  for (std::size_t i = 1; i < k; ++i) {
    if (population_[idx[i]].y > population_[winner].y) winner = idx[i];
  }
  return mutate_one(population_[winner].x);
}

void RegularizedEvolution::observe(const Vec& x, double y) {
  population_.push_back({x, y, births_++});
  if (static_cast<int>(population_.size()) > capacity_) population_.pop_front();
}

// ---------------------------------------------------------------------------

Firefly::Firefly(SearchSpace space, std::uint64_t seed, FireflyOptions opts, int budget_hint)
    : Behavior(BehaviorId::Firefly, std::move(space), seed),
      opts_(opts),
      budget_hint_(std::max(1, budget_hint)) {
  if (opts_.population < 1) throw InvalidInput("firefly population must be positive");
}

Vec Firefly::move(const std::vector<Vec>& positions, const std::vector<double>& brightness,
                  std::size_t i, const FireflyOptions& opts, double alpha, Rng& rng) {
  const Vec& origin = positions[i];
  Vec force = Vec::Zero(origin.size());
  int n = 0;
  for (std::size_t j = 0; j < positions.size(); ++j) {
    if (j == i || brightness[j] == brightness[i]) continue;
    const double sign = brightness[j] > brightness[i] ? 1.0 : -1.0;
    const Vec delta = positions[j] - origin;
    force += sign * opts.attraction * std::exp(-opts.absorption * delta.squaredNorm()) * delta;
    ++n;
  }
  Vec xi = origin;
  if (n > 0) xi += force / n;
  for (int k = 0; k < xi.size(); ++k) xi[k] += alpha * (uniform01(rng) - 0.5);
  return xi.cwiseMax(0.0).cwiseMin(1.0);
}

Vec Firefly::propose() {
  const int n = static_cast<int>(positions_.size());
  if (n < opts_.population) return space().sample_uniform(rng());
  const double frac = std::max(0.0, 1.0 - static_cast<double>(n_asked_) / budget_hint_);
  return from_unit(move(positions_, brightness_, current_, opts_, opts_.perturbation * frac, rng()));
}

void Firefly::observe(const Vec& x, double y) {
  ++n_asked_;
  if (static_cast<int>(positions_.size()) < opts_.population) {
    positions_.push_back(to_unit(x));
    brightness_.push_back(y);
    return;
  }
  if (y > brightness_[current_]) {
    positions_[current_] = to_unit(x);
    brightness_[current_] = y;
  }
  current_ = (current_ + 1) % positions_.size();
}

// ---------------------------------------------------------------------------

CmaEs::CmaEs(SearchSpace space, std::uint64_t seed, const CmaEsOptions& opts)
    : Behavior(BehaviorId::CmaEs, std::move(space), seed), n_(this->space().dim()) {
  const double n = n_;
  lambda_ = opts.population_size.value_or(4 + static_cast<int>(std::floor(3.0 * std::log(n))));
  if (lambda_ < 2) throw InvalidInput("cma-es population must be at least 2");
  mu_ = lambda_ / 2;
  weights_.resize(mu_);
  for (int i = 0; i < mu_; ++i) weights_[i] = std::log(mu_ + 0.5) - std::log(i + 1.0);
  weights_ /= weights_.sum();
  mueff_ = 1.0 / weights_.squaredNorm();
  cc_ = (4.0 + mueff_ / n) / (n + 4.0 + 2.0 * mueff_ / n);
  cs_ = (mueff_ + 2.0) / (n + mueff_ + 5.0);
  c1_ = 2.0 / ((n + 1.3) * (n + 1.3) + mueff_);
  cmu_ = std::min(1.0 - c1_, 2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((n + 2.0) * (n + 2.0) + mueff_));
  damps_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (n + 1.0)) - 1.0) + cs_;
  chin_ = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

  mean_ = opts.initial_mean ? to_unit(*opts.initial_mean) : Vec::Constant(n_, 0.5);
  sigma_ = opts.initial_sigma_fraction;
  cov_ = Mat::Identity(n_, n_);
  basis_ = Mat::Identity(n_, n_);
  scales_ = Vec::Ones(n_);
  path_c_ = Vec::Zero(n_);
  path_s_ = Vec::Zero(n_);
}

Vec CmaEs::mean() const { return from_unit(mean_); }

Vec CmaEs::propose() {
  Vec u;
  for (int attempt = 0; attempt < 10; ++attempt) {
    Vec z(n_);
    for (int i = 0; i < n_; ++i) z[i] = standard_normal(rng());
    u = mean_ + sigma_ * (basis_ * scales_.asDiagonal() * z);
    if ((u.array() >= 0.0).all() && (u.array() <= 1.0).all()) break;
  }
  return from_unit(u.cwiseMax(0.0).cwiseMin(1.0));
}

void CmaEs::observe(const Vec& x, double y) {
  generation_buffer_.emplace_back(to_unit(x), y);
  if (static_cast<int>(generation_buffer_.size()) == lambda_) {
    update_distribution();
    generation_buffer_.clear();
  }
}

void CmaEs::update_distribution() {
  auto& gen = generation_buffer_;
  std::stable_sort(gen.begin(), gen.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const Vec old_mean = mean_;
  Vec new_mean = Vec::Zero(n_);
  for (int i = 0; i < mu_; ++i) new_mean += weights_[i] * gen[i].first;
  mean_ = new_mean;
  const Vec yw = (mean_ - old_mean) / sigma_;

  // C^{-1/2} = B D^{-1} B^T
  const Mat inv_sqrt = basis_ * scales_.cwiseInverse().asDiagonal() * basis_.transpose();
  path_s_ = (1.0 - cs_) * path_s_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * (inv_sqrt * yw);
  const double ps_norm = path_s_.norm();
  const double denom = std::sqrt(1.0 - std::pow(1.0 - cs_, 2.0 * (generation_ + 1)));
  const bool hsig = ps_norm / denom < (1.4 + 2.0 / (n_ + 1.0)) * chin_;
  path_c_ = (1.0 - cc_) * path_c_ + (hsig ? std::sqrt(cc_ * (2.0 - cc_) * mueff_) : 0.0) * yw;

  Mat rank_mu = Mat::Zero(n_, n_);
  for (int i = 0; i < mu_; ++i) {
    Vec yi = (gen[i].first - old_mean) / sigma_;
    rank_mu += weights_[i] * yi * yi.transpose();
  }
  const double delta_h = hsig ? 0.0 : cc_ * (2.0 - cc_);
  cov_ = (1.0 - c1_ - cmu_) * cov_ + c1_ * (path_c_ * path_c_.transpose() + delta_h * cov_) +
         cmu_ * rank_mu;
  cov_ = 0.5 * (cov_ + cov_.transpose());

  sigma_ *= std::exp((cs_ / damps_) * (ps_norm / chin_ - 1.0));
  sigma_ = std::clamp(sigma_, 1e-12, 1.0);

  Eigen::SelfAdjointEigenSolver<Mat> eig(cov_);
  if (eig.info() == Eigen::Success) {
    basis_ = eig.eigenvectors();
    scales_ = eig.eigenvalues().cwiseMax(1e-20).cwiseSqrt();
  } else {
    cov_ = Mat::Identity(n_, n_);
    basis_ = Mat::Identity(n_, n_);
    scales_ = Vec::Ones(n_);
  }
  ++generation_;
}

// ---------------------------------------------------------------------------

GpEi::GpEi(SearchSpace space, std::uint64_t seed, GpEiOptions opts)
    : Behavior(BehaviorId::GpEi, std::move(space), seed),
      opts_(opts),
      warm_start_(opts.warm_start.value_or(std::max(5, this->space().dim()))),
      gp_(MaternKernel{0.2, 1.0}, opts.noise_variance) {}

void GpEi::refit() {
  const auto n = static_cast<Eigen::Index>(ys_.size());
  Vec y = Eigen::Map<const Vec>(ys_.data(), n);
  y_mean_ = y.mean();
  const double var = (y.array() - y_mean_).square().sum() / static_cast<double>(n);
  y_std_ = var > 0.0 ? std::sqrt(var) : 1.0;
  Vec z = (y.array() - y_mean_) / y_std_;

  if (!fitted_ || since_lengthscale_fit_ >= opts_.refit_every) {
    // Log-grid maximum-likelihood search over the lengthscale.
    double best_ll = -std::numeric_limits<double>::infinity();
    double best_l = lengthscale_;
    for (int k = 0; k < 12; ++k) {
      const double l = 0.02 * std::pow(100.0, k / 11.0);
      try {
        GpModel trial(MaternKernel{l, 1.0}, opts_.noise_variance);
        trial.fit(xs_, z);
        const double ll = trial.log_marginal_likelihood();
        if (ll > best_ll) {
          best_ll = ll;
          best_l = l;
        }
      } catch (const NumericalError&) {
      }
    }
    lengthscale_ = best_l;
    since_lengthscale_fit_ = 0;
  }
  gp_ = GpModel(MaternKernel{lengthscale_, 1.0}, opts_.noise_variance);
  gp_.fit(xs_, z);
  fitted_ = true;
}

double GpEi::ei_at(const Vec& u, double best) const {
  const auto p = gp_.posterior(u);
  return expected_improvement(p.mean, std::sqrt(p.variance), best);
}

GpEi::AcquisitionResult GpEi::maximize_acquisition() {
  if (!fitted_) throw MissingData("gp-ei acquisition requires a fitted model");
  const double best = gp_.values().maxCoeff();
  const int d = space().dim();
  AcquisitionResult res;
  res.pool.reserve(opts_.n_candidates);
  res.pool_ei.reserve(opts_.n_candidates);
  for (int i = 0; i < opts_.n_candidates; ++i) {
    Vec u(d);
    for (int k = 0; k < d; ++k) u[k] = uniform01(rng());
    res.pool_ei.push_back(ei_at(u, best));
    res.pool.push_back(std::move(u));
  }
  std::vector<std::size_t> order(res.pool.size());
  std::iota(order.begin(), order.end(), 0);
  const auto n_refine = std::min<std::size_t>(opts_.n_refine, order.size());
  std::partial_sort(order.begin(), order.begin() + n_refine, order.end(),
                    [&](std::size_t a, std::size_t b) { return res.pool_ei[a] > res.pool_ei[b]; });

  res.x_unit = res.pool[order[0]];
  res.ei = res.pool_ei[order[0]];
  for (std::size_t r = 0; r < n_refine; ++r) {
    Vec u = res.pool[order[r]];
    double val = res.pool_ei[order[r]];
    // Coordinate-wise pattern search with a halving step.
    for (double step = 0.1; step > 1e-3; step *= 0.5) {
      bool improved = true;
      while (improved) {
        improved = false;
        for (int k = 0; k < d; ++k) {
          for (double dir : {1.0, -1.0}) {
            Vec trial = u;
            trial[k] = std::clamp(trial[k] + dir * step, 0.0, 1.0);
            const double v = ei_at(trial, best);
            if (v > val) {
              val = v;
              u = std::move(trial);
              improved = true;
            }
          }
        }
      }
    }
    if (val > res.ei) {
      res.ei = val;
      res.x_unit = u;
    }
  }
  return res;
}

Vec GpEi::propose() {
  if (static_cast<int>(ys_.size()) < warm_start_ || !fitted_) return space().sample_uniform(rng());
  return from_unit(maximize_acquisition().x_unit);
}

void GpEi::observe(const Vec& x, double y) {
  xs_.push_back(to_unit(x));
  ys_.push_back(y);
  ++since_lengthscale_fit_;
  if (static_cast<int>(ys_.size()) >= warm_start_) refit();
}

// ---------------------------------------------------------------------------

std::unique_ptr<Behavior> make_behavior(BehaviorId id, const SearchSpace& space,
                                        std::uint64_t seed, const BehaviorOptions& opts) {
  switch (id) {
    case BehaviorId::RandomSearch: return std::make_unique<RandomSearch>(space, seed);
    case BehaviorId::ShuffledGrid: return std::make_unique<ShuffledGrid>(space, seed);
    case BehaviorId::HillClimbing: return std::make_unique<HillClimbing>(space, seed);
    case BehaviorId::RegularizedEvolution:
      return std::make_unique<RegularizedEvolution>(space, seed, opts.regevo_population,
                                                    opts.regevo_tournament);
    case BehaviorId::Firefly:
      return std::make_unique<Firefly>(space, seed, opts.firefly, opts.budget_hint);
    case BehaviorId::CmaEs: return std::make_unique<CmaEs>(space, seed, opts.cmaes);
    case BehaviorId::GpEi: return std::make_unique<GpEi>(space, seed, opts.gp);
  }
  throw InvalidInput("unknown behavior id");
}

std::vector<std::pair<Vec, double>> run_behavior(Behavior& behavior, const TaskInstance& task,
                                                 int budget) {
  std::vector<std::pair<Vec, double>> out;
  out.reserve(budget);
  for (int t = 0; t < budget; ++t) {
    Vec x = behavior.ask();
    double y = evaluate(task, x);
    behavior.tell(x, y);
    out.emplace_back(std::move(x), y);
  }
  return out;
}

}  // namespace ribbo
