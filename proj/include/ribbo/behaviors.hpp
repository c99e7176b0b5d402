#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "ribbo/common.hpp"
#include "ribbo/gp.hpp"
#include "ribbo/problems.hpp"

namespace ribbo {

enum class BehaviorId {
  RandomSearch,
  ShuffledGrid,
  HillClimbing,
  RegularizedEvolution,
  Firefly,
  CmaEs,
  GpEi,
};

inline constexpr int kNumBehaviors = 7;

std::string_view to_string(BehaviorId id);
BehaviorId behavior_from_string(std::string_view name);
std::vector<BehaviorId> all_behaviors();

struct FireflyOptions {
  int population = 20;
  double attraction = 1.0;   // beta0
  double absorption = 1.0;   // gamma, in normalized coordinates
  double perturbation = 0.1; // alpha at the first ask; decays linearly to 0
};

struct CmaEsOptions {
  std::optional<int> population_size;  // lambda; canonical default when empty
  std::optional<Vec> initial_mean;     // raw coordinates; box center when empty
  double initial_sigma_fraction = 0.3; // of the box width
};

struct GpEiOptions {
  double noise_variance = 1e-6;
  int n_candidates = 512;
  int n_refine = 8;
  int refit_every = 10;
  std::optional<int> warm_start;  // max(5, d) when empty
};

struct BehaviorOptions {
  int budget_hint = 100;  // horizon over which firefly perturbation decays
  int regevo_population = 25;
  int regevo_tournament = 5;
  FireflyOptions firefly;
  CmaEsOptions cmaes;
  GpEiOptions gp;
};

/// Ask/tell optimizer. `ask` and `tell` must strictly alternate and every
/// `tell` must echo the point returned by the preceding `ask`.
class Behavior {
 public:
  Behavior(BehaviorId id, SearchSpace space, std::uint64_t seed);
  virtual ~Behavior() = default;
  Behavior(const Behavior&) = delete;
  Behavior& operator=(const Behavior&) = delete;

  Vec ask();
  void tell(const Vec& x, double y);

  BehaviorId id() const { return id_; }
  const SearchSpace& space() const { return space_; }
  int n_told() const { return n_told_; }

 protected:
  virtual Vec propose() = 0;
  virtual void observe(const Vec& x, double y) = 0;

  Rng& rng() { return rng_; }
  Vec to_unit(const Vec& x) const;
  Vec from_unit(const Vec& u) const;
  /// Redraws one uniformly chosen coordinate of `x` from its full range.
  Vec mutate_one(const Vec& x);

 private:
  BehaviorId id_;
  SearchSpace space_;
  Rng rng_;
  std::optional<Vec> pending_;
  int n_told_ = 0;
};

std::unique_ptr<Behavior> make_behavior(BehaviorId id, const SearchSpace& space,
                                        std::uint64_t seed, const BehaviorOptions& opts = {});

class RandomSearch final : public Behavior {
 public:
  RandomSearch(SearchSpace space, std::uint64_t seed);

 protected:
  Vec propose() override;
  void observe(const Vec&, double) override {}
};

class ShuffledGrid final : public Behavior {
 public:
  static constexpr int kPointsPerAxis = 100;
  static constexpr int kMaxRetries = 100;

  ShuffledGrid(SearchSpace space, std::uint64_t seed);

 protected:
  Vec propose() override;
  void observe(const Vec&, double) override {}

 private:
  Vec grid_point(const std::vector<int>& idx) const;

  std::vector<int> order_;  // 1-D exact permutation
  std::size_t cursor_ = 0;
  std::vector<std::vector<int>> visited_;
};

class HillClimbing final : public Behavior {
 public:
  HillClimbing(SearchSpace space, std::uint64_t seed);
  const std::optional<Vec>& best_x() const { return best_x_; }
  double best_y() const { return best_y_; }

 protected:
  Vec propose() override;
  void observe(const Vec& x, double y) override;

 private:
  std::optional<Vec> best_x_;
  double best_y_ = -std::numeric_limits<double>::infinity();
};

class RegularizedEvolution final : public Behavior {
 public:
  struct Member {
    Vec x;
    double y;
    std::int64_t birth;
  };

  RegularizedEvolution(SearchSpace space, std::uint64_t seed, int population = 25,
                       int tournament = 5);
  const std::deque<Member>& population() const { return population_; }
  int capacity() const { return capacity_; }

 protected:
  Vec propose() override;
  void observe(const Vec& x, double y) override;

 private:
  int capacity_;
  int tournament_;
  std::deque<Member> population_;
  std::int64_t births_ = 0;
};

class Firefly final : public Behavior {
 public:
  Firefly(SearchSpace space, std::uint64_t seed, FireflyOptions opts, int budget_hint);

  /// Firefly update of member `i` in unit coordinates: a pull toward every
  /// brighter member and an equal-weight push away from every darker one,
  /// each weighted by beta0 * exp(-gamma r^2) and averaged over the members
  /// that contribute. Then adds alpha * (u - 1/2) and clamps.
  static Vec move(const std::vector<Vec>& positions, const std::vector<double>& brightness,
                  std::size_t i, const FireflyOptions& opts, double alpha, Rng& rng);

  const std::vector<Vec>& positions() const { return positions_; }

 protected:
  Vec propose() override;
  void observe(const Vec& x, double y) override;

 private:
  FireflyOptions opts_;
  int budget_hint_;
  std::vector<Vec> positions_;  // unit coordinates
  std::vector<double> brightness_;
  std::size_t current_ = 0;
  int n_asked_ = 0;
};

class CmaEs final : public Behavior {
 public:
  CmaEs(SearchSpace space, std::uint64_t seed, const CmaEsOptions& opts = {});

  int lambda() const { return lambda_; }
  int mu() const { return mu_; }
  /// Current distribution in raw coordinates.
  Vec mean() const;
  double sigma() const { return sigma_; }
  const Mat& covariance() const { return cov_; }
  int generation() const { return generation_; }

 protected:
  Vec propose() override;
  void observe(const Vec& x, double y) override;

 private:
  void update_distribution();

  int n_;
  int lambda_;
  int mu_;
  Vec weights_;
  double mueff_, cc_, cs_, c1_, cmu_, damps_, chin_;
  // Unit-coordinate state.
  Vec mean_;
  double sigma_;
  Mat cov_, basis_;
  Vec scales_;
  Vec path_c_, path_s_;
  int generation_ = 0;
  std::vector<std::pair<Vec, double>> generation_buffer_;
};

class GpEi final : public Behavior {
 public:
  struct AcquisitionResult {
    Vec x_unit;
    double ei = 0.0;
    std::vector<Vec> pool;
    std::vector<double> pool_ei;
  };

  GpEi(SearchSpace space, std::uint64_t seed, GpEiOptions opts = {});

  int warm_start() const { return warm_start_; }
  const GpModel& model() const { return gp_; }
  /// Maximizes EI over a uniform candidate pool refined coordinate-wise
  /// around its best members. Requires a fitted model.
  AcquisitionResult maximize_acquisition();

 protected:
  Vec propose() override;
  void observe(const Vec& x, double y) override;

 private:
  void refit();
  double ei_at(const Vec& u, double best) const;

  GpEiOptions opts_;
  int warm_start_;
  std::vector<Vec> xs_;  // unit coordinates
  std::vector<double> ys_;
  GpModel gp_;
  double y_mean_ = 0.0;
  double y_std_ = 1.0;
  double lengthscale_ = 0.2;
  int since_lengthscale_fit_ = 0;
  bool fitted_ = false;
};

/// Runs `behavior` for `budget` evaluations on `task`, returning raw (x, y).
std::vector<std::pair<Vec, double>> run_behavior(Behavior& behavior, const TaskInstance& task,
                                                 int budget);

}  // namespace ribbo
