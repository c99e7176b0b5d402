#pragma once

#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "ribbo/common.hpp"

namespace ribbo {

struct MaternKernel {
  double lengthscale = 0.2;
  double signal_variance = 1.0;

  /// Matérn-5/2: s2 * (1 + sqrt5 r/l + 5 r^2/(3 l^2)) * exp(-sqrt5 r/l).
  double operator()(const Vec& a, const Vec& b) const;
};

struct GpPosterior {
  double mean = 0.0;
  double variance = 0.0;
};

/// Exact GP regression with a zero prior mean.
class GpModel {
 public:
  GpModel() = default;
  GpModel(MaternKernel kernel, double noise_variance);

  void set_kernel(MaternKernel kernel);
  const MaternKernel& kernel() const { return kernel_; }
  double noise_variance() const { return noise_; }

  /// Replaces the observation set and refactorizes.
  void fit(std::vector<Vec> inputs, Vec values);
  void add_observation(const Vec& x, double y);

  std::size_t size() const { return inputs_.size(); }
  const std::vector<Vec>& inputs() const { return inputs_; }
  const Vec& values() const { return values_; }
  /// Jitter that was added to the diagonal on top of the noise variance.
  double jitter() const { return jitter_; }

  GpPosterior posterior(const Vec& x) const;

  /// Log marginal likelihood of the current data under the current kernel.
  double log_marginal_likelihood() const;

 private:
  void refactor();

  MaternKernel kernel_;
  double noise_ = 1e-6;
  double jitter_ = 0.0;
  std::vector<Vec> inputs_;
  Vec values_;
  Eigen::LLT<Mat> chol_;
  Vec alpha_;
};

/// Closed-form expected improvement for maximization.
double expected_improvement(double mean, double std, double best_y);

double normal_pdf(double z);
double normal_cdf(double z);

}  // namespace ribbo
