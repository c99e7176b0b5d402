#include "ribbo/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ribbo {

namespace {
constexpr double kMaxJitter = 1e-2;
}

double MaternKernel::operator()(const Vec& a, const Vec& b) const {
  const double r = (a - b).norm() / lengthscale;
  const double s5r = std::sqrt(5.0) * r;
  return signal_variance * (1.0 + s5r + 5.0 * r * r / 3.0) * std::exp(-s5r);
}

GpModel::GpModel(MaternKernel kernel, double noise_variance)
    : kernel_(kernel), noise_(noise_variance) {}

void GpModel::set_kernel(MaternKernel kernel) {
  kernel_ = kernel;
  if (!inputs_.empty()) refactor();
}

void GpModel::fit(std::vector<Vec> inputs, Vec values) {
  if (inputs.size() != static_cast<std::size_t>(values.size())) {
    throw InvalidInput("gp fit: inputs and values differ in length");
  }
  inputs_ = std::move(inputs);
  values_ = std::move(values);
  refactor();
}

void GpModel::add_observation(const Vec& x, double y) {
  inputs_.push_back(x);
  values_.conservativeResize(values_.size() + 1);
  values_[values_.size() - 1] = y;
  refactor();
}

void GpModel::refactor() {
  const auto n = static_cast<Eigen::Index>(inputs_.size());
  Mat k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      k(i, j) = k(j, i) = kernel_(inputs_[i], inputs_[j]);
    }
  }
  // Start from a relative floor and grow the jitter until the factorization holds.
  jitter_ = 1e-10 * kernel_.signal_variance;
  while (true) {
    Mat kn = k;
    kn.diagonal().array() += noise_ + jitter_;
    chol_.compute(kn);
    if (chol_.info() == Eigen::Success) break;
    jitter_ *= 10.0;
    if (jitter_ > kMaxJitter * kernel_.signal_variance) {
      throw NumericalError("gp: kernel matrix is not positive definite after maximum jitter");
    }
  }
  alpha_ = chol_.solve(values_);
}

GpPosterior GpModel::posterior(const Vec& x) const {
  if (inputs_.empty()) throw MissingData("gp posterior requires at least one observation");
  const auto n = static_cast<Eigen::Index>(inputs_.size());
  Vec kx(n);
  for (Eigen::Index i = 0; i < n; ++i) kx[i] = kernel_(x, inputs_[i]);
  GpPosterior p;
  p.mean = kx.dot(alpha_);
  Vec v = chol_.matrixL().solve(kx);
  p.variance = std::max(0.0, kernel_.signal_variance - v.squaredNorm());
  return p;
}

double GpModel::log_marginal_likelihood() const {
  if (inputs_.empty()) return 0.0;
  const double n = static_cast<double>(inputs_.size());
  double logdet = 2.0 * chol_.matrixLLT().diagonal().array().log().sum();
  return -0.5 * values_.dot(alpha_) - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double expected_improvement(double mean, double std, double best_y) {
  if (std <= 0.0) return std::max(0.0, mean - best_y);
  const double z = (mean - best_y) / std;
  return std::max(0.0, std * (z * normal_cdf(z) + normal_pdf(z)));
}

}  // namespace ribbo
