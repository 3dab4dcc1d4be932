#pragma once

#include "rldp/core.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace rldp {

// Finite-support probability measure on the closed domain with cached
// first and second moments. Every measure the simulator produces is
// empirical, so this is the only representation coefficients ever see.
class MeasureSummary {
 public:
  MeasureSummary() = default;

  MeasureSummary(std::vector<Vector> support, std::vector<double> weights)
      : support_(std::move(support)), weights_(std::move(weights)) {
    if (support_.empty()) throw InputError("MeasureSummary: empty support");
    if (support_.size() != weights_.size()) throw InputError("MeasureSummary: support/weight size mismatch");
    const auto d = support_.front().size();
    double total = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) {
      if (support_[i].size() != d) throw InputError("MeasureSummary: mixed dimensions");
      require_finite(support_[i], "MeasureSummary atom");
      if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) throw InputError("MeasureSummary: bad weight");
      total += weights_[i];
    }
    if (std::abs(total - 1.0) > 1e-12) throw InputError("MeasureSummary: weights must sum to 1");
    compute_moments();
  }

  /// Uniform weights 1/N on the given points.
  static MeasureSummary empirical(std::vector<Vector> points) {
    const std::size_t n = points.size();
    if (n == 0) throw InputError("MeasureSummary: empty support");
    return MeasureSummary(std::move(points), std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  static MeasureSummary dirac(Vector x) { return empirical({std::move(x)}); }

  std::size_t size() const { return support_.size(); }
  int dimension() const { return support_.empty() ? 0 : static_cast<int>(support_.front().size()); }
  const std::vector<Vector>& support() const { return support_; }
  const std::vector<double>& weights() const { return weights_; }
  const Vector& mean() const { return mean_; }
  const Matrix& second_moment() const { return second_; }

  Matrix covariance() const { return second_ - mean_ * mean_.transpose(); }

  /// Trace of the covariance, clamped at zero against rounding.
  double variance_trace() const { return std::max(0.0, second_.trace() - mean_.squaredNorm()); }

  /// Expectation of g under the measure.
  template <class F>
  double integrate(F&& g) const {
    double s = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) s += weights_[i] * g(support_[i]);
    return s;
  }

 private:
  void compute_moments() {
    const auto d = support_.front().size();
    mean_ = Vector::Zero(d);
    second_ = Matrix::Zero(d, d);
    for (std::size_t i = 0; i < support_.size(); ++i) {
      mean_ += weights_[i] * support_[i];
      second_.noalias() += weights_[i] * support_[i] * support_[i].transpose();
    }
  }

  std::vector<Vector> support_;
  std::vector<double> weights_;
  Vector mean_;
  Matrix second_;
};

/// Per-node marginal flow t_k -> nu(t_k).
using MeasureFlow = std::vector<MeasureSummary>;

}  // namespace rldp
