#pragma once

#include "rldp/core.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace rldp {

// Uniform grid t_k = k * dt on [0, T].
class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t n_steps) : horizon_(horizon), n_steps_(n_steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InputError("TimeGrid: horizon must be positive");
    if (n_steps < 1) throw InputError("TimeGrid: need at least one step");
  }

  double horizon() const { return horizon_; }
  std::size_t steps() const { return n_steps_; }
  std::size_t nodes() const { return n_steps_ + 1; }
  double dt() const { return horizon_ / static_cast<double>(n_steps_); }

  double time(std::size_t k) const {
    return k == n_steps_ ? horizon_ : static_cast<double>(k) * dt();
  }

  /// Index of the node at time t; throws if t is not a node.
  std::size_t node_index(double t, double tol = 1e-9) const {
    const double r = t / dt();
    const double k = std::round(r);
    if (k < 0.0 || k > static_cast<double>(n_steps_) || std::abs(r - k) > tol)
      throw InputError("time " + std::to_string(t) + " is not a grid node");
    return static_cast<std::size_t>(k);
  }

  /// Grid with the same horizon and `factor` times as many steps.
  TimeGrid refined(std::size_t factor) const { return TimeGrid(horizon_, n_steps_ * factor); }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.horizon_ == b.horizon_ && a.n_steps_ == b.n_steps_;
  }

 private:
  double horizon_;
  std::size_t n_steps_;
};

// One trajectory with its reflection record. `local_time` is the accumulated
// projection displacement (scheme units); `reflection` the accumulated vector
// displacement y - project(y).
struct ReflectedPath {
  std::vector<Vector> states;      // nodes()
  std::vector<double> local_time;  // nodes(), nondecreasing from 0
  std::vector<Vector> reflection;  // nodes()
  std::vector<bool> boundary_hits; // steps()

  std::size_t nodes() const { return states.size(); }

  /// Scalar coordinate series for axis i.
  std::vector<double> coordinate(int axis) const {
    std::vector<double> out(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) out[k] = states[k][axis];
    return out;
  }
};

}  // namespace rldp
