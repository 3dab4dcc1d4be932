#pragma once

// Control policies h(t, x, mu), the atomic relaxed controls they induce, and
// the quadratic control cost.

#include "rldp/core.hpp"
#include "rldp/grid.hpp"
#include "rldp/measure_summary.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace rldp {

enum class ControlFamily { zero, constant, piecewise_constant, feedback };

inline const char* to_string(ControlFamily f) {
  switch (f) {
    case ControlFamily::zero: return "zero";
    case ControlFamily::constant: return "constant";
    case ControlFamily::piecewise_constant: return "piecewise_constant";
    case ControlFamily::feedback: return "feedback";
  }
  return "?";
}

// Exponent tuples of all monomials of total degree <= degree in `vars` variables.
inline std::vector<std::vector<int>> monomial_exponents(int vars, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(vars, 0);
  for (int total = 0; total <= degree; ++total) {
    // Enumerate compositions of `total` into `vars` parts in lexicographic order.
    auto rec = [&](auto&& self, int pos, int left) -> void {
      if (pos == vars - 1) {
        e[pos] = left;
        out.push_back(e);
        return;
      }
      for (int v = left; v >= 0; --v) {
        e[pos] = v;
        self(self, pos + 1, left - v);
      }
    };
    rec(rec, 0, total);
  }
  return out;
}

/// What an optimizer searches over: the family and its shape, not the values.
struct PolicyFamilySpec {
  ControlFamily family = ControlFamily::constant;
  int d = 1;                  // state dimension (feedback features)
  int d1 = 1;                 // control dimension
  std::size_t cells = 1;      // piecewise_constant: number of equal time cells
  int degree = 2;             // feedback: polynomial degree of the basis
  double horizon = 1.0;
  double theta_bound = 10.0;  // |theta_j| <= theta_bound
  double output_bound = 10.0; // |h_c| <= output_bound per component

  std::size_t parameter_count() const {
    switch (family) {
      case ControlFamily::zero: return 0;
      case ControlFamily::constant: return static_cast<std::size_t>(d1);
      case ControlFamily::piecewise_constant: return cells * static_cast<std::size_t>(d1);
      case ControlFamily::feedback:
        return monomial_exponents(1 + 2 * d, degree).size() * static_cast<std::size_t>(d1);
    }
    return 0;
  }
};

// Deterministic feedback rule h_i(t) = h(t, X^i(t), mu^N(t)). A
// piecewise_constant policy may also carry per-particle values.
class ControlPolicy {
 public:
  ControlPolicy() = default;

  static ControlPolicy zero(int d1) {
    ControlPolicy p;
    p.spec_.family = ControlFamily::zero;
    p.spec_.d1 = d1;
    return p;
  }

  static ControlPolicy constant(const Vector& v, double output_bound = 1e300) {
    PolicyFamilySpec s;
    s.family = ControlFamily::constant;
    s.d1 = static_cast<int>(v.size());
    s.theta_bound = output_bound;
    s.output_bound = output_bound;
    return from_parameters(s, v);
  }

  /// Values per equal time cell on [0, horizon], shared by all particles.
  static ControlPolicy piecewise_constant(const std::vector<Vector>& cell_values, double horizon) {
    if (cell_values.empty()) throw InputError("piecewise_constant: no cells");
    PolicyFamilySpec s;
    s.family = ControlFamily::piecewise_constant;
    s.d1 = static_cast<int>(cell_values.front().size());
    s.cells = cell_values.size();
    s.horizon = horizon;
    s.theta_bound = s.output_bound = 1e300;
    Vector theta(s.parameter_count());
    for (std::size_t c = 0; c < cell_values.size(); ++c) {
      if (cell_values[c].size() != s.d1) throw InputError("piecewise_constant: mixed control dimensions");
      theta.segment(static_cast<Eigen::Index>(c) * s.d1, s.d1) = cell_values[c];
    }
    return from_parameters(s, theta);
  }

  /// Per-particle cell values: values[i][c].
  static ControlPolicy piecewise_constant_indexed(std::vector<std::vector<Vector>> values, double horizon) {
    if (values.empty() || values.front().empty()) throw InputError("piecewise_constant_indexed: no values");
    ControlPolicy p = piecewise_constant(values.front(), horizon);
    for (const auto& row : values)
      if (row.size() != p.spec_.cells) throw InputError("piecewise_constant_indexed: ragged cells");
    p.per_particle_ = std::move(values);
    return p;
  }

  static ControlPolicy feedback(int d, int d1, int degree, const Vector& theta, double output_bound = 10.0,
                                double theta_bound = 10.0) {
    PolicyFamilySpec s;
    s.family = ControlFamily::feedback;
    s.d = d;
    s.d1 = d1;
    s.degree = degree;
    s.output_bound = output_bound;
    s.theta_bound = theta_bound;
    return from_parameters(s, theta);
  }

  /// Builds a policy of the given family; parameters are clipped to the bounds.
  static ControlPolicy from_parameters(const PolicyFamilySpec& spec, const Vector& theta) {
    if (static_cast<std::size_t>(theta.size()) != spec.parameter_count())
      throw InputError("policy: expected " + std::to_string(spec.parameter_count()) + " parameters, got " +
                       std::to_string(theta.size()));
    if (!theta.allFinite()) throw InputError("policy: non-finite parameters");
    ControlPolicy p;
    p.spec_ = spec;
    p.theta_ = theta.cwiseMax(-spec.theta_bound).cwiseMin(spec.theta_bound);
    if (spec.family == ControlFamily::feedback) p.exponents_ = monomial_exponents(1 + 2 * spec.d, spec.degree);
    return p;
  }

  ControlFamily family() const { return spec_.family; }
  const PolicyFamilySpec& spec() const { return spec_; }
  int control_dimension() const { return spec_.d1; }
  const Vector& parameters() const { return theta_; }
  bool is_zero() const { return spec_.family == ControlFamily::zero || (per_particle_.empty() && theta_.isZero(0.0)); }

  std::string id() const {
    std::string s = to_string(spec_.family);
    if (spec_.family == ControlFamily::feedback) s += "_deg" + std::to_string(spec_.degree);
    if (spec_.family == ControlFamily::piecewise_constant) s += "_" + std::to_string(spec_.cells);
    return s;
  }

  /// h(t, x, mu) for the given particle.
  Vector evaluate(double t, const Vector& x, const MeasureSummary& mu, std::size_t particle = 0) const {
    const int d1 = spec_.d1;
    Vector h = Vector::Zero(d1);
    switch (spec_.family) {
      case ControlFamily::zero: return h;
      case ControlFamily::constant: h = theta_; break;
      case ControlFamily::piecewise_constant: {
        const double frac = t / spec_.horizon;
        const auto c = std::min(spec_.cells - 1, static_cast<std::size_t>(std::max(0.0, frac) * spec_.cells));
        if (!per_particle_.empty()) {
          if (particle >= per_particle_.size()) throw InputError("policy: particle index out of range");
          h = per_particle_[particle][c];
        } else {
          h = theta_.segment(static_cast<Eigen::Index>(c) * d1, d1);
        }
        break;
      }
      case ControlFamily::feedback: {
        const int d = spec_.d;
        if (x.size() != d || mu.dimension() != d) throw InputError("feedback policy: state dimension mismatch");
        std::vector<double> z(1 + 2 * d);
        z[0] = t;
        for (int i = 0; i < d; ++i) {
          z[1 + i] = x[i];
          z[1 + d + i] = mu.mean()[i];
        }
        const auto nb = static_cast<Eigen::Index>(exponents_.size());
        for (Eigen::Index j = 0; j < nb; ++j) {
          double phi = 1.0;
          const auto& e = exponents_[j];
          for (std::size_t v = 0; v < e.size(); ++v)
            for (int r = 0; r < e[v]; ++r) phi *= z[v];
          for (int c = 0; c < d1; ++c) h[c] += theta_[c * nb + j] * phi;
        }
        break;
      }
    }
    return h.cwiseMax(-spec_.output_bound).cwiseMin(spec_.output_bound);
  }

 private:
  PolicyFamilySpec spec_{ControlFamily::zero};
  Vector theta_ = Vector::Zero(0);
  std::vector<std::vector<int>> exponents_;
  std::vector<std::vector<Vector>> per_particle_;
};

// Atomic relaxed control r(dy x dt) = delta_{h(t)}(dy) dt for piecewise-constant h.
struct RelaxedControlView {
  std::vector<Vector> values;  // h per grid cell
  double dt = 0.0;
  double first_moment = 0.0;    // integral of |y| r(dy x dt)
  double quadratic_cost = 0.0;  // integral of |y|^2 r(dy x dt)

  /// r(R^{d1} x [0, t_k]) = t_k.
  double time_mass(std::size_t k) const { return static_cast<double>(k) * dt; }
};

inline RelaxedControlView relax_control(std::span<const Vector> h, const TimeGrid& grid) {
  if (h.size() != grid.steps()) throw InputError("relax_control: one value per grid cell expected");
  RelaxedControlView r;
  r.values.assign(h.begin(), h.end());
  r.dt = grid.dt();
  for (const auto& v : h) {
    if (!v.allFinite()) throw InputError("relax_control: non-finite control value");
    r.first_moment += v.norm() * r.dt;
    r.quadratic_cost += v.squaredNorm() * r.dt;
  }
  return r;
}

/// (1 / 2N) sum_i sum_k |h_ik|^2 dt.
inline double ensemble_cost(std::span<const std::vector<Vector>> controls, double dt) {
  if (controls.empty()) return 0.0;
  double total = 0.0;
  for (const auto& row : controls)
    for (const auto& v : row) total += v.squaredNorm();
  return 0.5 * total * dt / static_cast<double>(controls.size());
}

}  // namespace rldp
