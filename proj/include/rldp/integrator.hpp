#pragma once

// Projected Euler scheme for one reflected particle given its environment,
// with local-time bookkeeping, and Brownian increment generation/refinement.

#include "rldp/core.hpp"
#include "rldp/geometry.hpp"
#include "rldp/grid.hpp"
#include "rldp/measure_summary.hpp"
#include "rldp/model.hpp"
#include "rldp/random.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace rldp {

struct StepResult {
  Vector next;
  Vector reflection;  // y - project(y)
  double local_time = 0.0;
  bool hit = false;
};

/// y = x + (drift + control) dt + noise, then Euclidean projection onto the domain.
inline StepResult step_reflected(const ConvexDomain& dom, const Vector& x, const Vector& drift_term,
                                 const Vector& control_term, const Vector& noise_term, double dt) {
  if (!(dt > 0.0)) throw PreconditionError("step_reflected: dt must be positive");
  if (!dom.in_closure(x)) throw PreconditionError("step_reflected: state " + format_point(x) + " outside the domain");
  if (!drift_term.allFinite() || !control_term.allFinite() || !noise_term.allFinite())
    throw InputError("step_reflected: non-finite increment");
  const Vector y = x + (drift_term + control_term) * dt + noise_term;
  Projection p = dom.project(y);
  Vector reflection = y - p.point;
  return {std::move(p.point), std::move(reflection), p.displacement, p.hit_boundary};
}

/// i.i.d. N(0, dt I) increments, one per step, from a single substream.
inline std::vector<Vector> brownian_increments(const StreamKey& key, std::size_t steps, int d1, double dt) {
  Engine eng = make_engine(key);
  NormalSampler normal;
  const double scale = std::sqrt(dt);
  std::vector<Vector> out(steps, Vector(d1));
  for (auto& inc : out)
    for (int j = 0; j < d1; ++j) inc[j] = scale * normal(eng);
  return out;
}

/// Halves every step by Brownian-bridge midpoint sampling, so the coarse and
/// refined increment sequences are couplings of the same Brownian motion.
inline std::vector<Vector> refine_increments(std::span<const Vector> coarse, double dt_coarse, const StreamKey& key) {
  Engine eng = make_engine(key);
  NormalSampler normal;
  const double half_sd = std::sqrt(dt_coarse / 4.0);
  std::vector<Vector> fine;
  fine.reserve(2 * coarse.size());
  for (const auto& inc : coarse) {
    Vector first(inc.size());
    for (Eigen::Index j = 0; j < inc.size(); ++j) first[j] = 0.5 * inc[j] + half_sd * normal(eng);
    fine.push_back(first);
    fine.push_back(inc - first);
  }
  return fine;
}

/// One Euler step of the (controlled) reflected SDE at state x under measure
/// mu: drift b, control sigma h, noise sigma dW. `control` may be null.
inline StepResult reflected_euler_step(const ModelSpec& model, double t, double dt, const Vector& x,
                                       const MeasureSummary& mu, const Vector* control, const Vector& noise) {
  if (noise.size() != model.d1) throw InputError("reflected_euler_step: noise dimension mismatch");
  const Coefficients c = eval_coefficients(model, t, x, mu);
  Vector control_term = Vector::Zero(model.d);
  if (control) {
    if (control->size() != model.d1) throw InputError("reflected_euler_step: control dimension mismatch");
    control_term.noalias() = c.sigma * *control;
  }
  return step_reflected(model.domain, x, c.b, control_term, c.sigma * noise, dt);
}

inline void append_step(ReflectedPath& path, StepResult&& s) {
  path.local_time.push_back(path.local_time.back() + s.local_time);
  path.reflection.push_back(path.reflection.back() + s.reflection);
  path.boundary_hits.push_back(s.hit);
  path.states.push_back(std::move(s.next));
}

inline ReflectedPath start_path(const Vector& x0, std::size_t steps) {
  ReflectedPath path;
  path.states.reserve(steps + 1);
  path.local_time.reserve(steps + 1);
  path.reflection.reserve(steps + 1);
  path.boundary_hits.reserve(steps);
  path.states.push_back(x0);
  path.local_time.push_back(0.0);
  path.reflection.push_back(Vector::Zero(x0.size()));
  return path;
}

/// Chains reflected_euler_step along the grid. `mu_flow` has one summary per
/// node (or exactly one, reused at every node); controls and noise have one
/// entry per step. Empty `controls` means h = 0.
inline ReflectedPath simulate_reflected_path(const ModelSpec& model, const TimeGrid& grid, const Vector& x0,
                                             std::span<const MeasureSummary> mu_flow,
                                             std::span<const Vector> controls, std::span<const Vector> noise) {
  const std::size_t n = grid.steps();
  if (mu_flow.size() != grid.nodes() && mu_flow.size() != 1)
    throw InputError("simulate_reflected_path: measure flow length does not match grid");
  if (noise.size() != n) throw InputError("simulate_reflected_path: noise length does not match grid");
  if (!controls.empty() && controls.size() != n && controls.size() != grid.nodes())
    throw InputError("simulate_reflected_path: control length does not match grid");
  if (x0.size() != model.d) throw InputError("simulate_reflected_path: x0 dimension mismatch");

  ReflectedPath path = start_path(x0, n);
  const double dt = grid.dt();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& mu = mu_flow.size() == 1 ? mu_flow[0] : mu_flow[k];
    append_step(path, reflected_euler_step(model, grid.time(k), dt, path.states.back(), mu,
                                           controls.empty() ? nullptr : &controls[k], noise[k]));
  }
  return path;
}

}  // namespace rldp
