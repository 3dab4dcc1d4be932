#pragma once

// Coefficients b(t, x, mu) and sigma(t, x, mu), horizon, initial conditions,
// declared constants, and empirical validation of the boundedness and
// Lipschitz conditions.

#include "rldp/core.hpp"
#include "rldp/geometry.hpp"
#include "rldp/measure_summary.hpp"
#include "rldp/measures.hpp"
#include "rldp/random.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace rldp {

using DriftFn = std::function<Vector(double t, const Vector& x, const MeasureSummary& mu)>;
using DiffusionFn = std::function<Matrix(double t, const Vector& x, const MeasureSummary& mu)>;
using InitSampler = std::function<Vector(Engine&)>;

// Either explicit starting points (one per particle, or one broadcast to all)
// or i.i.d. draws from a sampler for nu_0.
struct InitialCondition {
  std::vector<Vector> points;
  InitSampler sampler;
  std::string description;

  bool deterministic() const { return !sampler; }

  static InitialCondition fixed(std::vector<Vector> pts, std::string desc = "deterministic") {
    return {std::move(pts), {}, std::move(desc)};
  }
  static InitialCondition sampled(InitSampler s, std::string desc) { return {{}, std::move(s), std::move(desc)}; }
};

/// Uniform draw from the closed domain (rejection from the bounding box for balls).
inline Vector sample_uniform(const ConvexDomain& dom, Engine& eng) {
  const int d = dom.dimension();
  Vector x(d);
  if (dom.kind() == ConvexDomain::Kind::box) {
    for (int i = 0; i < d; ++i) x[i] = uniform(eng, dom.lo()[i], dom.hi()[i]);
    return x;
  }
  for (;;) {
    for (int i = 0; i < d; ++i) x[i] = uniform(eng, -1.0, 1.0);
    if (x.squaredNorm() <= 1.0) return dom.center() + dom.radius() * x;
  }
}

/// Uniform draw on the boundary: a random face point for boxes, a radial point for balls.
inline Vector sample_boundary(const ConvexDomain& dom, Engine& eng) {
  const int d = dom.dimension();
  if (dom.kind() == ConvexDomain::Kind::ball) {
    NormalSampler normal;
    Vector u(d);
    do {
      for (int i = 0; i < d; ++i) u[i] = normal(eng);
    } while (u.norm() < 1e-12);
    return dom.center() + dom.radius() * u.normalized();
  }
  Vector x = sample_uniform(dom, eng);
  const int face = static_cast<int>(uniform01(eng) * 2 * d) % (2 * d);
  x[face / 2] = face % 2 ? dom.hi()[face / 2] : dom.lo()[face / 2];
  return x;
}

struct ModelSpec {
  std::string id;
  ConvexDomain domain = ConvexDomain::cube(1, 0.0, 1.0);
  int d = 1;
  int d1 = 1;
  double horizon = 1.0;
  DriftFn drift;
  DiffusionFn diffusion;
  InitialCondition init;
  double bound_L = 1.0;
  double lipschitz_K = 1.0;
  bool measure_dependent = true;
  /// Check |b| + ||sigma||_HS <= L on every evaluation.
  bool strict = false;

  void validate() const {
    if (!(horizon > 0.0)) throw InputError("model: horizon must be positive");
    if (d < 1 || d1 < 1) throw InputError("model: dimensions must be positive");
    if (domain.dimension() != d) throw InputError("model: domain dimension differs from d");
    if (!drift || !diffusion) throw InputError("model: missing coefficient callable");
    if (!(bound_L > 0.0) || !(lipschitz_K > 0.0)) throw InputError("model: declared L and K must be positive");
    for (const auto& p : init.points) {
      if (p.size() != d) throw InputError("model: initial point dimension mismatch");
      if (!domain.in_closure(p)) throw InputError("model: initial point outside the domain");
    }
    if (init.points.empty() && !init.sampler) throw InputError("model: no initial condition");
  }

  /// Starting point of particle i out of n (engine used only for sampled inits).
  Vector initial_state(std::size_t i, std::size_t n, Engine& eng) const {
    if (init.sampler) return init.sampler(eng);
    if (init.points.size() == 1) return init.points.front();
    if (init.points.size() != n)
      throw InputError("model: " + std::to_string(init.points.size()) + " initial points for " + std::to_string(n) +
                       " particles");
    return init.points[i];
  }

  /// nu_0 as a measure summary: the fixed points, or `n` sampler draws.
  MeasureSummary initial_measure(std::size_t n, Engine& eng) const {
    if (!init.sampler) return MeasureSummary::empirical(init.points);
    std::vector<Vector> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pts.push_back(init.sampler(eng));
    return MeasureSummary::empirical(std::move(pts));
  }
};

struct Coefficients {
  Vector b;
  Matrix sigma;
};

inline Coefficients eval_coefficients(const ModelSpec& model, double t, const Vector& x, const MeasureSummary& mu,
                                      bool strict) {
  Coefficients c{model.drift(t, x, mu), model.diffusion(t, x, mu)};
  if (c.b.size() != model.d || c.sigma.rows() != model.d || c.sigma.cols() != model.d1)
    throw ModelError("model " + model.id + ": coefficient shape mismatch");
  if (!c.b.allFinite() || !c.sigma.allFinite())
    throw ModelError("model " + model.id + ": non-finite coefficients at t=" + std::to_string(t) +
                     ", x=" + format_point(x));
  if (strict) {
    const double size = c.b.norm() + c.sigma.norm();
    if (size > model.bound_L)
      throw AssumptionViolation("model " + model.id + ": |b|+||sigma|| = " + std::to_string(size) + " exceeds L = " +
                                std::to_string(model.bound_L) + " at x=" + format_point(x));
  }
  return c;
}

inline Coefficients eval_coefficients(const ModelSpec& model, double t, const Vector& x, const MeasureSummary& mu) {
  return eval_coefficients(model, t, x, mu, model.strict);
}

struct AssumptionReport {
  double max_bound_observed = 0.0;
  double max_lipschitz_ratio_observed = 0.0;
  bool bound_pass = true;
  bool lipschitz_pass = true;
  std::size_t samples = 0;
  std::size_t pairs = 0;
  std::size_t evaluation_failures = 0;
  std::string note;

  bool pass() const { return bound_pass && lipschitz_pass; }
};

namespace detail {

inline MeasureSummary random_measure(const ConvexDomain& dom, Engine& eng) {
  const std::size_t atoms = 1 + static_cast<std::size_t>(uniform01(eng) * 5.0);
  std::vector<Vector> pts;
  std::vector<double> w;
  double total = 0.0;
  for (std::size_t i = 0; i < atoms; ++i) {
    pts.push_back(sample_uniform(dom, eng));
    w.push_back(0.05 + uniform01(eng));
    total += w.back();
  }
  for (auto& v : w) v /= total;
  // Renormalize the last weight so the sum is 1 to rounding.
  double head = 0.0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) head += w[i];
  w.back() = 1.0 - head;
  return MeasureSummary(std::move(pts), std::move(w));
}

inline MeasureSummary perturb_measure(const MeasureSummary& mu, const ConvexDomain& dom, double scale, Engine& eng) {
  std::vector<Vector> pts = mu.support();
  for (auto& p : pts) {
    Vector q = p;
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] += uniform(eng, -scale, scale);
    p = dom.project(q).point;
  }
  return MeasureSummary(std::move(pts), mu.weights());
}

// Upper bound on the bounded-Lipschitz distance: exact on the line, otherwise
// min(2, cost of a coupling), using the better of the product coupling and the
// index coupling when both measures share their weights.
inline double bl_upper_bound(const MeasureSummary& mu, const MeasureSummary& nu) {
  if (mu.dimension() == 1) return bl_distance(mu, nu).value;
  double product = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j)
      product += mu.weights()[i] * nu.weights()[j] * (mu.support()[i] - nu.support()[j]).norm();
  double best = product;
  if (mu.size() == nu.size() && mu.weights() == nu.weights()) {
    double paired = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) paired += mu.weights()[i] * (mu.support()[i] - nu.support()[i]).norm();
    best = std::min(best, paired);
  }
  return std::min(2.0, best);
}

// Declared constants carry a relative margin for rounding at the boundary.
inline double with_margin(double x) { return x * (1.0 + 1e-12); }

}  // namespace detail

/// Samples (t, x, mu) tuples and nearby/far pairs; reports the largest observed
/// |b| + ||sigma|| and Lipschitz ratio against the declared L and K.
inline AssumptionReport validate_assumptions(const ModelSpec& model, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw PreconditionError("validate_assumptions: need at least 2 samples");
  Engine eng = make_engine({seed, StreamPurpose::sampling, 0, 0, 0});
  const auto& dom = model.domain;
  AssumptionReport rep;
  const double inf = std::numeric_limits<double>::infinity();

  auto evaluate = [&](double t, const Vector& x, const MeasureSummary& mu) -> std::optional<Coefficients> {
    try {
      return eval_coefficients(model, t, x, mu, false);
    } catch (const ModelError&) {
      ++rep.evaluation_failures;
      rep.max_bound_observed = inf;
      return std::nullopt;
    }
  };

  for (std::size_t s = 0; s < n_samples; ++s) {
    const double t = uniform(eng, 0.0, model.horizon);
    // Every fourth sample sits on the boundary, where violations tend to live.
    const Vector x = s % 4 == 3 ? sample_boundary(dom, eng) : sample_uniform(dom, eng);
    const MeasureSummary mu = detail::random_measure(dom, eng);
    const auto c = evaluate(t, x, mu);
    ++rep.samples;
    if (!c) continue;
    rep.max_bound_observed = std::max(rep.max_bound_observed, c->b.norm() + c->sigma.norm());

    // Pair partner: alternately a small perturbation and an independent draw.
    const bool near = s % 2 == 0;
    const double scale = near ? 1e-3 * std::max(1.0, dom.diameter()) : 0.0;
    const Vector y = near ? dom.project(x + Vector::Constant(x.size(), uniform(eng, -scale, scale))).point
                          : sample_uniform(dom, eng);
    const MeasureSummary nu = near ? detail::perturb_measure(mu, dom, scale, eng) : detail::random_measure(dom, eng);
    const auto c2 = evaluate(t, y, nu);
    if (!c2) continue;
    const double denom = (x - y).norm() + detail::bl_upper_bound(mu, nu);
    if (denom < 1e-14) continue;
    const double ratio = ((c->b - c2->b).norm() + (c->sigma - c2->sigma).norm()) / denom;
    rep.max_lipschitz_ratio_observed = std::max(rep.max_lipschitz_ratio_observed, ratio);
    ++rep.pairs;
  }
  rep.bound_pass = rep.max_bound_observed <= model.bound_L;
  rep.lipschitz_pass = rep.max_lipschitz_ratio_observed <= model.lipschitz_K;
  if (rep.evaluation_failures) rep.note = "non-finite coefficients at some sampled points";
  if (dom.kind() == ConvexDomain::Kind::box)
    rep.note += std::string(rep.note.empty() ? "" : "; ") + "box domain is not smooth";
  if (dom.dimension() > 1) rep.note += std::string(rep.note.empty() ? "" : "; ") +
                                       "measure distance is a dictionary lower bound, ratios are conservative";
  return rep;
}

// Built-in model zoo.
namespace models {

inline Matrix scaled_identity(int d, int d1, double s) {
  Matrix m = Matrix::Zero(d, d1);
  for (int i = 0; i < std::min(d, d1); ++i) m(i, i) = s;
  return m;
}

inline InitialCondition uniform_init(const ConvexDomain& dom) {
  return InitialCondition::sampled([dom](Engine& e) { return sample_uniform(dom, e); }, "uniform");
}

/// M1: b = 0, sigma = s I.
inline ModelSpec zero_drift(ConvexDomain dom, double s = 1.0, double horizon = 1.0) {
  ModelSpec m;
  m.id = "zero_drift";
  m.d = m.d1 = dom.dimension();
  m.domain = dom;
  m.horizon = horizon;
  const int d = m.d;
  m.drift = [d](double, const Vector&, const MeasureSummary&) { return Vector::Zero(d); };
  m.diffusion = [d, s](double, const Vector&, const MeasureSummary&) { return scaled_identity(d, d, s); };
  m.init = uniform_init(dom);
  m.bound_L = std::max(std::abs(s) * std::sqrt(static_cast<double>(d)), 1e-12);
  m.lipschitz_K = 1.0;
  m.measure_dependent = false;
  return m;
}

/// M2: b = theta (mean(mu) - x), sigma = s I.
inline ModelSpec mean_attraction(ConvexDomain dom, double theta, double s, double horizon = 1.0) {
  ModelSpec m;
  m.id = "mean_attraction";
  m.d = m.d1 = dom.dimension();
  m.domain = dom;
  m.horizon = horizon;
  const int d = m.d;
  m.drift = [theta](double, const Vector& x, const MeasureSummary& mu) { return Vector(theta * (mu.mean() - x)); };
  m.diffusion = [d, s](double, const Vector&, const MeasureSummary&) { return scaled_identity(d, d, s); };
  m.init = uniform_init(dom);
  const double diam = dom.diameter();
  m.bound_L = detail::with_margin(std::max(std::abs(theta) * diam + std::abs(s) * std::sqrt(static_cast<double>(d)), 1e-12));
  // |mean(mu) - mean(nu)| <= W1 <= max(1, diam/2) * BL.
  m.lipschitz_K = std::max(std::abs(theta) * std::max(1.0, diam / 2.0), 1e-12);
  return m;
}

/// M3: b = theta (mean(mu) - x), sigma = min(s (1 + alpha tr Cov(mu)), clip) I.
inline ModelSpec distribution_diffusion(ConvexDomain dom, double s, double alpha, double clip, double theta = 0.0,
                                        double horizon = 1.0) {
  ModelSpec m;
  m.id = "distribution_diffusion";
  m.d = m.d1 = dom.dimension();
  m.domain = dom;
  m.horizon = horizon;
  const int d = m.d;
  m.drift = [theta](double, const Vector& x, const MeasureSummary& mu) { return Vector(theta * (mu.mean() - x)); };
  m.diffusion = [d, s, alpha, clip](double, const Vector&, const MeasureSummary& mu) {
    return scaled_identity(d, d, std::min(s * (1.0 + alpha * mu.variance_trace()), clip));
  };
  m.init = uniform_init(dom);
  const double diam = dom.diameter();
  const double sqd = std::sqrt(static_cast<double>(d));
  m.bound_L = detail::with_margin(std::abs(theta) * diam + clip * sqd);
  // tr Cov is 4R-Lipschitz in W1 on a domain inside the ball of radius R.
  m.lipschitz_K = std::max({std::abs(theta), std::abs(s * alpha) * sqd * 4.0 * dom.bounding_radius(), 1e-12}) *
                  std::max(1.0, diam / 2.0);
  return m;
}

/// b = c (constant vector), sigma = s I.
inline ModelSpec constant_drift(ConvexDomain dom, Vector c, double s, double horizon = 1.0) {
  ModelSpec m;
  m.id = "constant_drift";
  m.d = m.d1 = dom.dimension();
  m.domain = dom;
  m.horizon = horizon;
  const int d = m.d;
  if (c.size() != d) throw InputError("constant_drift: drift dimension mismatch");
  m.drift = [c](double, const Vector&, const MeasureSummary&) { return c; };
  m.diffusion = [d, s](double, const Vector&, const MeasureSummary&) { return scaled_identity(d, d, s); };
  m.init = uniform_init(dom);
  m.bound_L = detail::with_margin(std::max(c.norm() + std::abs(s) * std::sqrt(static_cast<double>(d)), 1e-12));
  m.lipschitz_K = 1.0;
  m.measure_dependent = false;
  return m;
}

/// b = -kappa x, sigma = s I.
inline ModelSpec linear_drift(ConvexDomain dom, double kappa, double s, double horizon = 1.0) {
  ModelSpec m;
  m.id = "linear_drift";
  m.d = m.d1 = dom.dimension();
  m.domain = dom;
  m.horizon = horizon;
  const int d = m.d;
  m.drift = [kappa](double, const Vector& x, const MeasureSummary&) { return Vector(-kappa * x); };
  m.diffusion = [d, s](double, const Vector&, const MeasureSummary&) { return scaled_identity(d, d, s); };
  m.init = uniform_init(dom);
  m.bound_L = detail::with_margin(
      std::max(std::abs(kappa) * dom.bounding_radius() + std::abs(s) * std::sqrt(static_cast<double>(d)), 1e-12));
  m.lipschitz_K = std::max(std::abs(kappa), 1e-12);
  m.measure_dependent = false;
  return m;
}

/// b = 1 / (1 - x_1): unbounded near x_1 = 1; a designed (A3) violation.
inline ModelSpec singular_drift(ConvexDomain dom, double declared_L = 10.0) {
  ModelSpec m;
  m.id = "singular_drift";
  m.d = m.d1 = dom.dimension();
  m.domain = dom;
  const int d = m.d;
  m.drift = [d](double, const Vector& x, const MeasureSummary&) {
    Vector b = Vector::Zero(d);
    b[0] = 1.0 / (1.0 - x[0]);
    return b;
  };
  m.diffusion = [d](double, const Vector&, const MeasureSummary&) { return Matrix(Matrix::Zero(d, d)); };
  m.init = uniform_init(dom);
  m.bound_L = declared_L;
  m.lipschitz_K = declared_L;
  m.measure_dependent = false;
  return m;
}

}  // namespace models

}  // namespace rldp
