#pragma once

// Submartingale characterization on simulated ensembles: test functions with
// analytic partials, the generator A acting on f(t, x, z), the process M_f,
// the boundary condition <grad_x f, n> <= 0, and a one-sided statistical test.

#include "rldp/core.hpp"
#include "rldp/ensemble.hpp"
#include "rldp/geometry.hpp"
#include "rldp/grid.hpp"
#include "rldp/model.hpp"
#include "rldp/random.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rldp {

// f(t, x, z) on [0,T] x closure(D) x R^{d1}, with closed-form partials.
struct TestFunction {
  std::string id;
  int d = 1;
  int d1 = 1;
  std::function<double(double, const Vector&, const Vector&)> f;
  std::function<double(double, const Vector&, const Vector&)> f_t;
  std::function<Vector(double, const Vector&, const Vector&)> grad_x;
  std::function<Vector(double, const Vector&, const Vector&)> grad_z;
  std::function<Matrix(double, const Vector&, const Vector&)> hess_xx;
  std::function<Matrix(double, const Vector&, const Vector&)> hess_xz;  // d x d1
  std::function<Matrix(double, const Vector&, const Vector&)> hess_zz;
  bool bounded = true;

  double operator()(double t, const Vector& x, const Vector& z) const { return f(t, x, z); }
};

namespace test_functions {

namespace detail {
inline auto zero_scalar() {
  return [](double, const Vector&, const Vector&) { return 0.0; };
}
inline auto zero_vec(int n) {
  return [n](double, const Vector&, const Vector&) { return Vector(Vector::Zero(n)); };
}
inline auto zero_mat(int r, int c) {
  return [r, c](double, const Vector&, const Vector&) { return Matrix(Matrix::Zero(r, c)); };
}
}  // namespace detail

inline TestFunction constant(int d, int d1, double c = 1.0) {
  using namespace detail;
  return {"constant",   d, d1, [c](double, const Vector&, const Vector&) { return c; }, zero_scalar(),
          zero_vec(d),  zero_vec(d1), zero_mat(d, d), zero_mat(d, d1), zero_mat(d1, d1)};
}

/// f = t.
inline TestFunction time(int d, int d1) {
  using namespace detail;
  return {"time",      d, d1, [](double t, const Vector&, const Vector&) { return t; },
          [](double, const Vector&, const Vector&) { return 1.0; }, zero_vec(d), zero_vec(d1), zero_mat(d, d),
          zero_mat(d, d1), zero_mat(d1, d1)};
}

/// f = sign * x_axis^2.
inline TestFunction signed_square(int d, int d1, double sign, int axis = 0) {
  using namespace detail;
  TestFunction tf{sign < 0 ? "neg_sq_x" + std::to_string(axis + 1) : "sq_x" + std::to_string(axis + 1), d, d1,
                  [=](double, const Vector& x, const Vector&) { return sign * x[axis] * x[axis]; }, zero_scalar(),
                  [=](double, const Vector& x, const Vector&) {
                    Vector g = Vector::Zero(d);
                    g[axis] = 2.0 * sign * x[axis];
                    return g;
                  },
                  zero_vec(d1),
                  [=](double, const Vector&, const Vector&) {
                    Matrix h = Matrix::Zero(d, d);
                    h(axis, axis) = 2.0 * sign;
                    return h;
                  },
                  zero_mat(d, d1), zero_mat(d1, d1)};
  return tf;
}

/// f = -|x - c|^2; boundary-compliant on a ball centred at c.
inline TestFunction neg_sq_radius(const Vector& center, int d1) {
  using namespace detail;
  const int d = static_cast<int>(center.size());
  return {"neg_sq_radius", d, d1,
          [center](double, const Vector& x, const Vector&) { return -(x - center).squaredNorm(); }, zero_scalar(),
          [center](double, const Vector& x, const Vector&) { return Vector(-2.0 * (x - center)); }, zero_vec(d1),
          [d](double, const Vector&, const Vector&) { return Matrix(-2.0 * Matrix::Identity(d, d)); },
          zero_mat(d, d1), zero_mat(d1, d1)};
}

/// f = sign * x_axis: violates the boundary condition on the face where
/// the outward normal points along sign * e_axis.
inline TestFunction signed_linear(int d, int d1, double sign, int axis = 0) {
  using namespace detail;
  return {sign > 0 ? "x" + std::to_string(axis + 1) : "neg_x" + std::to_string(axis + 1), d, d1,
          [=](double, const Vector& x, const Vector&) { return sign * x[axis]; }, zero_scalar(),
          [=](double, const Vector&, const Vector&) {
            Vector g = Vector::Zero(d);
            g[axis] = sign;
            return g;
          },
          zero_vec(d1), zero_mat(d, d), zero_mat(d, d1), zero_mat(d1, d1)};
}

/// f = z_1, the driving noise itself.
inline TestFunction noise_coordinate(int d, int d1) {
  using namespace detail;
  return {"z1",        d, d1, [](double, const Vector&, const Vector& z) { return z[0]; }, zero_scalar(),
          zero_vec(d), [d1](double, const Vector&, const Vector&) { return Vector(Vector::Unit(d1, 0)); },
          zero_mat(d, d), zero_mat(d, d1), zero_mat(d1, d1)};
}

/// f = x_1 z_1.
inline TestFunction state_noise_product(int d, int d1) {
  using namespace detail;
  return {"x1_z1", d, d1, [](double, const Vector& x, const Vector& z) { return x[0] * z[0]; }, zero_scalar(),
          [d](double, const Vector&, const Vector& z) {
            Vector g = Vector::Zero(d);
            g[0] = z[0];
            return g;
          },
          [d1](double, const Vector& x, const Vector&) {
            Vector g = Vector::Zero(d1);
            g[0] = x[0];
            return g;
          },
          zero_mat(d, d),
          [d, d1](double, const Vector&, const Vector&) {
            Matrix h = Matrix::Zero(d, d1);
            h(0, 0) = 1.0;
            return h;
          },
          zero_mat(d1, d1)};
}

/// f = sign * cos(pi (x_axis - lo) / (hi - lo)): zero normal derivative on every
/// face of a box whose extent along `axis` is [lo, hi].
inline TestFunction neumann_cosine(int d, int d1, double lo, double hi, double sign = 1.0, int axis = 0) {
  using namespace detail;
  const double k = std::numbers::pi / (hi - lo);
  return {sign > 0 ? "neumann_cos" : "neg_neumann_cos", d, d1,
          [=](double, const Vector& x, const Vector&) { return sign * std::cos(k * (x[axis] - lo)); },
          zero_scalar(),
          [=](double, const Vector& x, const Vector&) {
            Vector g = Vector::Zero(d);
            g[axis] = -sign * k * std::sin(k * (x[axis] - lo));
            return g;
          },
          zero_vec(d1),
          [=](double, const Vector& x, const Vector&) {
            Matrix h = Matrix::Zero(d, d);
            h(axis, axis) = -sign * k * k * std::cos(k * (x[axis] - lo));
            return h;
          },
          zero_mat(d, d1), zero_mat(d1, d1)};
}

/// f = e^{-t} sin(<a, x> + <c, z>) + x_1 z_1^2 / 2, exercising every partial.
inline TestFunction smooth_mix(int d, int d1) {
  Vector a(d), c(d1);
  for (int i = 0; i < d; ++i) a[i] = 0.7 + 0.3 * i;
  for (int j = 0; j < d1; ++j) c[j] = 0.5 - 0.2 * j;
  auto phase = [a, c](const Vector& x, const Vector& z) { return a.dot(x) + c.dot(z); };
  return {"smooth_mix", d, d1,
          [=](double t, const Vector& x, const Vector& z) {
            return std::exp(-t) * std::sin(phase(x, z)) + 0.5 * x[0] * z[0] * z[0];
          },
          [=](double t, const Vector& x, const Vector& z) { return -std::exp(-t) * std::sin(phase(x, z)); },
          [=](double t, const Vector& x, const Vector& z) {
            Vector g = std::exp(-t) * std::cos(phase(x, z)) * a;
            g[0] += 0.5 * z[0] * z[0];
            return g;
          },
          [=](double t, const Vector& x, const Vector& z) {
            Vector g = std::exp(-t) * std::cos(phase(x, z)) * c;
            g[0] += x[0] * z[0];
            return g;
          },
          [=](double t, const Vector& x, const Vector& z) {
            return Matrix(-std::exp(-t) * std::sin(phase(x, z)) * a * a.transpose());
          },
          [=](double t, const Vector& x, const Vector& z) {
            Matrix h = -std::exp(-t) * std::sin(phase(x, z)) * a * c.transpose();
            h(0, 0) += z[0];
            return h;
          },
          [=](double t, const Vector& x, const Vector& z) {
            Matrix h = -std::exp(-t) * std::sin(phase(x, z)) * c * c.transpose();
            h(0, 0) += x[0];
            return h;
          },
          false};
}

/// Everything above, instantiated for a box domain of the given shape.
inline std::vector<TestFunction> registry(const ConvexDomain& dom, int d1) {
  const int d = dom.dimension();
  std::vector<TestFunction> out{constant(d, d1),
                                time(d, d1),
                                signed_square(d, d1, -1.0),
                                signed_square(d, d1, 1.0),
                                signed_linear(d, d1, 1.0),
                                noise_coordinate(d, d1),
                                state_noise_product(d, d1),
                                smooth_mix(d, d1)};
  if (dom.kind() == ConvexDomain::Kind::box) {
    out.push_back(neumann_cosine(d, d1, dom.lo()[0], dom.hi()[0], 1.0));
    out.push_back(neumann_cosine(d, d1, dom.lo()[0], dom.hi()[0], -1.0));
  } else {
    out.push_back(neg_sq_radius(dom.center(), d1));
  }
  return out;
}

}  // namespace test_functions

struct BoundaryCheck {
  bool pass = true;
  double worst_value = -std::numeric_limits<double>::infinity();
  double worst_t = 0.0;
  Vector worst_point;
  Vector worst_z;
};

/// max of <grad_x f(t, x, z), n(x)> over sampled boundary points; pass iff <= 1e-10.
inline BoundaryCheck boundary_condition_check(const TestFunction& f, const ConvexDomain& dom, std::size_t n_samples,
                                              std::uint64_t seed, double horizon = 1.0, double z_range = 3.0) {
  if (n_samples < 1) throw PreconditionError("boundary_condition_check: need n_samples >= 1");
  if (f.d != dom.dimension()) throw InputError("boundary_condition_check: dimension mismatch");
  Engine eng = make_engine({seed, StreamPurpose::sampling, 1, 0, 0});
  BoundaryCheck out;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const double t = uniform(eng, 0.0, horizon);
    const Vector x = sample_boundary(dom, eng);
    Vector z(f.d1);
    for (int j = 0; j < f.d1; ++j) z[j] = uniform(eng, -z_range, z_range);
    const double v = f.grad_x(t, x, z).dot(dom.outward_normal(x));
    if (v > out.worst_value) {
      out.worst_value = v;
      out.worst_t = t;
      out.worst_point = x;
      out.worst_z = z;
    }
  }
  out.pass = out.worst_value <= 1e-10;
  return out;
}

/// <b + sigma y, grad_x f> + 1/2 tr(sigma sigma^T f_xx) + sum_ij sigma_ij f_{x_i z_j} + 1/2 tr f_zz,
/// with coefficients evaluated at (t, x, nu).
inline double generator_apply(const ModelSpec& model, const TestFunction& f, double t, const Vector& x,
                              const Vector& y, const Vector& z, const MeasureSummary& nu) {
  if (!model.domain.in_closure(x)) throw PreconditionError("generator_apply: x outside the domain");
  const Coefficients c = eval_coefficients(model, t, x, nu);
  const Vector gx = f.grad_x(t, x, z);
  const Matrix hxx = f.hess_xx(t, x, z);
  const Matrix hxz = f.hess_xz(t, x, z);
  const Matrix hzz = f.hess_zz(t, x, z);
  if (!gx.allFinite() || !hxx.allFinite() || !hxz.allFinite() || !hzz.allFinite())
    throw ModelError("generator_apply: non-finite partials of " + f.id);
  const double drift = (c.b + c.sigma * y).dot(gx);
  const double diffusion = 0.5 * (c.sigma * c.sigma.transpose()).cwiseProduct(hxx).sum();
  const double cross = c.sigma.cwiseProduct(hxz).sum();
  const double noise = 0.5 * hzz.trace();
  return drift + diffusion + cross + noise;
}

/// Cumulative noise path w(t_k) from increments, w(0) = 0.
inline std::vector<Vector> cumulative_noise(std::span<const Vector> increments, int d1) {
  std::vector<Vector> w;
  w.reserve(increments.size() + 1);
  w.push_back(Vector::Zero(d1));
  for (const auto& inc : increments) w.push_back(w.back() + inc);
  return w;
}

/// M_f(t_k) = f(t_k, phi_k, w_k) - f(0, phi_0, w_0) - sum_{j<k} [f_t + A f(., h_j, .)](t_j, phi_j, w_j) dt,
/// left-endpoint sums, atomic controls r_s = delta_{h(s)}. Empty `controls` means h = 0.
inline std::vector<double> mf_process(const ModelSpec& model, const TestFunction& f, const TimeGrid& grid,
                                      std::span<const Vector> states, std::span<const Vector> controls,
                                      std::span<const Vector> noise_increments, std::span<const MeasureSummary> nu_flow) {
  const std::size_t n = grid.steps();
  if (states.size() != grid.nodes() || noise_increments.size() != n)
    throw InputError("mf_process: path does not match grid");
  if (!controls.empty() && controls.size() != n) throw InputError("mf_process: controls do not match grid");
  if (nu_flow.size() != grid.nodes() && nu_flow.size() != 1) throw InputError("mf_process: flow does not match grid");
  const auto w = cumulative_noise(noise_increments, model.d1);
  const Vector zero_y = Vector::Zero(model.d1);
  const double dt = grid.dt();
  const double f0 = f(0.0, states[0], w[0]);

  std::vector<double> m(grid.nodes(), 0.0);
  double integral = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t j = k - 1;
    const double tj = grid.time(j);
    const auto& nu = nu_flow.size() == 1 ? nu_flow[0] : nu_flow[j];
    const Vector& y = controls.empty() ? zero_y : controls[j];
    integral += (f.f_t(tj, states[j], w[j]) + generator_apply(model, f, tj, states[j], y, w[j], nu)) * dt;
    m[k] = f(grid.time(k), states[k], w[k]) - f0 - integral;
  }
  return m;
}

inline std::vector<double> mf_process(const ModelSpec& model, const TestFunction& f, const Ensemble& ens,
                                      std::size_t particle, std::span<const MeasureSummary> nu_flow) {
  if (particle >= ens.N) throw InputError("mf_process: particle index out of range");
  return mf_process(model, f, ens.grid, ens.paths[particle].states, ens.controls[particle], ens.noises[particle],
                    nu_flow);
}

// Nonnegative weight Psi(phi(t0), w(t0)), measurable at the earlier time.
struct WeightFunction {
  std::string id;
  std::function<double(const Vector& phi_t0, const Vector& w_t0)> psi;
};

/// Constant 1, three bumps in the state at seeded centres, and two clipped
/// ramps in the noise coordinate.
inline std::vector<WeightFunction> weight_dictionary(const ConvexDomain& dom, std::uint64_t seed = 0xD1C7) {
  std::vector<WeightFunction> out;
  out.push_back({"one", [](const Vector&, const Vector&) { return 1.0; }});
  Engine eng = make_engine({seed, StreamPurpose::dictionary, 2, 0, 0});
  const double width = 0.5 * dom.diameter();
  for (int j = 0; j < 3; ++j) {
    const Vector c = sample_uniform(dom, eng);
    out.push_back({"bump" + std::to_string(j), [c, width](const Vector& x, const Vector&) {
                     return std::max(0.0, 1.0 - (x - c).norm() / width);
                   }});
  }
  out.push_back({"w_up", [](const Vector&, const Vector& w) { return std::clamp(1.0 + w[0], 0.0, 2.0); }});
  out.push_back({"w_down", [](const Vector&, const Vector& w) { return std::clamp(1.0 - w[0], 0.0, 2.0); }});
  return out;
}

struct SubmartingaleEntry {
  double t0 = 0.0;
  double t1 = 0.0;
  std::string weight;
  double statistic = 0.0;  // mean of Psi (M_f(t1) - M_f(t0))
  double std_error = 0.0;
  double threshold = 0.0;  // tau = z SE + c_bias dt
  bool pass = true;        // statistic >= -tau
};

struct SubmartingaleReport {
  std::string function_id;
  std::vector<SubmartingaleEntry> entries;
  double confidence = 0.95;
  double z = 0.0;
  double c_bias = 0.0;
  std::size_t n_paths = 0;
  bool boundary_ok = true;
  bool pass = true;

  double min_margin() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& e : entries) m = std::min(m, e.statistic + e.threshold);
    return m;
  }
};

struct SubmartingaleOptions {
  double confidence = 0.95;
  double c_bias = 0.0;
  std::size_t n_paths = 0;  // 0: every path in every ensemble
  /// Test hook: run even if f violates the boundary condition.
  bool skip_boundary_check = false;
  std::size_t boundary_samples = 1000;
  std::uint64_t seed = 0;
  std::vector<WeightFunction> weights;  // empty: weight_dictionary(domain)
};

inline double one_sided_z(double confidence) {
  if (!(confidence > 0.5 && confidence < 1.0)) throw InputError("confidence must lie in (0.5, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), confidence);
}

/// For each (t0, t1) and weight Psi, tests E[Psi (M_f(t1) - M_f(t0))] >= 0.
/// `nu_flow` null means each ensemble is driven by its own empirical marginals.
inline SubmartingaleReport submartingale_test(const ModelSpec& model, std::span<const Ensemble> ensembles,
                                              const MeasureFlow* nu_flow, const TestFunction& f,
                                              std::span<const std::pair<double, double>> time_pairs,
                                              const SubmartingaleOptions& opt = {}) {
  if (ensembles.empty()) throw InputError("submartingale_test: no ensembles");
  SubmartingaleReport rep;
  rep.function_id = f.id;
  rep.confidence = opt.confidence;
  rep.z = one_sided_z(opt.confidence);
  rep.c_bias = opt.c_bias;
  const BoundaryCheck bc = boundary_condition_check(f, model.domain, opt.boundary_samples, opt.seed, model.horizon);
  rep.boundary_ok = bc.pass;
  if (!bc.pass && !opt.skip_boundary_check)
    throw PreconditionError("submartingale_test: " + f.id + " violates <grad_x f, n> <= 0 (worst " +
                            std::to_string(bc.worst_value) + ")");
  const TimeGrid& grid = ensembles.front().grid;
  for (const auto& e : ensembles)
    if (!(e.grid == grid)) throw InputError("submartingale_test: ensembles on different grids");

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& [t0, t1] : time_pairs) {
    const std::size_t k0 = grid.node_index(t0), k1 = grid.node_index(t1);
    if (k0 >= k1) throw PreconditionError("submartingale_test: need t0 < t1");
    pairs.emplace_back(k0, k1);
  }
  const auto weights = opt.weights.empty() ? weight_dictionary(model.domain) : opt.weights;

  // Per path: M_f series, phi and w at the needed times.
  struct PathRecord {
    std::vector<double> m;
    std::vector<Vector> w;
    const ReflectedPath* path;
  };
  std::vector<PathRecord> records;
  for (const auto& ens : ensembles) {
    const MeasureFlow own = nu_flow ? MeasureFlow{} : marginal_flow(ens);
    const MeasureFlow& flow = nu_flow ? *nu_flow : own;
    for (std::size_t i = 0; i < ens.N; ++i) {
      if (opt.n_paths && records.size() >= opt.n_paths) break;
      records.push_back({mf_process(model, f, ens, i, flow), cumulative_noise(ens.noises[i], model.d1),
                         &ens.paths[i]});
    }
  }
  rep.n_paths = records.size();
  if (rep.n_paths < 2) throw InputError("submartingale_test: need at least two paths");

  const double dt = grid.dt();
  std::vector<double> samples(records.size());
  for (const auto& [k0, k1] : pairs) {
    for (const auto& wf : weights) {
      for (std::size_t p = 0; p < records.size(); ++p) {
        const auto& r = records[p];
        const double psi = wf.psi(r.path->states[k0], r.w[k0]);
        samples[p] = psi * (r.m[k1] - r.m[k0]);
      }
      SubmartingaleEntry e;
      e.t0 = grid.time(k0);
      e.t1 = grid.time(k1);
      e.weight = wf.id;
      double mean = 0.0;
      for (double s : samples) mean += s;
      mean /= static_cast<double>(samples.size());
      double var = 0.0;
      for (double s : samples) var += (s - mean) * (s - mean);
      var /= static_cast<double>(samples.size() - 1);
      e.statistic = mean;
      e.std_error = std::sqrt(var / static_cast<double>(samples.size()));
      e.threshold = rep.z * e.std_error + opt.c_bias * dt;
      e.pass = e.statistic >= -e.threshold;
      rep.pass = rep.pass && e.pass;
      rep.entries.push_back(e);
    }
  }
  return rep;
}

struct BiasCalibration {
  double c_bias = 0.0;
  std::vector<double> step_sizes;
  std::vector<std::vector<double>> statistics;  // [case][level] mean M_f(T)
  std::vector<double> slopes;
};

/// Regresses the unconditional statistic mean M_f(T) on dt in {4h, 2h, h} for
/// functions whose statistic has known nonnegative expectation; the largest
/// negative slope (through the origin) is the allowance per unit dt.
inline BiasCalibration calibrate_bias(const ModelSpec& model, std::span<const TestFunction> cases,
                                      std::size_t base_steps, std::size_t N, std::size_t replicas,
                                      std::uint64_t seed) {
  if (base_steps < 4 || base_steps % 4 != 0) throw InputError("calibrate_bias: base_steps must be a multiple of 4");
  BiasCalibration cal;
  cal.statistics.assign(cases.size(), {});
  for (std::size_t level : {std::size_t{4}, std::size_t{2}, std::size_t{1}}) {
    const TimeGrid grid(model.horizon, base_steps / level);
    cal.step_sizes.push_back(grid.dt());
    std::vector<Ensemble> ens;
    for (std::size_t r = 0; r < replicas; ++r) {
      SimulationOptions opt;
      opt.replica = r;
      ens.push_back(simulate_particle_system(model, N, grid, nullptr, seed, opt));
    }
    for (std::size_t c = 0; c < cases.size(); ++c) {
      double total = 0.0;
      std::size_t count = 0;
      for (const auto& e : ens) {
        const MeasureFlow flow = marginal_flow(e);
        for (std::size_t i = 0; i < e.N; ++i) {
          total += mf_process(model, cases[c], e, i, flow).back();
          ++count;
        }
      }
      cal.statistics[c].push_back(total / static_cast<double>(count));
    }
  }
  double sxx = 0.0;
  for (double h : cal.step_sizes) sxx += h * h;
  for (const auto& stats : cal.statistics) {
    double sxy = 0.0;
    for (std::size_t l = 0; l < stats.size(); ++l) sxy += cal.step_sizes[l] * stats[l];
    const double slope = sxy / sxx;
    cal.slopes.push_back(slope);
    cal.c_bias = std::max(cal.c_bias, -slope);
  }
  return cal;
}

}  // namespace rldp
