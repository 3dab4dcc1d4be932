#pragma once

// Monte Carlo Laplace functional, the controlled variational objective,
// common-random-number control optimization, and penalized rate estimates.

#include "rldp/controls.hpp"
#include "rldp/core.hpp"
#include "rldp/ensemble.hpp"
#include "rldp/measures.hpp"
#include "rldp/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace rldp {

// Lazily materialized per-node empirical measures of one ensemble (or a
// wrapped precomputed flow). Functionals touching only the terminal node never
// pay for the rest.
class FlowView {
 public:
  explicit FlowView(const Ensemble& ens) : ens_(&ens), cache_(ens.grid.nodes()) {}
  explicit FlowView(const MeasureFlow& flow) : flow_(&flow) {}

  std::size_t size() const { return flow_ ? flow_->size() : cache_.size(); }

  const MeasureSummary& at(std::size_t k) const {
    if (k >= size()) throw InputError("FlowView: node out of range");
    if (flow_) return (*flow_)[k];
    if (!cache_[k]) cache_[k] = empirical_measure_at_node(*ens_, k);
    return *cache_[k];
  }

  const MeasureSummary& terminal() const { return at(size() - 1); }

 private:
  const Ensemble* ens_ = nullptr;
  const MeasureFlow* flow_ = nullptr;
  mutable std::vector<std::optional<MeasureSummary>> cache_;
};

/// Bounded functional F of the path-marginal flow; |F| <= f_max.
struct Functional {
  std::string id;
  double f_max = 0.0;
  std::function<double(const FlowView&)> evaluate;
  std::string continuity_note;

  double operator()(const FlowView& flow) const { return evaluate(flow); }
  double operator()(const MeasureFlow& flow) const { return evaluate(FlowView(flow)); }
};

namespace functionals {

inline Functional constant(double c) {
  return {"constant", std::abs(c), [c](const FlowView&) { return c; }, "constant"};
}

/// clip(mean_axis(mu(T)), lo, hi).
inline Functional terminal_mean_clip(int axis = 0, double lo = 0.0, double hi = 1.0) {
  return {"terminal_mean_clip", std::max(std::abs(lo), std::abs(hi)),
          [=](const FlowView& f) { return std::clamp(f.terminal().mean()[axis], lo, hi); },
          "Lipschitz in the terminal mean"};
}

/// slope * mean_axis(mu(T)) + offset; bounded on a bounded domain.
inline Functional terminal_mean_linear(double slope, double offset, double domain_radius, int axis = 0) {
  return {"terminal_mean_linear", std::abs(offset) + std::abs(slope) * domain_radius,
          [=](const FlowView& f) { return slope * f.terminal().mean()[axis] + offset; },
          "Lipschitz in the terminal mean"};
}

}  // namespace functionals

enum class DistanceKind { bl_terminal, bl_summed, mean_terminal };

inline const char* to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::bl_terminal: return "bl_terminal";
    case DistanceKind::bl_summed: return "bl_summed";
    case DistanceKind::mean_terminal: return "mean_terminal";
  }
  return "?";
}

// Target of a rate estimate: a terminal measure or a whole marginal flow.
struct RateTarget {
  MeasureFlow flow;  // a single entry means terminal-only
  std::string description;

  const MeasureSummary& terminal() const { return flow.back(); }
};

/// Distance between an ensemble's marginals and the target.
inline double target_distance(const FlowView& flow, const RateTarget& target, DistanceKind kind, double dt) {
  switch (kind) {
    case DistanceKind::bl_terminal: return bl_distance(flow.terminal(), target.terminal()).value;
    case DistanceKind::mean_terminal: return (flow.terminal().mean() - target.terminal().mean()).norm();
    case DistanceKind::bl_summed: {
      if (target.flow.size() != flow.size()) throw InputError("target flow length differs from grid");
      double s = 0.0;
      for (std::size_t k = 1; k < flow.size(); ++k) s += bl_distance(flow.at(k), target.flow[k]).value * dt;
      return s;
    }
  }
  return 0.0;
}

/// F(mu) = lambda * distance(mu, target).
inline Functional penalty_functional(RateTarget target, DistanceKind kind, double lambda, double dt,
                                     double horizon, double diameter) {
  double bound = 2.0;
  if (kind == DistanceKind::bl_summed) bound = 2.0 * horizon;
  if (kind == DistanceKind::mean_terminal) bound = diameter;
  auto shared = std::make_shared<RateTarget>(std::move(target));
  return {std::string("penalty_") + to_string(kind), lambda * bound,
          [shared, kind, lambda, dt](const FlowView& f) { return lambda * target_distance(f, *shared, kind, dt); },
          "Lipschitz in the bounded-Lipschitz metric"};
}

namespace detail {

// Mean anchored at the first sample: exact when all samples coincide.
inline double anchored_mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double x0 = xs.front();
  double s = 0.0;
  for (double x : xs) s += x - x0;
  return x0 + s / static_cast<double>(xs.size());
}

inline double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = anchored_mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

struct McConfig {
  std::size_t N = 32;
  std::size_t M = 64;
  std::uint64_t seed = 0;
  WorkerPool* pool = nullptr;
  double particle_step_budget = kDefaultParticleStepBudget;
};

struct ReplicaOutcome {
  double functional = 0.0;
  double cost = 0.0;
};

/// Runs M independent ensembles (replica m uses substream m) and evaluates F
/// and the control cost on each. Replicas are distributed over the pool.
inline std::vector<ReplicaOutcome> run_replicas(const ModelSpec& model, const Functional& F,
                                                const ControlPolicy* policy, const TimeGrid& grid,
                                                const McConfig& cfg) {
  if (static_cast<double>(cfg.N) * static_cast<double>(cfg.M) * static_cast<double>(grid.steps()) >
      cfg.particle_step_budget)
    throw BudgetError("N * M * n_steps exceeds the particle-step budget");
  std::vector<ReplicaOutcome> out(cfg.M);
  auto body = [&](std::size_t m) {
    SimulationOptions opt;
    opt.replica = m;
    opt.particle_step_budget = cfg.particle_step_budget;
    const Ensemble ens = simulate_particle_system(model, cfg.N, grid, policy, cfg.seed, opt);
    out[m] = {F(FlowView(ens)), ens.cost()};
  };
  if (cfg.pool)
    cfg.pool->parallel_for(cfg.M, body);
  else
    for (std::size_t m = 0; m < cfg.M; ++m) body(m);
  return out;
}

struct LaplaceEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t N = 0;
  std::size_t M = 0;
  double effective_sample_size = 0.0;
  bool guard_triggered = false;  // ESS < 0.01 M: the estimate is dominated by few replicas
  std::vector<double> functional_values;
};

/// -(1/N) log mean_m exp(-N F(mu^N_m)) from precomputed functional values,
/// with log-sum-exp stabilization and a delta-method standard error.
inline LaplaceEstimate laplace_from_values(std::vector<double> values, std::size_t N) {
  const std::size_t M = values.size();
  if (M < 2) throw PreconditionError("laplace estimate needs M >= 2 replicas");
  LaplaceEstimate est;
  est.N = N;
  est.M = M;
  const double nd = static_cast<double>(N);
  const double f_min = *std::min_element(values.begin(), values.end());
  std::vector<double> s(M);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    s[m] = std::exp(-nd * (values[m] - f_min));  // in (0, 1], largest term exactly 1
    sum += s[m];
    sum_sq += s[m] * s[m];
  }
  const double mean = sum / static_cast<double>(M);
  est.value = f_min - std::log(mean) / nd;
  est.std_error = detail::sample_sd(s) / (std::sqrt(static_cast<double>(M)) * mean) / nd;
  est.effective_sample_size = sum * sum / sum_sq;
  est.guard_triggered = est.effective_sample_size < 0.01 * static_cast<double>(M);
  est.functional_values = std::move(values);
  return est;
}

inline LaplaceEstimate laplace_functional_mc(const ModelSpec& model, const Functional& F, const TimeGrid& grid,
                                             const McConfig& cfg) {
  if (cfg.M < 2) throw PreconditionError("laplace_functional_mc: need M >= 2");
  const auto outcomes = run_replicas(model, F, nullptr, grid, cfg);
  std::vector<double> values(outcomes.size());
  for (std::size_t m = 0; m < outcomes.size(); ++m) values[m] = outcomes[m].functional;
  return laplace_from_values(std::move(values), cfg.N);
}

struct VariationalEstimate {
  double objective = 0.0;
  double cost_part = 0.0;
  double functional_part = 0.0;
  double std_error = 0.0;
  double cost_std_error = 0.0;
  double functional_std_error = 0.0;
  std::vector<ReplicaOutcome> replicas;
};

inline VariationalEstimate variational_from_outcomes(std::vector<ReplicaOutcome> outcomes) {
  const std::size_t M = outcomes.size();
  if (M < 2) throw PreconditionError("variational estimate needs M >= 2 replicas");
  std::vector<double> cost(M), fval(M), total(M);
  for (std::size_t m = 0; m < M; ++m) {
    cost[m] = outcomes[m].cost;
    fval[m] = outcomes[m].functional;
    total[m] = cost[m] + fval[m];
  }
  const double root_m = std::sqrt(static_cast<double>(M));
  VariationalEstimate v;
  v.cost_part = detail::anchored_mean(cost);
  v.functional_part = detail::anchored_mean(fval);
  v.objective = v.cost_part + v.functional_part;
  v.std_error = detail::sample_sd(total) / root_m;
  v.cost_std_error = detail::sample_sd(cost) / root_m;
  v.functional_std_error = detail::sample_sd(fval) / root_m;
  v.replicas = std::move(outcomes);
  return v;
}

/// mean over M controlled ensembles of cost + F(mu-bar^N).
inline VariationalEstimate variational_objective(const ModelSpec& model, const Functional& F,
                                                 const ControlPolicy& policy, const TimeGrid& grid,
                                                 const McConfig& cfg) {
  if (cfg.M < 2) throw PreconditionError("variational_objective: need M >= 2");
  return variational_from_outcomes(run_replicas(model, F, &policy, grid, cfg));
}

struct OptimizerSettings {
  std::size_t budget = 60;        // objective evaluations
  double initial_step = 0.5;      // simplex edge length of the first run
  std::size_t max_restarts = 4;
  double x_tol = 1e-6;
  double f_tol = 1e-10;
};

struct OptimizationResult {
  ControlPolicy best_policy;
  Vector best_parameters;
  VariationalEstimate best;
  std::vector<double> trace;  // best-so-far objective after each evaluation
  std::size_t evaluations = 0;
  std::size_t restarts = 0;
  bool budget_exhausted = false;
};

namespace detail {

// Nelder-Mead on a budgeted objective. Returns when the simplex collapses
// below x_tol / f_tol or the objective refuses more evaluations.
template <class Objective>
void nelder_mead(Objective&& f, const Vector& start, double step, double x_tol, double f_tol) {
  const auto n = start.size();
  std::vector<Vector> pts{start};
  std::vector<double> vals;
  auto eval = [&](const Vector& x, double& out) { return f(x, out); };
  double v0;
  if (!eval(start, v0)) return;
  vals.push_back(v0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector x = start;
    x[i] += step;
    double v;
    if (!eval(x, v)) return;
    pts.push_back(x);
    vals.push_back(v);
  }
  std::vector<std::size_t> order(pts.size());
  for (;;) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    double size = 0.0;
    for (const auto& p : pts) size = std::max(size, (p - pts[best]).cwiseAbs().maxCoeff());
    if (size < x_tol || std::abs(vals[worst] - vals[best]) < f_tol) return;

    Vector centroid = Vector::Zero(n);
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(n);

    const Vector xr = centroid + (centroid - pts[worst]);
    double fr;
    if (!eval(xr, fr)) return;
    if (fr < vals[best]) {
      const Vector xe = centroid + 2.0 * (centroid - pts[worst]);
      double fe;
      if (!eval(xe, fe)) return;
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid)) : Vector(centroid + 0.5 * (pts[worst] - centroid));
    double fc;
    if (!eval(xc, fc)) return;
    if (fc < std::min(fr, vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    // Shrink toward the best vertex.
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      if (!eval(pts[i], vals[i])) return;
    }
  }
}

}  // namespace detail

/// Restarted Nelder-Mead over the parameters of `family`, with the same
/// replica substreams at every evaluation. The first run starts at theta = 0,
/// so the result is never worse than the zero policy.
inline OptimizationResult optimize_controls(const ModelSpec& model, const Functional& F,
                                            const PolicyFamilySpec& family, const TimeGrid& grid,
                                            const McConfig& cfg, const OptimizerSettings& settings = {}) {
  const std::size_t dim = family.parameter_count();
  if (dim == 0) throw InputError("optimize_controls: family has no parameters");
  if (settings.budget < dim + 2) throw PreconditionError("optimize_controls: budget must be at least dim + 2");
  OptimizationResult res;
  double best_val = std::numeric_limits<double>::infinity();

  auto objective = [&](const Vector& theta, double& out) {
    if (res.evaluations >= settings.budget) {
      res.budget_exhausted = true;
      return false;
    }
    const ControlPolicy policy = ControlPolicy::from_parameters(family, theta);
    VariationalEstimate est = variational_objective(model, F, policy, grid, cfg);
    ++res.evaluations;
    out = est.objective;
    if (out < best_val) {
      best_val = out;
      res.best = std::move(est);
      res.best_parameters = policy.parameters();
      res.best_policy = policy;
    }
    res.trace.push_back(best_val);
    return true;
  };

  Engine eng = make_engine({cfg.seed, StreamPurpose::optimizer, 0, 0, 0});
  Vector start = Vector::Zero(static_cast<Eigen::Index>(dim));
  double step = settings.initial_step;
  for (std::size_t r = 0; r <= settings.max_restarts && !res.budget_exhausted; ++r) {
    res.restarts = r;
    detail::nelder_mead(objective, start, step, settings.x_tol, settings.f_tol);
    if (res.evaluations >= settings.budget) break;
    // Alternate between polishing the incumbent and a fresh draw in the box.
    if (r % 2 == 0) {
      start = res.best_parameters;
      step *= 0.5;
    } else {
      start = Vector(static_cast<Eigen::Index>(dim));
      const double box = std::min(family.theta_bound, 4.0 * settings.initial_step);
      for (Eigen::Index i = 0; i < start.size(); ++i) start[i] = uniform(eng, -box, box);
      step = settings.initial_step;
    }
  }
  return res;
}

struct RateStep {
  double lambda = 0.0;
  double achieved_distance = 0.0;  // mean over replicas at the optimum
  double cost = 0.0;
  double objective = 0.0;
  double objective_std_error = 0.0;
  double zero_policy_objective = 0.0;
  double zero_policy_std_error = 0.0;
  Vector parameters;
  std::size_t evaluations = 0;
};

struct RateEstimate {
  std::string target;
  DistanceKind distance = DistanceKind::bl_terminal;
  double radius = 0.0;
  std::vector<RateStep> steps;
  bool feasible = false;
  double penalty_weight = 0.0;
  double achieved_distance = std::numeric_limits<double>::infinity();
  double cost = std::numeric_limits<double>::infinity();
  /// Upper estimate of the radius-smoothed rate (restricted family); +inf when infeasible.
  double upper_bound = std::numeric_limits<double>::infinity();
  /// Standard error of the zero-policy objective at the selected penalty.
  double statistical_tolerance = 0.0;
};

struct RateSettings {
  std::vector<double> lambda_schedule{1.0, 2.0, 4.0, 8.0};
  DistanceKind distance = DistanceKind::bl_terminal;
  double radius = 0.05;
  PolicyFamilySpec family;
  OptimizerSettings optimizer;
};

/// For each penalty lambda, optimize cost + lambda * distance; report the cost
/// at the largest lambda whose mean achieved distance is within the radius.
inline RateEstimate estimate_rate(const ModelSpec& model, const RateTarget& target, const TimeGrid& grid,
                                  const McConfig& cfg, const RateSettings& settings) {
  if (settings.lambda_schedule.empty()) throw PreconditionError("estimate_rate: empty penalty schedule");
  for (std::size_t i = 1; i < settings.lambda_schedule.size(); ++i)
    if (!(settings.lambda_schedule[i] > settings.lambda_schedule[i - 1]))
      throw PreconditionError("estimate_rate: penalty schedule must be increasing");
  if (settings.distance == DistanceKind::bl_summed && target.flow.size() != grid.nodes())
    throw InputError("estimate_rate: summed distance needs a target flow on the grid");

  RateEstimate est;
  est.target = target.description;
  est.distance = settings.distance;
  est.radius = settings.radius;
  const Functional unit = penalty_functional(target, settings.distance, 1.0, grid.dt(), grid.horizon(),
                                             model.domain.diameter());
  // Zero-policy distances do not depend on lambda: compute them once.
  const auto zero_policy = ControlPolicy::zero(model.d1);
  const VariationalEstimate zero_unit = variational_objective(model, unit, zero_policy, grid, cfg);

  for (double lambda : settings.lambda_schedule) {
    const Functional F = penalty_functional(target, settings.distance, lambda, grid.dt(), grid.horizon(),
                                            model.domain.diameter());
    const OptimizationResult opt = optimize_controls(model, F, settings.family, grid, cfg, settings.optimizer);
    RateStep step;
    step.lambda = lambda;
    step.cost = opt.best.cost_part;
    step.objective = opt.best.objective;
    step.objective_std_error = opt.best.std_error;
    step.achieved_distance = opt.best.functional_part / lambda;
    step.zero_policy_objective = lambda * zero_unit.functional_part;
    step.zero_policy_std_error = lambda * zero_unit.functional_std_error;
    step.parameters = opt.best_parameters;
    step.evaluations = opt.evaluations;
    est.steps.push_back(step);
    if (step.achieved_distance <= settings.radius) {
      est.feasible = true;
      est.penalty_weight = lambda;
      est.achieved_distance = step.achieved_distance;
      est.cost = step.cost;
      est.upper_bound = step.cost;
      est.statistical_tolerance = step.zero_policy_std_error;
    }
  }
  return est;
}

}  // namespace rldp
