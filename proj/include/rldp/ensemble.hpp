#pragma once

// Synchronous N-particle simulation of the (controlled) interacting reflected
// system, empirical measures, and the McKean-Vlasov reference flow.

#include "rldp/controls.hpp"
#include "rldp/core.hpp"
#include "rldp/grid.hpp"
#include "rldp/integrator.hpp"
#include "rldp/measure_summary.hpp"
#include "rldp/measures.hpp"
#include "rldp/model.hpp"
#include "rldp/random.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace rldp {

inline constexpr double kDefaultParticleStepBudget = 2e9;

struct SimulationOptions {
  std::uint64_t replica = 0;
  StreamPurpose purpose = StreamPurpose::brownian;
  /// Test hook: force every Brownian increment to zero.
  bool zero_noise = false;
  /// Stream index per particle; defaults to the particle index.
  std::vector<std::uint64_t> stream_ids;
  WorkerPool* pool = nullptr;
  double particle_step_budget = kDefaultParticleStepBudget;
};

// The canonical triple (paths, controls, noises) of one N-particle run.
struct Ensemble {
  std::size_t N = 0;
  TimeGrid grid{1.0, 1};
  std::vector<ReflectedPath> paths;
  std::vector<std::vector<Vector>> noises;    // [i][k] Brownian increment on cell k
  std::vector<std::vector<Vector>> controls;  // [i][k] h value on cell k; empty rows mean h = 0
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  std::string model_id;
  std::string policy_id = "none";
  bool deterministic_init = false;

  double cost() const { return ensemble_cost(controls, grid.dt()); }
};

inline std::vector<Vector> states_at(const Ensemble& ens, std::size_t k) {
  std::vector<Vector> pts;
  pts.reserve(ens.N);
  for (const auto& p : ens.paths) pts.push_back(p.states[k]);
  return pts;
}

/// Uniform measure on the N states at grid time t (no interpolation).
inline MeasureSummary empirical_measure_at(const Ensemble& ens, double t) {
  return MeasureSummary::empirical(states_at(ens, ens.grid.node_index(t)));
}

inline MeasureSummary empirical_measure_at_node(const Ensemble& ens, std::size_t k) {
  if (k >= ens.grid.nodes()) throw InputError("empirical_measure_at_node: node out of range");
  return MeasureSummary::empirical(states_at(ens, k));
}

inline MeasureFlow marginal_flow(const Ensemble& ens) {
  MeasureFlow flow;
  flow.reserve(ens.grid.nodes());
  for (std::size_t k = 0; k < ens.grid.nodes(); ++k) flow.push_back(MeasureSummary::empirical(states_at(ens, k)));
  return flow;
}

inline void check_grid(const ModelSpec& model, const TimeGrid& grid) {
  if (std::abs(grid.horizon() - model.horizon) > 1e-12 * std::max(1.0, model.horizon))
    throw InputError("grid horizon " + std::to_string(grid.horizon()) + " differs from model horizon " +
                     std::to_string(model.horizon));
}

/// Synchronous explicit-Euler stepping: at t_k the empirical measure of the
/// current states is formed, controls are evaluated per particle, then every
/// particle takes one reflected step. `policy` null means the uncontrolled system.
inline Ensemble simulate_particle_system(const ModelSpec& model, std::size_t N, const TimeGrid& grid,
                                         const ControlPolicy* policy, std::uint64_t seed,
                                         const SimulationOptions& opt = {}) {
  if (N < 1) throw PreconditionError("simulate_particle_system: need N >= 1");
  model.validate();
  check_grid(model, grid);
  if (static_cast<double>(N) * static_cast<double>(grid.steps()) > opt.particle_step_budget)
    throw BudgetError("simulate_particle_system: N * n_steps exceeds the particle-step budget");
  if (!opt.stream_ids.empty() && opt.stream_ids.size() != N)
    throw InputError("simulate_particle_system: stream_ids must have one entry per particle");
  if (policy && policy->control_dimension() != model.d1)
    throw InputError("simulate_particle_system: policy control dimension differs from d1");

  const std::size_t n = grid.steps();
  const double dt = grid.dt();
  Ensemble ens;
  ens.N = N;
  ens.grid = grid;
  ens.seed = seed;
  ens.replica = opt.replica;
  ens.model_id = model.id;
  ens.policy_id = policy ? policy->id() : "none";
  ens.deterministic_init = model.init.deterministic();
  ens.paths.resize(N);
  ens.noises.resize(N);
  ens.controls.resize(N);

  auto run = [&](std::size_t count, const std::function<void(std::size_t)>& body) {
    if (opt.pool)
      opt.pool->parallel_for(count, body);
    else
      for (std::size_t i = 0; i < count; ++i) body(i);
  };

  run(N, [&](std::size_t i) {
    const std::uint64_t sid = opt.stream_ids.empty() ? i : opt.stream_ids[i];
    Engine init_eng = make_engine({seed, StreamPurpose::initial_state, opt.replica, sid, 0});
    const Vector x0 = model.initial_state(i, N, init_eng);
    if (!model.domain.in_closure(x0)) throw InputError("initial state outside the domain");
    ens.paths[i] = start_path(x0, n);
    if (opt.zero_noise)
      ens.noises[i].assign(n, Vector::Zero(model.d1));
    else
      ens.noises[i] = brownian_increments({seed, opt.purpose, opt.replica, sid, 0}, n, model.d1, dt);
    if (policy) ens.controls[i].reserve(n);
  });

  for (std::size_t k = 0; k < n; ++k) {
    const MeasureSummary mu = MeasureSummary::empirical(states_at(ens, k));
    const double t = grid.time(k);
    run(N, [&](std::size_t i) {
      auto& path = ens.paths[i];
      const Vector* control = nullptr;
      if (policy) {
        ens.controls[i].push_back(policy->evaluate(t, path.states.back(), mu, i));
        control = &ens.controls[i].back();
      }
      append_step(path, reflected_euler_step(model, t, dt, path.states.back(), mu, control, ens.noises[i][k]));
    });
  }
  return ens;
}

struct LargeNMethod {
  std::size_t n_ref = 4096;
  std::uint64_t seed = 0;
};

struct PicardMethod {
  std::size_t n_iter = 10;
  std::size_t n_inner = 1024;
  std::uint64_t seed = 0;
  double tol = 5e-3;
};

using ReferenceMethod = std::variant<LargeNMethod, PicardMethod>;

struct ReferenceFlow {
  MeasureFlow flow;
  std::string method;
  std::size_t iterations = 0;           // Picard updates after the first pass
  std::vector<double> distances;        // sup_k distance between successive iterates
  bool converged = true;
  bool contraction_failure = false;
};

inline double sup_flow_distance(const MeasureFlow& a, const MeasureFlow& b) {
  if (a.size() != b.size()) throw InputError("sup_flow_distance: flow lengths differ");
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, bl_distance(a[k], b[k]).value);
  return d;
}

/// Marginal flow of the reflected McKean-Vlasov equation, either from one
/// large particle system or by Picard iteration on frozen flows (common
/// random numbers across iterations).
inline ReferenceFlow solve_mckean_vlasov_reference(const ModelSpec& model, const TimeGrid& grid,
                                                   const ReferenceMethod& method, WorkerPool* pool = nullptr) {
  ReferenceFlow out;
  if (const auto* big = std::get_if<LargeNMethod>(&method)) {
    if (big->n_ref < 1024) throw PreconditionError("large-N reference needs N_ref >= 1024");
    SimulationOptions opt;
    opt.purpose = StreamPurpose::reference;
    opt.pool = pool;
    const Ensemble ens = simulate_particle_system(model, big->n_ref, grid, nullptr, big->seed, opt);
    out.flow = marginal_flow(ens);
    out.method = "large_N";
    return out;
  }
  const auto& pic = std::get<PicardMethod>(method);
  if (pic.n_iter < 1) throw PreconditionError("picard reference needs n_iter >= 1");
  if (pic.n_inner < 1) throw PreconditionError("picard reference needs n_inner >= 1");
  model.validate();
  check_grid(model, grid);
  out.method = "picard";

  const std::size_t n = grid.steps();
  std::vector<Vector> x0(pic.n_inner);
  std::vector<std::vector<Vector>> noise(pic.n_inner);
  for (std::size_t i = 0; i < pic.n_inner; ++i) {
    Engine eng = make_engine({pic.seed, StreamPurpose::initial_state, 0, i, 1});
    x0[i] = model.initial_state(i, pic.n_inner, eng);
    noise[i] = brownian_increments({pic.seed, StreamPurpose::picard, 0, i, 0}, n, model.d1, grid.dt());
  }
  MeasureFlow current(grid.nodes(), MeasureSummary::empirical(x0));

  auto sweep = [&](const MeasureFlow& driving) {
    std::vector<ReflectedPath> paths(pic.n_inner);
    auto body = [&](std::size_t i) { paths[i] = simulate_reflected_path(model, grid, x0[i], driving, {}, noise[i]); };
    if (pool)
      pool->parallel_for(pic.n_inner, body);
    else
      for (std::size_t i = 0; i < pic.n_inner; ++i) body(i);
    MeasureFlow next;
    next.reserve(grid.nodes());
    for (std::size_t k = 0; k < grid.nodes(); ++k) {
      std::vector<Vector> pts;
      pts.reserve(pic.n_inner);
      for (const auto& p : paths) pts.push_back(p.states[k]);
      next.push_back(MeasureSummary::empirical(std::move(pts)));
    }
    return next;
  };

  current = sweep(current);
  out.converged = false;
  int increases = 0;
  for (std::size_t m = 1; m <= pic.n_iter; ++m) {
    MeasureFlow next = sweep(current);
    const double dist = sup_flow_distance(next, current);
    if (!out.distances.empty() && dist > out.distances.back())
      ++increases;
    else
      increases = 0;
    out.distances.push_back(dist);
    current = std::move(next);
    out.iterations = m;
    if (dist < pic.tol) {
      out.converged = true;
      break;
    }
    if (increases >= 3) {
      out.contraction_failure = true;
      break;
    }
  }
  out.flow = std::move(current);
  return out;
}

}  // namespace rldp
