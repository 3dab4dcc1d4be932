#pragma once

// Runs a parsed scenario and persists its artifacts: result JSON, CSV tables
// and a manifest listing every file with its content hash.

#include "rldp/config.hpp"
#include "rldp/diagnostics.hpp"
#include "rldp/ensemble.hpp"
#include "rldp/io.hpp"
#include "rldp/ldp.hpp"
#include "rldp/measures.hpp"

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

namespace rldp {

struct RunOutput {
  json result;
  std::vector<CsvTable> tables;
  std::vector<std::string> flags;  // budget or guard conditions; nonempty means exit 3
};

// Cumulative particle-step accounting for one run.
class StepBudget {
 public:
  explicit StepBudget(double limit) : limit_(limit) {}
  bool fits(double steps) const { return used_ + steps <= limit_; }
  void charge(double steps) {
    if (!fits(steps)) throw BudgetError("particle-step budget exhausted");
    used_ += steps;
  }
  double used() const { return used_; }

 private:
  double limit_;
  double used_ = 0.0;
};

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

inline std::vector<std::string> state_columns(int d) {
  std::vector<std::string> cols;
  for (int j = 0; j < d; ++j) cols.push_back("x" + std::to_string(j + 1));
  return cols;
}

namespace detail {

inline json rate_step_json(const RateStep& s) {
  return {{"lambda", s.lambda},
          {"achieved_distance", s.achieved_distance},
          {"cost", s.cost},
          {"objective", s.objective},
          {"objective_std_error", s.objective_std_error},
          {"zero_policy_objective", s.zero_policy_objective},
          {"zero_policy_std_error", s.zero_policy_std_error},
          {"parameters", to_json(s.parameters)},
          {"evaluations", s.evaluations}};
}

inline void run_simulate(const Scenario& sc, WorkerPool& pool, StepBudget& budget, RunOutput& out) {
  const auto& s = sc.simulate;
  const int d = sc.model.d;
  auto header = std::vector<std::string>{"replica", "i", "k", "t"};
  for (const auto& c : state_columns(d)) header.push_back(c);
  header.push_back("local_time");
  CsvTable paths("paths", header);

  json reps = json::array();
  std::size_t outside = 0, offboundary = 0;
  double steps = 0.0;
  out.result["replicas"] = reps;
  for (std::size_t r = 0; r < s.replicas; ++r) {
    budget.charge(static_cast<double>(s.N) * static_cast<double>(sc.grid.steps()));
    SimulationOptions opt;
    opt.replica = r;
    opt.pool = &pool;
    opt.particle_step_budget = sc.particle_step_budget;
    const Ensemble ens = simulate_particle_system(sc.model, s.N, sc.grid, nullptr, sc.seed, opt);

    std::vector<double> holder;
    double local_time = 0.0;
    std::size_t hits = 0;
    std::string holder_mode;
    for (std::size_t i = 0; i < ens.N; ++i) {
      const auto& p = ens.paths[i];
      for (std::size_t k = 0; k < p.nodes(); ++k) {
        if (!sc.model.domain.in_closure(p.states[k])) ++outside;
        if (k > 0 && p.local_time[k] > p.local_time[k - 1] &&
            sc.model.domain.contains(p.states[k]) != Membership::boundary)
          ++offboundary;
        if (s.paths_csv) {
          std::vector<std::string> row{std::to_string(r), std::to_string(i), std::to_string(k),
                                       format_double(sc.grid.time(k))};
          for (int j = 0; j < d; ++j) row.push_back(format_double(p.states[k][j]));
          row.push_back(format_double(p.local_time[k]));
          paths.add_row(std::move(row));
        }
      }
      steps += static_cast<double>(p.nodes() - 1);
      local_time += p.local_time.back();
      for (bool h : p.boundary_hits) hits += h;
      const HolderResult hr = holder_statistic(p, sc.grid.dt(), s.holder_alpha);
      holder.push_back(hr.value);
      holder_mode = hr.mode == HolderMode::exact ? "exact" : "dyadic_upper";
    }
    const MeasureSummary terminal = empirical_measure_at_node(ens, sc.grid.steps());
    reps.push_back({{"replica", r},
                    {"terminal_mean", to_json(terminal.mean())},
                    {"terminal_variance_trace", terminal.variance_trace()},
                    {"mean_local_time", local_time / static_cast<double>(ens.N)},
                    {"boundary_hits", hits},
                    {"holder", {{"alpha", s.holder_alpha},
                                {"mode", holder_mode},
                                {"median", median_of(holder)},
                                {"max", *std::max_element(holder.begin(), holder.end())}}}});
    out.result["replicas"] = reps;
  }
  out.result["containment"] = {{"states_outside", outside},
                               {"local_time_increments_off_boundary", offboundary},
                               {"particle_steps", steps}};
  const AssumptionReport a = validate_assumptions(sc.model, s.assumption_samples, sc.seed);
  out.result["assumptions"] = {{"max_bound_observed", a.max_bound_observed},
                               {"max_lipschitz_ratio_observed", a.max_lipschitz_ratio_observed},
                               {"declared_L", sc.model.bound_L},
                               {"declared_K", sc.model.lipschitz_K},
                               {"bound_pass", a.bound_pass},
                               {"lipschitz_pass", a.lipschitz_pass},
                               {"samples", a.samples},
                               {"pairs", a.pairs},
                               {"evaluation_failures", a.evaluation_failures},
                               {"note", a.note}};
  if (s.paths_csv) out.tables.push_back(std::move(paths));
}

inline double reference_cost(const ReferenceMethod& m, const TimeGrid& grid) {
  const double n = static_cast<double>(grid.steps());
  if (const auto* big = std::get_if<LargeNMethod>(&m)) return static_cast<double>(big->n_ref) * n;
  const auto& pic = std::get<PicardMethod>(m);
  return static_cast<double>(pic.n_inner) * n * static_cast<double>(pic.n_iter + 1);
}

inline json reference_json(const ReferenceFlow& ref) {
  return {{"method", ref.method},
          {"iterations", ref.iterations},
          {"converged", ref.converged},
          {"contraction_failure", ref.contraction_failure},
          {"distances", ref.distances},
          {"terminal_mean", to_json(ref.flow.back().mean())}};
}

inline void run_chaos(const Scenario& sc, WorkerPool& pool, StepBudget& budget, RunOutput& out) {
  const auto& s = sc.chaos;
  budget.charge(reference_cost(s.reference, sc.grid));
  const ReferenceFlow ref = solve_mckean_vlasov_reference(sc.model, sc.grid, s.reference, &pool);
  out.result["reference"] = reference_json(ref);
  const MeasureSummary& target = ref.flow.back();
  std::optional<BLDictionary> dict;
  if (sc.model.d > 1) {
    const auto& dom = sc.model.domain;
    const bool box = dom.kind() == ConvexDomain::Kind::box;
    const Vector lo = box ? dom.lo() : Vector(dom.center().array() - dom.radius());
    const Vector hi = box ? dom.hi() : Vector(dom.center().array() + dom.radius());
    dict.emplace(sc.model.d, lo, hi, 256, sc.seed);
  }

  CsvTable table("distances", {"N", "replica", "distance", "method"});
  json levels = json::array();
  std::vector<double> medians;
  out.result["levels"] = levels;
  for (std::size_t N : s.N_values) {
    budget.charge(static_cast<double>(N) * static_cast<double>(s.replicas) * static_cast<double>(sc.grid.steps()));
    std::vector<BLEstimate> dist(s.replicas);
    pool.parallel_for(s.replicas, [&](std::size_t r) {
      SimulationOptions opt;
      opt.replica = r;
      opt.particle_step_budget = sc.particle_step_budget;
      const Ensemble ens = simulate_particle_system(sc.model, N, sc.grid, nullptr, sc.seed, opt);
      dist[r] = bl_distance(empirical_measure_at_node(ens, sc.grid.steps()), target, dict ? &*dict : nullptr);
    });
    std::vector<double> values;
    for (std::size_t r = 0; r < s.replicas; ++r) {
      values.push_back(dist[r].value);
      table.add_row({std::to_string(N), std::to_string(r), format_double(dist[r].value),
                     dist[r].method == BLMethod::exact_1d ? "exact_1d" : "dictionary"});
    }
    medians.push_back(median_of(values));
    levels.push_back({{"N", N}, {"median_distance", medians.back()}, {"distances", values}});
    out.result["levels"] = levels;
  }
  bool decreasing = true;
  for (std::size_t j = 1; j < medians.size(); ++j) decreasing = decreasing && medians[j] < medians[j - 1];
  out.result["strictly_decreasing"] = decreasing;
  out.tables.push_back(std::move(table));
}

inline json laplace_json(const LaplaceEstimate& e) {
  return {{"value", e.value},
          {"std_error", e.std_error},
          {"N", e.N},
          {"M", e.M},
          {"effective_sample_size", e.effective_sample_size},
          {"log_sum_exp_guard", e.guard_triggered}};
}

inline void run_laplace(const Scenario& sc, WorkerPool& pool, StepBudget& budget, RunOutput& out) {
  const auto& s = sc.laplace;
  budget.charge(static_cast<double>(s.N) * static_cast<double>(s.M) * static_cast<double>(sc.grid.steps()));
  const McConfig cfg{s.N, s.M, sc.seed, &pool, sc.particle_step_budget};
  const LaplaceEstimate e = laplace_functional_mc(sc.model, s.F, sc.grid, cfg);
  out.result["laplace"] = laplace_json(e);
  out.result["functional"] = {{"id", s.F.id}, {"f_max", s.F.f_max}};
  CsvTable table("replicas", {"replica", "functional"});
  for (std::size_t m = 0; m < e.functional_values.size(); ++m)
    table.add_row({std::to_string(m), format_double(e.functional_values[m])});
  out.tables.push_back(std::move(table));
  if (e.guard_triggered) out.flags.push_back("log_sum_exp_guard");
}

inline void run_variational(const Scenario& sc, WorkerPool& pool, StepBudget& budget, RunOutput& out) {
  const auto& s = sc.variational;
  budget.charge(static_cast<double>(s.N) * static_cast<double>(s.M) * static_cast<double>(sc.grid.steps()));
  const McConfig cfg{s.N, s.M, sc.seed, &pool, sc.particle_step_budget};
  const auto outcomes = run_replicas(sc.model, s.F, &s.policy, sc.grid, cfg);
  const VariationalEstimate v = variational_from_outcomes(outcomes);
  out.result["variational"] = {{"objective", v.objective},
                               {"cost_part", v.cost_part},
                               {"functional_part", v.functional_part},
                               {"std_error", v.std_error},
                               {"cost_std_error", v.cost_std_error},
                               {"functional_std_error", v.functional_std_error},
                               {"M", s.M},
                               {"N", s.N}};
  out.result["policy"] = {{"id", s.policy.id()}, {"parameters", to_json(s.policy.parameters())}};
  out.result["functional"] = {{"id", s.F.id}, {"f_max", s.F.f_max}};
  CsvTable table("replicas", {"replica", "cost", "functional"});
  for (std::size_t m = 0; m < outcomes.size(); ++m)
    table.add_row({std::to_string(m), format_double(outcomes[m].cost), format_double(outcomes[m].functional)});
  out.tables.push_back(std::move(table));
}

inline void run_rate(const Scenario& sc, WorkerPool& pool, StepBudget& budget, RunOutput& out) {
  const auto& s = sc.rate;
  RateTarget target;
  if (s.target == TargetKind::reference) {
    budget.charge(reference_cost(s.reference, sc.grid));
    const ReferenceFlow ref = solve_mckean_vlasov_reference(sc.model, sc.grid, s.reference, &pool);
    out.result["reference"] = reference_json(ref);
    target.flow = ref.flow;
    target.description = "reference flow (" + ref.method + ")";
  } else {
    target.flow = {MeasureSummary::empirical(s.target_points)};
    target.description = s.target == TargetKind::terminal_point ? "terminal point" : "terminal points";
  }

  // Each penalty costs at most `budget` objective evaluations; the zero
  // policy adds one more. Run the longest prefix of the schedule that fits.
  const double per_eval = static_cast<double>(s.N) * static_cast<double>(s.M) * static_cast<double>(sc.grid.steps());
  RateSettings settings = s.rate;
  const double per_lambda = per_eval * static_cast<double>(settings.optimizer.budget);
  std::size_t fits = 0;
  {
    double need = per_eval;
    for (; fits < settings.lambda_schedule.size(); ++fits) {
      if (!budget.fits(need + per_lambda)) break;
      need += per_lambda;
    }
  }
  if (fits < settings.lambda_schedule.size()) {
    out.flags.push_back("particle_step_budget");
    settings.lambda_schedule.resize(fits);
  }
  out.result["lambda_schedule_run"] = settings.lambda_schedule;
  if (fits == 0) {
    out.result["rate"] = {{"feasible", false}, {"reason", "budget admits no penalty"}};
    return;
  }
  budget.charge(per_eval + per_lambda * static_cast<double>(fits));
  const McConfig cfg{s.N, s.M, sc.seed, &pool, sc.particle_step_budget};
  const RateEstimate est = estimate_rate(sc.model, target, sc.grid, cfg, settings);

  json steps = json::array();
  CsvTable trace("trace", {"lambda", "achieved_distance", "cost", "objective", "objective_std_error",
                           "zero_policy_objective", "evaluations"});
  for (const auto& st : est.steps) {
    steps.push_back(rate_step_json(st));
    trace.add_row({format_double(st.lambda), format_double(st.achieved_distance), format_double(st.cost),
                   format_double(st.objective), format_double(st.objective_std_error),
                   format_double(st.zero_policy_objective), std::to_string(st.evaluations)});
  }
  json rate = {{"target", est.target},
               {"distance", to_string(est.distance)},
               {"radius", est.radius},
               {"feasible", est.feasible},
               {"family", to_string(settings.family.family)},
               {"steps", steps}};
  if (est.feasible) {
    rate["penalty_weight"] = est.penalty_weight;
    rate["achieved_distance"] = est.achieved_distance;
    rate["cost"] = est.cost;
    rate["upper_bound"] = est.upper_bound;
    rate["statistical_tolerance"] = est.statistical_tolerance;
  } else {
    rate["upper_bound"] = "inf";
    rate["reason"] = "no penalty reached the radius";
  }
  out.result["rate"] = rate;
  out.tables.push_back(std::move(trace));
}

inline void run_submartingale(const Scenario& sc, WorkerPool& pool, StepBudget& budget, RunOutput& out) {
  const auto& s = sc.submartingale;
  const auto registry = test_functions::registry(sc.model.domain, sc.model.d1);
  const auto it = std::find_if(registry.begin(), registry.end(), [&](const TestFunction& f) { return f.id == s.function; });
  const TestFunction& f = *it;

  double c_bias = s.c_bias;
  if (s.bias_mode == BiasMode::calibrate) {
    std::vector<TestFunction> cases;
    for (const auto& g : registry)
      if (boundary_condition_check(g, sc.model.domain, s.boundary_samples, sc.seed, sc.model.horizon).pass)
        cases.push_back(g);
    // Coarse levels n/4 and n/2 plus the run grid itself.
    budget.charge(1.75 * static_cast<double>(s.calibration_N) * static_cast<double>(s.calibration_replicas) *
                  static_cast<double>(sc.grid.steps()));
    const BiasCalibration cal = calibrate_bias(sc.model, cases, sc.grid.steps(), s.calibration_N,
                                               s.calibration_replicas, splitmix64_mix(sc.seed ^ 0xCA1B));
    c_bias = cal.c_bias;
    json slopes = json::object();
    for (std::size_t c = 0; c < cases.size(); ++c) slopes[cases[c].id] = cal.slopes[c];
    out.result["calibration"] = {{"c_bias", cal.c_bias}, {"step_sizes", cal.step_sizes}, {"slopes", slopes}};
  }

  budget.charge(static_cast<double>(s.N) * static_cast<double>(s.replicas) * static_cast<double>(sc.grid.steps()));
  std::vector<Ensemble> ensembles(s.replicas);
  pool.parallel_for(s.replicas, [&](std::size_t r) {
    SimulationOptions opt;
    opt.replica = r;
    opt.particle_step_budget = sc.particle_step_budget;
    ensembles[r] = simulate_particle_system(sc.model, s.N, sc.grid, nullptr, sc.seed, opt);
  });
  SubmartingaleOptions opt;
  opt.confidence = s.confidence;
  opt.c_bias = c_bias;
  opt.skip_boundary_check = s.skip_boundary_check;
  opt.boundary_samples = s.boundary_samples;
  opt.seed = sc.seed;
  const SubmartingaleReport rep = submartingale_test(sc.model, ensembles, nullptr, f, s.time_pairs, opt);

  json entries = json::array();
  CsvTable table("entries", {"t0", "t1", "weight", "statistic", "std_error", "threshold", "pass"});
  for (const auto& e : rep.entries) {
    entries.push_back({{"t0", e.t0},
                       {"t1", e.t1},
                       {"weight", e.weight},
                       {"statistic", e.statistic},
                       {"std_error", e.std_error},
                       {"bound", e.statistic + e.threshold},
                       {"threshold", e.threshold},
                       {"pass", e.pass}});
    table.add_row({format_double(e.t0), format_double(e.t1), e.weight, format_double(e.statistic),
                   format_double(e.std_error), format_double(e.threshold), e.pass ? "true" : "false"});
  }
  out.result["submartingale"] = {{"function", rep.function_id},
                                 {"boundary_condition_holds", rep.boundary_ok},
                                 {"confidence", rep.confidence},
                                 {"z", rep.z},
                                 {"c_bias", rep.c_bias},
                                 {"paths", rep.n_paths},
                                 {"pass", rep.pass},
                                 {"entries", entries}};
  out.tables.push_back(std::move(table));
}

}  // namespace detail

/// Executes the scenario. Budget exhaustion yields the partial result with a
/// flag; any other failure propagates.
inline RunOutput run_scenario(const Scenario& sc, std::size_t workers) {
  RunOutput out;
  out.result = json::object();
  out.result["kind"] = sc.kind;
  out.result["seed"] = sc.seed;
  out.result["config_hash"] = content_hash(canonical_json(sc.resolved));
  out.result["model"] = {{"id", sc.model.id}, {"domain", sc.model.domain.describe()}};
  out.result["grid"] = {{"horizon", sc.grid.horizon()}, {"n_steps", sc.grid.steps()}};
  WorkerPool pool(workers);
  StepBudget budget(sc.particle_step_budget);
  try {
    if (sc.kind == "simulate") detail::run_simulate(sc, pool, budget, out);
    if (sc.kind == "chaos") detail::run_chaos(sc, pool, budget, out);
    if (sc.kind == "laplace") detail::run_laplace(sc, pool, budget, out);
    if (sc.kind == "variational") detail::run_variational(sc, pool, budget, out);
    if (sc.kind == "rate") detail::run_rate(sc, pool, budget, out);
    if (sc.kind == "submartingale") detail::run_submartingale(sc, pool, budget, out);
  } catch (const BudgetError& e) {
    out.flags.push_back("particle_step_budget");
    out.result["partial"] = true;
    out.result["budget_message"] = e.what();
  }
  out.result["particle_steps_charged"] = budget.used();
  out.result["flags"] = out.flags;
  return out;
}

/// Writes result.json, one CSV per table and manifest.json into `dir`.
/// Returns the manifest.
inline json write_artifacts(const std::filesystem::path& dir, const Scenario& sc, const RunOutput& out,
                            std::size_t workers) {
  std::filesystem::create_directories(dir);
  json files = json::array();
  auto emit = [&](const std::string& name, const std::string& role, const std::string& text) {
    write_text_file(dir / name, text);
    files.push_back({{"path", name}, {"role", role}, {"hash", content_hash(text)}, {"bytes", text.size()}});
  };
  const std::string result_text = canonical_json(out.result);
  emit("result.json", "result", result_text);
  for (const auto& t : out.tables) emit(t.name() + ".csv", "table", t.text());

  json manifest = {{"tool", "rldp"},
                   {"schema_version", kSchemaVersion},
                   {"kind", sc.kind},
                   {"seed", sc.seed},
                   {"config", sc.resolved},
                   {"config_hash", content_hash(canonical_json(sc.resolved))},
                   {"result_hash", content_hash(result_text)},
                   {"flags", out.flags},
                   {"workers", workers},
                   {"files", files}};
  write_text_file(dir / "manifest.json", canonical_json(manifest));
  return manifest;
}

}  // namespace rldp
