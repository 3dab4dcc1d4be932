// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include "fd_oracle.hpp"
#include "lp_oracle.hpp"
#include "rldp/rldp.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace rldp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;  // 0: none
  std::function<Outcome()> run;
};

const ConvexDomain kUnit = ConvexDomain::cube(1, 0.0, 1.0);

Vector v1(double a) { return Vector::Constant(1, a); }

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(4);
  s << x;
  return s.str();
}

std::string join(const std::vector<double>& xs) {
  std::string out;
  for (double x : xs) out += (out.empty() ? "" : ", ") + fmt(x);
  return "[" + out + "]";
}

Outcome containment() {
  struct Case {
    ModelSpec model;
    std::size_t N, n;
    bool controlled;
  };
  std::vector<Case> cases{
      {models::zero_drift(kUnit), 200, 200, false},
      {models::mean_attraction(ConvexDomain::cube(2, 0.0, 1.0), 2.0, 1.0), 200, 200, false},
      {models::distribution_diffusion(ConvexDomain::ball(Eigen::Vector2d(0, 0), 1.0), 0.8, 1.0, 2.0, 1.0), 200, 200,
       false},
      {models::constant_drift(kUnit, v1(5.0), 0.5), 200, 200, false},
      {models::linear_drift(ConvexDomain::ball(Eigen::Vector3d(0, 0, 0), 1.0), 1.0, 1.5), 100, 200, true},
  };
  double particle_steps = 0.0;
  std::size_t exterior = 0, off_boundary = 0, hits = 0;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& cs = cases[c];
    const auto pol = ControlPolicy::constant(Vector::Constant(cs.model.d1, 3.0));
    const auto ens =
        simulate_particle_system(cs.model, cs.N, TimeGrid(1.0, cs.n), cs.controlled ? &pol : nullptr, 100 + c);
    particle_steps += static_cast<double>(cs.N * cs.n);
    for (const auto& p : ens.paths) {
      for (const auto& x : p.states)
        if (cs.model.domain.contains(x) == Membership::exterior) ++exterior;
      for (std::size_t k = 0; k < p.boundary_hits.size(); ++k) {
        if (p.boundary_hits[k]) ++hits;
        if (!p.boundary_hits[k] && p.local_time[k + 1] != p.local_time[k]) ++off_boundary;
      }
    }
  }
  return {exterior == 0 && off_boundary == 0 && particle_steps >= 1e5,
          "particle-steps " + fmt(particle_steps) + ", exterior states " + std::to_string(exterior) +
              ", off-boundary local-time increments " + std::to_string(off_boundary) + ", boundary hits " +
              std::to_string(hits)};
}

Outcome skorokhod_oracle() {
  const auto m = models::zero_drift(kUnit);
  const int paths = 32;
  const std::size_t fine_steps = 4096;
  std::vector<std::vector<double>> gaps(3);
  for (int i = 0; i < paths; ++i) {
    const auto pid = static_cast<std::uint64_t>(i);
    Engine init = make_engine({2024, StreamPurpose::initial_state, 0, pid, 0});
    const Vector x0 = m.initial_state(0, 1, init);
    std::vector<std::vector<Vector>> levels{brownian_increments({2024, StreamPurpose::brownian, 0, pid, 0}, 64, 1,
                                                                1.0 / 64)};
    for (std::uint64_t l = 1; l <= 6; ++l)
      levels.push_back(refine_increments(levels.back(), 1.0 / static_cast<double>(64u << (l - 1)),
                                         {2024, StreamPurpose::bridge, 0, pid, l}));
    std::vector<double> w{x0[0]};
    for (const auto& inc : levels.back()) w.push_back(w.back() + inc[0]);
    const auto oracle = skorokhod_1d(w, 0.0, 1.0);
    for (int l = 0; l < 3; ++l) {
      const std::size_t n = 64u << l;
      const TimeGrid g(1.0, n);
      const std::vector<MeasureSummary> flow{MeasureSummary::dirac(x0)};
      const auto p = simulate_reflected_path(m, g, x0, flow, {}, levels[l]);
      const std::size_t stride = fine_steps / n;
      double gap = 0.0;
      for (std::size_t k = 0; k < g.nodes(); ++k)
        gap = std::max(gap, std::abs(p.states[k][0] - oracle.path[k * stride]));
      gaps[l].push_back(gap);
    }
  }
  std::vector<double> med;
  for (const auto& g : gaps) med.push_back(median(g));
  const bool monotone = med[0] > med[1] && med[1] > med[2];
  return {monotone && med[2] < 0.05, "median sup gap at dt = 2^-6, 2^-7, 2^-8: " + join(med) + " (limit 0.05)"};
}

Outcome bl_exactness() {
  Engine eng = make_engine({303, StreamPurpose::sampling, 0, 0, 0});
  double worst_two_point = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = uniform(eng, -2.0, 2.0), y = uniform(eng, -2.0, 2.0);
    const double v = bl_distance(MeasureSummary::dirac(v1(x)), MeasureSummary::dirac(v1(y))).value;
    worst_two_point = std::max(worst_two_point, std::abs(v - std::min(2.0, std::abs(x - y))));
  }
  double worst_lp = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto p = oracle::random_pair(eng, -2.0, 2.0);
    const double exact = bl_distance(oracle::atomic(p.a, p.wa), oracle::atomic(p.b, p.wb)).value;
    worst_lp = std::max(worst_lp, std::abs(exact - oracle::bl_lp_oracle(p.a, p.wa, p.b, p.wb)));
  }
  return {worst_two_point <= 1e-10 && worst_lp <= 1e-8,
          "two-point max error " + fmt(worst_two_point) + " (tol 1e-10), LP max error " + fmt(worst_lp) +
              " (tol 1e-8)"};
}

Outcome chaos() {
  const TimeGrid g(1.0, 64);
  const std::vector<std::size_t> Ns{64, 256, 1024};
  bool ok = true;
  std::string detail;
  const std::vector<ModelSpec> ms{models::zero_drift(kUnit), models::mean_attraction(kUnit, 1.0, 1.0)};
  for (std::size_t mi = 0; mi < ms.size(); ++mi) {
    const auto& m = ms[mi];
    const auto ref = solve_mckean_vlasov_reference(m, g, LargeNMethod{4096, 4000 + mi});
    std::vector<double> med;
    for (std::size_t N : Ns) {
      std::vector<double> d;
      for (std::uint64_t r = 0; r < 16; ++r) {
        SimulationOptions opt;
        opt.replica = r;
        const auto ens = simulate_particle_system(m, N, g, nullptr, 500 + mi, opt);
        d.push_back(bl_distance(empirical_measure_at_node(ens, g.steps()), ref.flow.back()).value);
      }
      med.push_back(median(d));
    }
    const bool dec = med[0] > med[1] && med[1] > med[2];
    ok = ok && dec;
    detail += (detail.empty() ? "" : "; ") + m.id + " medians over N = 64, 256, 1024: " + join(med);
  }
  return {ok, detail};
}

Outcome constant_case() {
  bool ok = true;
  std::string detail;
  for (const auto& m : {models::zero_drift(kUnit), models::mean_attraction(kUnit, 1.0, 1.0)}) {
    for (double c : {0.3, -1.25}) {
      const auto F = functionals::constant(c);
      const McConfig cfg{16, 32, 5};
      const auto lap = laplace_functional_mc(m, F, TimeGrid(1.0, 16), cfg);
      const auto var = variational_objective(m, F, ControlPolicy::zero(1), TimeGrid(1.0, 16), cfg);
      ok = ok && lap.value == c && lap.std_error == 0.0 && var.objective == c;
      detail += (detail.empty() ? "" : "; ") + m.id + " c=" + fmt(c) + ": laplace " + format_double(lap.value) +
                " se " + fmt(lap.std_error) + ", variational " + format_double(var.objective);
    }
  }
  return {ok, detail};
}

Outcome representation_inequality() {
  const TimeGrid g(1.0, 16);
  const McConfig cfg{32, 256, 606};
  const auto F = functionals::terminal_mean_clip();
  const std::vector<ModelSpec> ms{models::zero_drift(kUnit), models::mean_attraction(kUnit, 1.0, 1.0)};
  std::vector<LaplaceEstimate> lap;
  for (const auto& m : ms) lap.push_back(laplace_functional_mc(m, F, g, cfg));
  Engine eng = make_engine({606, StreamPurpose::optimizer, 1, 0, 0});
  int held = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (int p = 0; p < 20; ++p) {
    const std::size_t mi = static_cast<std::size_t>(p % 2);
    PolicyFamilySpec fam;
    fam.family = p % 3 == 0 ? ControlFamily::constant
                            : (p % 3 == 1 ? ControlFamily::piecewise_constant : ControlFamily::feedback);
    fam.cells = 4;
    fam.degree = 1;
    fam.theta_bound = fam.output_bound = 3.0;
    Vector theta(static_cast<Eigen::Index>(fam.parameter_count()));
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = uniform(eng, -1.5, 1.5);
    const auto pol = ControlPolicy::from_parameters(fam, theta);
    const auto var = variational_objective(ms[mi], F, pol, g, cfg);
    const double margin = var.objective + 3.0 * std::hypot(lap[mi].std_error, var.std_error) - lap[mi].value;
    worst = std::min(worst, margin);
    if (margin >= 0.0) ++held;
  }
  return {held >= 19, std::to_string(held) + "/20 policies satisfy laplace <= objective + 3 SE (need 19), smallest "
                                              "margin " + fmt(worst)};
}

Outcome lln_rate() {
  const auto m = models::mean_attraction(kUnit, 1.0, 1.0);
  const TimeGrid g(1.0, 32);
  const auto ref = solve_mckean_vlasov_reference(m, g, LargeNMethod{4096, 707});
  RateSettings rs;
  rs.lambda_schedule = {1.0, 2.0, 4.0, 8.0};
  rs.distance = DistanceKind::bl_terminal;
  rs.radius = 0.1;
  rs.family.family = ControlFamily::constant;
  rs.family.theta_bound = rs.family.output_bound = 3.0;
  rs.optimizer = {30, 0.5, 2};
  const auto est = estimate_rate(m, {ref.flow, "reference flow"}, g, {32, 32, 708}, rs);
  const bool ok = est.feasible && est.upper_bound >= 0.0 && est.upper_bound <= 2.0 * est.statistical_tolerance;
  return {ok, "feasible " + std::string(est.feasible ? "yes" : "no") + ", lambda " + fmt(est.penalty_weight) +
                  ", I_hat " + fmt(est.upper_bound) + ", statistical tolerance " + fmt(est.statistical_tolerance) +
                  " (need I_hat <= " + fmt(2.0 * est.statistical_tolerance) + ")"};
}

Outcome rate_oracle() {
  auto m = models::zero_drift(kUnit);
  m.init = InitialCondition::fixed({v1(0.5)});
  const TimeGrid g(1.0, 32);
  const McConfig cfg{64, 16, 808};
  const RateTarget target{{MeasureSummary::dirac(v1(0.75))}, "mean 0.75"};
  RateSettings rs;
  rs.lambda_schedule = {5.0, 10.0, 20.0, 40.0, 80.0};
  rs.distance = DistanceKind::mean_terminal;
  rs.radius = 0.05;
  rs.family.family = ControlFamily::constant;
  rs.family.theta_bound = rs.family.output_bound = 3.0;
  rs.optimizer = {40, 0.5, 4};
  const auto est = estimate_rate(m, target, g, cfg, rs);

  // Grid oracle: same penalties and selection rule, argmin over v in [-3, 3] at 0.05.
  const Functional unit = penalty_functional(target, rs.distance, 1.0, g.dt(), 1.0, 1.0);
  std::vector<double> cost, dist;
  for (int j = -60; j <= 60; ++j) {
    const auto v = variational_objective(m, unit, ControlPolicy::constant(v1(0.05 * j)), g, cfg);
    cost.push_back(v.cost_part);
    dist.push_back(v.functional_part);
  }
  double oracle = std::numeric_limits<double>::infinity();
  for (double lambda : rs.lambda_schedule) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cost.size(); ++j)
      if (cost[j] + lambda * dist[j] < cost[best] + lambda * dist[best]) best = j;
    if (dist[best] <= rs.radius) oracle = cost[best];
  }
  const double rel = std::abs(est.upper_bound - oracle) / oracle;
  return {est.feasible && std::isfinite(oracle) && rel <= 0.25,
          "optimizer I_hat " + fmt(est.upper_bound) + ", grid oracle " + fmt(oracle) + ", relative difference " +
              fmt(rel) + " (tol 0.25)"};
}

Outcome submartingale() {
  const auto m = models::zero_drift(kUnit);
  const TimeGrid g(1.0, 1000);
  const std::vector<std::pair<double, double>> pairs{{0.25, 0.5}, {0.5, 1.0}};

  std::vector<TestFunction> cases;
  for (const auto& f : test_functions::registry(m.domain, m.d1))
    if (boundary_condition_check(f, m.domain, 1000, 0).pass) cases.push_back(f);
  const auto cal = calibrate_bias(m, cases, 1000, 100, 20, 9090);
  std::vector<Ensemble> ens;
  for (std::uint64_t r = 0; r < 100; ++r) {
    SimulationOptions opt;
    opt.replica = r;
    ens.push_back(simulate_particle_system(m, 100, g, nullptr, 909, opt));
  }
  SubmartingaleOptions opt;
  opt.c_bias = cal.c_bias;
  const auto rep = submartingale_test(m, ens, nullptr, test_functions::signed_square(1, 1, -1.0), pairs, opt);

  // Counterexample: f = x1 fails the boundary condition; drift presses mass onto x1 = 1.
  const auto push = models::constant_drift(kUnit, v1(2.0), 1.0);
  const TimeGrid gp(1.0, 200);
  std::vector<TestFunction> push_cases;
  for (const auto& f : test_functions::registry(push.domain, push.d1))
    if (boundary_condition_check(f, push.domain, 1000, 0).pass) push_cases.push_back(f);
  SubmartingaleOptions bad;
  bad.skip_boundary_check = true;
  bad.c_bias = calibrate_bias(push, push_cases, 200, 100, 10, 9191).c_bias;
  int detected = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::vector<Ensemble> e{simulate_particle_system(push, 200, gp, nullptr, 9200 + s)};
    const auto r = submartingale_test(push, e, nullptr, test_functions::signed_linear(1, 1, 1.0), pairs, bad);
    if (!r.pass) ++detected;
  }
  return {rep.pass && detected >= 18,
          "-x1^2: " + std::string(rep.pass ? "pass" : "fail") + " (paths " + std::to_string(rep.n_paths) +
              ", c_bias " + fmt(cal.c_bias) + ", min margin " + fmt(rep.min_margin()) +
              "); counterexample detected in " + std::to_string(detected) + "/20 runs (need 18)"};
}

Outcome generator() {
  double worst = 0.0;
  std::string worst_id;
  std::size_t functions = 0;
  for (const auto& dom :
       {kUnit, ConvexDomain::cube(2, 0.0, 1.0), ConvexDomain::ball(Eigen::Vector2d(0.0, 0.0), 1.0)}) {
    const int d = dom.dimension();
    const auto model = models::distribution_diffusion(dom, 0.6, 0.8, 2.0, 1.3);
    for (const auto& f : test_functions::registry(dom, d)) {
      ++functions;
      Engine eng = make_engine({1010, StreamPurpose::sampling, 0, functions, 0});
      NormalSampler normal;
      for (int s = 0; s < 1000; ++s) {
        const double t = uniform(eng, 0.0, 1.0);
        const Vector x = sample_uniform(dom, eng);
        Vector y(d), z(d);
        for (int j = 0; j < d; ++j) y[j] = normal(eng), z[j] = normal(eng);
        std::vector<Vector> pts;
        for (int a = 0; a < 5; ++a) pts.push_back(sample_uniform(dom, eng));
        const auto nu = MeasureSummary::empirical(pts);
        const double e = fd::relative_error(fd::generator(model, f, t, x, y, z, nu),
                                            generator_apply(model, f, t, x, y, z, nu));
        if (e > worst) {
          worst = e;
          worst_id = f.id + " d=" + std::to_string(d);
        }
      }
    }
  }
  return {worst < 1e-4, std::to_string(functions) + " function/domain pairs x 1000 points, max relative error " +
                            fmt(worst) + " at " + worst_id + " (tol 1e-4)"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RLDP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "rldp_acceptance_cli";
  fs::remove_all(root);
  std::size_t kinds = 0, identical = 0;
  std::string bad;
  for (const auto& kind : run_kinds()) {
    fs::path cfg;
    for (const auto& e : fs::directory_iterator(RLDP_CONFIG_DIR))
      if (e.path().filename().string().rfind(kind + "_", 0) == 0) cfg = e.path();
    if (cfg.empty()) {
      bad += " " + kind + "(no config)";
      continue;
    }
    ++kinds;
    std::vector<std::string> results;
    bool ran = true;
    for (int w : {1, 1, 2, 4}) {
      const fs::path out = root / (kind + "_" + std::to_string(results.size()));
      const int code = run_cli(kind + " --config " + cfg.string() + " --workers " + std::to_string(w) + " --out " +
                               out.string());
      if (code != 0) {
        ran = false;
        break;
      }
      results.push_back(read_text_file(out / "result.json"));
    }
    if (ran && std::all_of(results.begin(), results.end(), [&](const auto& r) { return r == results.front(); }))
      ++identical;
    else
      bad += " " + kind;
  }
  fs::remove_all(root);
  return {kinds == run_kinds().size() && identical == kinds,
          std::to_string(identical) + "/" + std::to_string(run_kinds().size()) +
              " run kinds bit-identical across repeats and workers 1, 2, 4" + (bad.empty() ? "" : "; differing:" + bad)};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::stoi(argv[i]));
  const std::vector<Criterion> criteria{
      {1, "containment and local-time support", 30, containment},
      {2, "1D Skorokhod oracle", 60, skorokhod_oracle},
      {3, "two-point BL exactness and LP oracle", 0, bl_exactness},
      {4, "propagation of chaos", 300, chaos},
      {5, "variational representation, constant case", 0, constant_case},
      {6, "representation inequality at fixed N", 600, representation_inequality},
      {7, "rate at the LLN limit", 300, lln_rate},
      {8, "rate oracle agreement", 0, rate_oracle},
      {9, "submartingale test", 300, submartingale},
      {10, "generator correctness", 0, generator},
      {11, "determinism across worker counts", 0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0 && secs > c.time_limit_s) {
      o.pass = false;
      o.detail += "; runtime over " + fmt(c.time_limit_s) + " s";
    }
    if (!o.pass) ++failed;
    std::printf("[%s] criterion %2d: %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  const std::size_t ran = only.empty() ? criteria.size() : only.size();
  std::printf("%d/%zu criteria passed\n", static_cast<int>(ran) - failed, ran);
  return failed == 0 ? 0 : 1;
}
