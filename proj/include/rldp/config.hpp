#pragma once

// JSON scenario configuration. Parsing resolves every default into an output
// document, so the resolved config re-parses to itself.

#include "rldp/controls.hpp"
#include "rldp/core.hpp"
#include "rldp/diagnostics.hpp"
#include "rldp/ensemble.hpp"
#include "rldp/geometry.hpp"
#include "rldp/grid.hpp"
#include "rldp/ldp.hpp"
#include "rldp/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace rldp {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct ConfigError : InputError {
  using InputError::InputError;
};

// Reads one JSON object, copying every consumed or defaulted key into `out`.
// finish() rejects keys that were never read.
class ConfigReader {
 public:
  ConfigReader(const json& in, json& out, std::string path) : in_(in), out_(out), path_(std::move(path)) {
    if (!in_.is_object()) fail("", "expected an object");
    if (!out_.is_object()) out_ = json::object();
  }

  bool has(const std::string& key) const { return in_.contains(key); }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(where(key) + ": " + msg);
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  double number(const std::string& key, std::optional<double> def = std::nullopt) {
    const json* v = fetch(key, def.has_value());
    const double x = v ? as_number(*v, key) : *def;
    out_[key] = x;
    return x;
  }

  double positive(const std::string& key, std::optional<double> def = std::nullopt) {
    const double x = number(key, def);
    if (!(x > 0.0)) fail(key, "must be positive");
    return x;
  }

  std::uint64_t unsigned_int(const std::string& key, std::optional<std::uint64_t> def = std::nullopt) {
    const json* v = fetch(key, def.has_value());
    std::uint64_t x = 0;
    if (!v) {
      x = *def;
    } else if (v->is_number_unsigned()) {
      x = v->get<std::uint64_t>();
    } else if (v->is_number_integer() && v->get<std::int64_t>() >= 0) {
      x = static_cast<std::uint64_t>(v->get<std::int64_t>());
    } else {
      fail(key, "expected a nonnegative integer");
    }
    out_[key] = x;
    return x;
  }

  std::size_t count(const std::string& key, std::optional<std::size_t> def = std::nullopt) {
    const auto x = unsigned_int(key, def);
    if (x == 0) fail(key, "must be at least 1");
    return static_cast<std::size_t>(x);
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = fetch(key, true);
    bool x = def;
    if (v) {
      if (!v->is_boolean()) fail(key, "expected a boolean");
      x = v->get<bool>();
    }
    out_[key] = x;
    return x;
  }

  std::string string(const std::string& key, std::optional<std::string> def = std::nullopt) {
    const json* v = fetch(key, def.has_value());
    std::string x;
    if (!v) {
      x = *def;
    } else {
      if (!v->is_string()) fail(key, "expected a string");
      x = v->get<std::string>();
    }
    out_[key] = x;
    return x;
  }

  std::string choice(const std::string& key, const std::vector<std::string>& allowed,
                     std::optional<std::string> def = std::nullopt) {
    const std::string x = string(key, std::move(def));
    if (std::find(allowed.begin(), allowed.end(), x) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      fail(key, "unknown value '" + x + "' (expected one of: " + list + ")");
    }
    return x;
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> def = std::nullopt) {
    const json* v = fetch(key, def.has_value());
    std::vector<double> xs;
    if (!v) {
      xs = *def;
    } else {
      if (!v->is_array()) fail(key, "expected an array of numbers");
      for (const auto& e : *v) xs.push_back(as_number(e, key));
    }
    out_[key] = xs;
    return xs;
  }

  Vector vector(const std::string& key, std::optional<Vector> def = std::nullopt) {
    std::optional<std::vector<double>> d;
    if (def) d = std::vector<double>(def->data(), def->data() + def->size());
    const auto xs = numbers(key, d);
    if (xs.empty()) fail(key, "must not be empty");
    return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  }

  std::vector<Vector> points(const std::string& key) {
    const json* v = fetch(key, false);
    if (!v->is_array() || v->empty()) fail(key, "expected a nonempty array of points");
    std::vector<Vector> pts;
    json copy = json::array();
    for (const auto& p : *v) {
      if (!p.is_array() || p.empty()) fail(key, "each point must be a nonempty array");
      Vector x(static_cast<Eigen::Index>(p.size()));
      for (std::size_t j = 0; j < p.size(); ++j) x[static_cast<Eigen::Index>(j)] = as_number(p[j], key);
      copy.push_back(std::vector<double>(x.data(), x.data() + x.size()));
      pts.push_back(std::move(x));
    }
    out_[key] = copy;
    return pts;
  }

  /// Nested object; absent means {} so its defaults get resolved.
  ConfigReader child(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    const json& sub = in_.contains(key) ? in_.at(key) : empty;
    if (!sub.is_object()) fail(key, "expected an object");
    out_[key] = json::object();
    return ConfigReader(sub, out_[key], where(key));
  }

  /// Writes a resolved default that has no typed accessor.
  void record(const std::string& key, json value) {
    used_.insert(key);
    out_[key] = std::move(value);
  }

  void finish() const {
    for (const auto& [k, v] : in_.items())
      if (!used_.count(k)) fail(k, "unknown key");
  }

 private:
  const json* fetch(const std::string& key, bool optional) {
    used_.insert(key);
    if (!in_.contains(key)) {
      if (!optional) fail(key, "missing required key");
      return nullptr;
    }
    return &in_.at(key);
  }

  double as_number(const json& v, const std::string& key) const {
    if (!v.is_number()) fail(key, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(key, "must be finite");
    return x;
  }

  const json& in_;
  json& out_;
  std::string path_;
  std::set<std::string> used_;
};

inline ConvexDomain parse_domain(ConfigReader r) {
  const auto kind = r.choice("kind", {"box", "ball"}, std::string("box"));
  auto build = [&] {
    if (kind == "box") {
      const Vector lo = r.vector("lo", Vector::Zero(1));
      const Vector hi = r.vector("hi", Vector::Ones(1));
      return ConvexDomain::box(lo, hi);
    }
    const Vector c = r.vector("center", Vector::Zero(1));
    const double rad = r.positive("radius", 1.0);
    return ConvexDomain::ball(c, rad);
  };
  try {
    ConvexDomain dom = build();
    r.finish();
    return dom;
  } catch (const ConfigError&) {
    throw;
  } catch (const InputError& e) {
    r.fail("", e.what());
  }
}

inline InitialCondition parse_initial_condition(ConfigReader r, const ConvexDomain& dom) {
  const auto kind = r.choice("kind", {"uniform", "point", "points"}, std::string("uniform"));
  InitialCondition init;
  if (kind == "uniform") {
    init = models::uniform_init(dom);
  } else if (kind == "point") {
    init = InitialCondition::fixed({r.vector("x")}, "point");
  } else {
    init = InitialCondition::fixed(r.points("points"), "points");
  }
  r.finish();
  return init;
}

using ModelFactory = std::function<ModelSpec(ConfigReader&, const ConvexDomain&, double horizon)>;

/// Model constructors by name. Custom coefficients register here.
inline std::map<std::string, ModelFactory>& model_registry() {
  static std::map<std::string, ModelFactory> reg{
      {"zero_drift",
       [](ConfigReader& r, const ConvexDomain& dom, double T) {
         return models::zero_drift(dom, r.number("sigma", 1.0), T);
       }},
      {"mean_attraction",
       [](ConfigReader& r, const ConvexDomain& dom, double T) {
         const double theta = r.number("theta", 1.0);
         return models::mean_attraction(dom, theta, r.number("sigma", 1.0), T);
       }},
      {"distribution_diffusion",
       [](ConfigReader& r, const ConvexDomain& dom, double T) {
         const double s = r.number("sigma", 0.5);
         const double alpha = r.number("alpha", 1.0);
         const double clip = r.positive("clip", 2.0);
         return models::distribution_diffusion(dom, s, alpha, clip, r.number("theta", 0.0), T);
       }},
      {"constant_drift",
       [](ConfigReader& r, const ConvexDomain& dom, double T) {
         const Vector c = r.vector("drift", Vector::Zero(dom.dimension()));
         if (c.size() != dom.dimension()) r.fail("drift", "dimension differs from the domain");
         return models::constant_drift(dom, c, r.number("sigma", 1.0), T);
       }},
      {"linear_drift",
       [](ConfigReader& r, const ConvexDomain& dom, double T) {
         const double kappa = r.number("kappa", 1.0);
         return models::linear_drift(dom, kappa, r.number("sigma", 1.0), T);
       }},
  };
  return reg;
}

inline void register_model(const std::string& name, ModelFactory f) { model_registry()[name] = std::move(f); }

inline ModelSpec parse_model(ConfigReader r, double horizon) {
  std::vector<std::string> names;
  for (const auto& [k, v] : model_registry()) names.push_back(k);
  const auto name = r.choice("name", names);
  const ConvexDomain dom = parse_domain(r.child("domain"));
  ModelSpec m = model_registry().at(name)(r, dom, horizon);
  m.init = parse_initial_condition(r.child("init"), dom);
  m.strict = r.boolean("strict", false);
  r.finish();
  try {
    m.validate();
  } catch (const InputError& e) {
    r.fail("", e.what());
  }
  return m;
}

inline TimeGrid parse_grid(ConfigReader r) {
  const double T = r.positive("horizon", 1.0);
  const std::size_t n = r.count("n_steps", 64);
  r.finish();
  return TimeGrid(T, n);
}

using FunctionalFactory = std::function<Functional(ConfigReader&, const ModelSpec&)>;

inline std::map<std::string, FunctionalFactory>& functional_registry() {
  static std::map<std::string, FunctionalFactory> reg{
      {"constant", [](ConfigReader& r, const ModelSpec&) { return functionals::constant(r.number("value", 0.0)); }},
      {"terminal_mean_clip",
       [](ConfigReader& r, const ModelSpec& m) {
         const auto axis = r.unsigned_int("axis", 0);
         if (axis >= static_cast<std::uint64_t>(m.d)) r.fail("axis", "out of range");
         const double lo = r.number("lo", 0.0);
         const double hi = r.number("hi", 1.0);
         if (!(lo <= hi)) r.fail("hi", "must be >= lo");
         return functionals::terminal_mean_clip(static_cast<int>(axis), lo, hi);
       }},
      {"terminal_mean_linear",
       [](ConfigReader& r, const ModelSpec& m) {
         const auto axis = r.unsigned_int("axis", 0);
         if (axis >= static_cast<std::uint64_t>(m.d)) r.fail("axis", "out of range");
         const double slope = r.number("slope", 1.0);
         return functionals::terminal_mean_linear(slope, r.number("offset", 0.0), m.domain.bounding_radius(),
                                                  static_cast<int>(axis));
       }},
  };
  return reg;
}

inline void register_functional(const std::string& name, FunctionalFactory f) {
  functional_registry()[name] = std::move(f);
}

inline Functional parse_functional(ConfigReader r, const ModelSpec& model) {
  std::vector<std::string> names;
  for (const auto& [k, v] : functional_registry()) names.push_back(k);
  const auto id = r.choice("id", names, std::string("terminal_mean_clip"));
  Functional F = functional_registry().at(id)(r, model);
  r.finish();
  return F;
}

inline ControlFamily parse_family_name(ConfigReader& r, const std::string& key, const std::string& def) {
  const auto f = r.choice(key, {"zero", "constant", "piecewise_constant", "feedback"}, def);
  if (f == "zero") return ControlFamily::zero;
  if (f == "constant") return ControlFamily::constant;
  if (f == "piecewise_constant") return ControlFamily::piecewise_constant;
  return ControlFamily::feedback;
}

inline int parse_basis_degree(ConfigReader& r) {
  const auto basis = r.choice("basis", {"deg0", "deg1", "deg2"}, std::string("deg2"));
  return basis.back() - '0';
}

inline PolicyFamilySpec parse_family(ConfigReader& r, const ModelSpec& model, const std::string& key,
                                     const std::string& def) {
  PolicyFamilySpec spec;
  spec.family = parse_family_name(r, key, def);
  spec.d = model.d;
  spec.d1 = model.d1;
  spec.horizon = model.horizon;
  if (spec.family == ControlFamily::piecewise_constant) spec.cells = r.count("cells", 4);
  if (spec.family == ControlFamily::feedback) spec.degree = parse_basis_degree(r);
  spec.theta_bound = r.positive("theta_bound", 10.0);
  spec.output_bound = r.positive("output_bound", 10.0);
  return spec;
}

inline ControlPolicy parse_policy(ConfigReader r, const ModelSpec& model) {
  const PolicyFamilySpec spec = parse_family(r, model, "policy", "zero");
  ControlPolicy p;
  if (spec.family == ControlFamily::zero) {
    p = ControlPolicy::zero(model.d1);
  } else {
    const Vector theta = r.vector("theta", Vector::Zero(static_cast<Eigen::Index>(spec.parameter_count())));
    if (static_cast<std::size_t>(theta.size()) != spec.parameter_count())
      r.fail("theta", "expected " + std::to_string(spec.parameter_count()) + " parameters");
    p = ControlPolicy::from_parameters(spec, theta);
  }
  r.finish();
  return p;
}

inline ReferenceMethod parse_reference_method(ConfigReader r, std::uint64_t seed) {
  const auto method = r.choice("method", {"large_N", "picard"}, std::string("large_N"));
  ReferenceMethod out;
  if (method == "large_N") {
    LargeNMethod m;
    m.n_ref = r.count("n_ref", 4096);
    if (m.n_ref < 1024) r.fail("n_ref", "must be at least 1024");
    m.seed = seed;
    out = m;
  } else {
    PicardMethod m;
    m.n_iter = r.count("n_iter", 10);
    m.n_inner = r.count("n_inner", 1024);
    m.tol = r.positive("tol", 5e-3);
    m.seed = seed;
    out = m;
  }
  r.finish();
  return out;
}

inline DistanceKind parse_distance(ConfigReader& r) {
  const auto d = r.choice("distance", {"bl_terminal", "bl_summed", "mean_terminal"}, std::string("bl_terminal"));
  if (d == "bl_summed") return DistanceKind::bl_summed;
  if (d == "mean_terminal") return DistanceKind::mean_terminal;
  return DistanceKind::bl_terminal;
}

inline OptimizerSettings parse_optimizer(ConfigReader r, std::size_t evaluation_budget) {
  OptimizerSettings s;
  s.budget = evaluation_budget;
  s.initial_step = r.positive("initial_step", 0.5);
  s.max_restarts = static_cast<std::size_t>(r.unsigned_int("max_restarts", 4));
  s.x_tol = r.positive("x_tol", s.x_tol);
  s.f_tol = r.positive("f_tol", s.f_tol);
  r.finish();
  return s;
}

inline const std::vector<std::string>& run_kinds() {
  static const std::vector<std::string> kinds{"simulate", "chaos", "laplace", "variational", "rate", "submartingale"};
  return kinds;
}

struct SimulateSettings {
  std::size_t N = 8;
  std::size_t replicas = 1;
  bool paths_csv = true;
  double holder_alpha = 0.25;
  std::size_t assumption_samples = 1000;
};

struct ChaosSettings {
  std::vector<std::size_t> N_values{64, 256, 1024};
  std::size_t replicas = 16;
  ReferenceMethod reference = LargeNMethod{};
};

struct LaplaceSettings {
  std::size_t N = 32;
  std::size_t M = 64;
  Functional F;
};

struct VariationalSettings {
  std::size_t N = 32;
  std::size_t M = 64;
  Functional F;
  ControlPolicy policy;
};

enum class TargetKind { reference, terminal_point, terminal_points };

struct RateRunSettings {
  std::size_t N = 32;
  std::size_t M = 32;
  RateSettings rate;
  TargetKind target = TargetKind::reference;
  ReferenceMethod reference = LargeNMethod{};
  std::vector<Vector> target_points;
};

enum class BiasMode { calibrate, fixed };

struct SubmartingaleSettings {
  std::size_t N = 100;
  std::size_t replicas = 100;
  std::string function = "neg_sq_x1";
  std::vector<std::pair<double, double>> time_pairs;
  double confidence = 0.95;
  BiasMode bias_mode = BiasMode::calibrate;
  double c_bias = 0.0;
  std::size_t calibration_N = 100;
  std::size_t calibration_replicas = 20;
  bool skip_boundary_check = false;
  std::size_t boundary_samples = 1000;
};

// Everything a run needs, built from a resolved config.
struct Scenario {
  std::string kind;
  std::uint64_t seed = 0;
  ModelSpec model;
  TimeGrid grid{1.0, 1};
  double particle_step_budget = kDefaultParticleStepBudget;
  std::size_t evaluation_budget = 60;
  json resolved;  // canonical config: every default filled in

  SimulateSettings simulate;
  ChaosSettings chaos;
  LaplaceSettings laplace;
  VariationalSettings variational;
  RateRunSettings rate;
  SubmartingaleSettings submartingale;
};

namespace detail {

inline void parse_simulate(ConfigReader r, Scenario& sc) {
  auto& s = sc.simulate;
  s.N = r.count("N", 8);
  s.replicas = r.count("replicas", 1);
  s.paths_csv = r.boolean("paths_csv", true);
  s.holder_alpha = r.number("holder_alpha", 0.25);
  if (!(s.holder_alpha > 0.0 && s.holder_alpha < 0.5)) r.fail("holder_alpha", "must lie in (0, 1/2)");
  s.assumption_samples = r.count("assumption_samples", 1000);
  r.finish();
}

inline void parse_chaos(ConfigReader r, Scenario& sc) {
  auto& s = sc.chaos;
  const auto ns = r.numbers("N_values", std::vector<double>{64, 256, 1024});
  if (ns.empty()) r.fail("N_values", "must not be empty");
  s.N_values.clear();
  for (double n : ns) {
    if (!(n >= 1.0) || n != std::floor(n)) r.fail("N_values", "entries must be positive integers");
    s.N_values.push_back(static_cast<std::size_t>(n));
  }
  s.replicas = r.count("replicas", 16);
  s.reference = parse_reference_method(r.child("reference"), sc.seed);
  r.finish();
}

inline void parse_laplace(ConfigReader r, Scenario& sc) {
  auto& s = sc.laplace;
  s.N = r.count("N", 32);
  s.M = r.count("M", 64);
  if (s.M < 2) r.fail("M", "must be at least 2");
  s.F = parse_functional(r.child("functional"), sc.model);
  r.finish();
}

inline void parse_variational(ConfigReader r, Scenario& sc) {
  auto& s = sc.variational;
  s.N = r.count("N", 32);
  s.M = r.count("M", 64);
  if (s.M < 2) r.fail("M", "must be at least 2");
  s.F = parse_functional(r.child("functional"), sc.model);
  s.policy = parse_policy(r.child("policy"), sc.model);
  r.finish();
}

inline void parse_rate(ConfigReader r, Scenario& sc) {
  auto& s = sc.rate;
  s.N = r.count("N", 32);
  s.M = r.count("M", 32);
  if (s.M < 2) r.fail("M", "must be at least 2");
  s.rate.lambda_schedule = r.numbers("lambda_schedule", std::vector<double>{1.0, 2.0, 4.0, 8.0});
  if (s.rate.lambda_schedule.empty()) r.fail("lambda_schedule", "must not be empty");
  for (std::size_t i = 0; i < s.rate.lambda_schedule.size(); ++i) {
    if (!(s.rate.lambda_schedule[i] > 0.0)) r.fail("lambda_schedule", "entries must be positive");
    if (i && !(s.rate.lambda_schedule[i] > s.rate.lambda_schedule[i - 1]))
      r.fail("lambda_schedule", "must be increasing");
  }
  s.rate.distance = parse_distance(r);
  s.rate.radius = r.positive("radius", 0.05);
  {
    auto f = r.child("family");
    s.rate.family = parse_family(f, sc.model, "family", "constant");
    f.finish();
  }
  s.rate.optimizer = parse_optimizer(r.child("optimizer"), sc.evaluation_budget);
  if (s.rate.optimizer.budget < s.rate.family.parameter_count() + 2)
    r.fail("", "optimizer evaluation budget is below dim(theta) + 2");
  {
    auto t = r.child("target");
    const auto kind = t.choice("kind", {"reference", "terminal_point", "terminal_points"}, std::string("reference"));
    if (kind == "reference") {
      s.target = TargetKind::reference;
      s.reference = parse_reference_method(t.child("reference"), sc.seed);
    } else if (kind == "terminal_point") {
      s.target = TargetKind::terminal_point;
      s.target_points = {t.vector("x")};
    } else {
      s.target = TargetKind::terminal_points;
      s.target_points = t.points("points");
    }
    for (const auto& p : s.target_points)
      if (p.size() != sc.model.d) t.fail("", "target point dimension differs from the model");
    if (s.target != TargetKind::reference && s.rate.distance == DistanceKind::bl_summed)
      t.fail("kind", "summed distance needs a reference flow target");
    t.finish();
  }
  r.finish();
}

inline void parse_submartingale(ConfigReader r, Scenario& sc) {
  auto& s = sc.submartingale;
  s.N = r.count("N", 100);
  s.replicas = r.count("replicas", 100);
  std::vector<std::string> ids;
  for (const auto& f : test_functions::registry(sc.model.domain, sc.model.d1)) ids.push_back(f.id);
  s.function = r.choice("function", ids, std::string(sc.model.domain.kind() == ConvexDomain::Kind::box
                                                         ? "neg_sq_x1"
                                                         : "neg_sq_radius"));
  const double T = sc.grid.horizon();
  {
    std::vector<Vector> pairs;
    if (r.has("time_pairs")) {
      pairs = r.points("time_pairs");
    } else {
      pairs = {Eigen::Vector2d(0.25 * T, 0.5 * T), Eigen::Vector2d(0.5 * T, T)};
      r.record("time_pairs", json::array({json::array({0.25 * T, 0.5 * T}), json::array({0.5 * T, T})}));
    }
    s.time_pairs.clear();
    for (const auto& p : pairs) {
      if (p.size() != 2) r.fail("time_pairs", "each pair must have two entries");
      if (!(p[0] < p[1])) r.fail("time_pairs", "need t0 < t1");
      try {
        (void)sc.grid.node_index(p[0]);
        (void)sc.grid.node_index(p[1]);
      } catch (const InputError&) {
        r.fail("time_pairs", "times must lie on the grid");
      }
      s.time_pairs.emplace_back(p[0], p[1]);
    }
  }
  s.confidence = r.number("confidence", 0.95);
  if (!(s.confidence > 0.5 && s.confidence < 1.0)) r.fail("confidence", "must lie in (0.5, 1)");
  {
    auto b = r.child("bias");
    const auto mode = b.choice("mode", {"calibrate", "fixed"}, std::string("calibrate"));
    if (mode == "fixed") {
      s.bias_mode = BiasMode::fixed;
      s.c_bias = b.number("c_bias", 0.0);
      if (s.c_bias < 0.0) b.fail("c_bias", "must be nonnegative");
    } else {
      s.bias_mode = BiasMode::calibrate;
      s.calibration_N = b.count("N", 100);
      s.calibration_replicas = b.count("replicas", 20);
      if (sc.grid.steps() % 4 != 0) b.fail("", "calibration needs n_steps divisible by 4");
    }
    b.finish();
  }
  s.skip_boundary_check = r.boolean("skip_boundary_check", false);
  s.boundary_samples = r.count("boundary_samples", 1000);
  r.finish();
}

}  // namespace detail

/// Validates `raw` for run kind `kind` and fills every default. Throws
/// ConfigError with a dotted key path on the first problem.
inline Scenario parse_scenario(const json& raw, const std::string& kind) {
  if (std::find(run_kinds().begin(), run_kinds().end(), kind) == run_kinds().end())
    throw ConfigError("unknown run kind '" + kind + "'");
  Scenario sc;
  sc.kind = kind;
  json& out = sc.resolved;
  out = json::object();
  ConfigReader r(raw, out, "");
  const auto version = r.unsigned_int("schema_version", kSchemaVersion);
  if (version != static_cast<std::uint64_t>(kSchemaVersion))
    r.fail("schema_version", "unsupported version " + std::to_string(version));
  if (r.has("kind")) {
    if (r.string("kind") != kind) r.fail("kind", "does not match the requested run kind");
  }
  out["kind"] = kind;
  sc.seed = r.unsigned_int("seed", 0);
  {
    auto b = r.child("budgets");
    sc.particle_step_budget = b.positive("particle_steps", kDefaultParticleStepBudget);
    sc.evaluation_budget = static_cast<std::size_t>(b.count("optimizer_evaluations", 60));
    b.finish();
  }
  sc.grid = parse_grid(r.child("grid"));
  sc.model = parse_model(r.child("model"), sc.grid.horizon());

  for (const auto& k : run_kinds())
    if (k != kind && raw.contains(k)) r.fail(k, "block given for a different run kind");
  if (kind == "simulate") detail::parse_simulate(r.child(kind), sc);
  if (kind == "chaos") detail::parse_chaos(r.child(kind), sc);
  if (kind == "laplace") detail::parse_laplace(r.child(kind), sc);
  if (kind == "variational") detail::parse_variational(r.child(kind), sc);
  if (kind == "rate") detail::parse_rate(r.child(kind), sc);
  if (kind == "submartingale") detail::parse_submartingale(r.child(kind), sc);
  r.finish();
  return sc;
}

}  // namespace rldp
