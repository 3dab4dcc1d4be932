#pragma once

// Bounded-Lipschitz distances between finite-support measures (exact in 1D,
// certified dictionary lower bound in higher dimension), the path-space
// analogue on grid skeletons, and the Hölder seminorm statistic.

#include "rldp/core.hpp"
#include "rldp/grid.hpp"
#include "rldp/measure_summary.hpp"
#include "rldp/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rldp {

enum class BLMethod { exact_1d, dictionary };

inline const char* to_string(BLMethod m) { return m == BLMethod::exact_1d ? "exact_1d" : "dictionary"; }

struct BLEstimate {
  double value = 0.0;
  BLMethod method = BLMethod::exact_1d;
  std::size_t dictionary_size = 0;
};

namespace detail {

struct Atom {
  double position;
  double weight;  // signed mass of (mu - nu)
};

// Sorts and merges coincident positions. The masses of the two measures are
// summed separately, so swapping them negates every merged weight exactly.
inline std::vector<Atom> merge_atoms(std::vector<Atom> atoms) {
  std::stable_sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.position < b.position; });
  std::vector<Atom> out;
  out.reserve(atoms.size());
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (atoms[i].weight >= 0.0)
      pos += atoms[i].weight;
    else
      neg -= atoms[i].weight;
    if (i + 1 == atoms.size() || atoms[i + 1].position != atoms[i].position) {
      out.push_back({atoms[i].position, pos - neg});
      pos = neg = 0.0;
    }
  }
  return out;
}

// The dual value is invariant under w -> -w; fixing the sign of the first
// nonzero weight makes the computation identical for (mu, nu) and (nu, mu).
inline void canonical_sign(std::vector<Atom>& atoms) {
  for (const auto& a : atoms) {
    if (a.weight == 0.0) continue;
    if (a.weight < 0.0)
      for (auto& b : atoms) b.weight = -b.weight;
    return;
  }
}

// sup { sum_i w_i f(a_i) : |f| <= 1, |f(a_i) - f(a_j)| <= |a_i - a_j| } by
// dynamic programming over sorted atoms. The value function V_i(v) (best
// partial sum given f(a_i) = v) is concave piecewise linear on [-1, 1]; the
// Lipschitz window turns into a dilation about its argmax and the atom's
// weight adds a linear term. Stored as breakpoints (xs, vs).
inline double bl_dual_1d(const std::vector<Atom>& atoms) {
  if (atoms.empty()) return 0.0;
  std::vector<double> xs{-1.0, 1.0};
  std::vector<double> vs{-atoms[0].weight, atoms[0].weight};
  std::vector<double> nx, nv;
  nx.reserve(atoms.size() + 4);
  nv.reserve(atoms.size() + 4);

  for (std::size_t i = 1; i < atoms.size(); ++i) {
    const double gap = atoms[i].position - atoms[i - 1].position;
    const std::size_t arg = static_cast<std::size_t>(std::max_element(vs.begin(), vs.end()) - vs.begin());
    nx.clear();
    nv.clear();
    if (gap >= 2.0) {
      nx = {-1.0, 1.0};
      nv = {vs[arg], vs[arg]};
    } else {
      auto push = [&](double x, double v) {
        if (x < -1.0 || x > 1.0) return;
        if (!nx.empty() && x <= nx.back()) return;
        nx.push_back(x);
        nv.push_back(v);
      };
      // Left boundary value after shifting the ascending part by -gap.
      {
        const double target = -1.0 + gap;  // pre-shift abscissa that lands on -1
        double v0 = vs[arg];
        if (target < xs[arg]) {
          std::size_t j = 1;
          while (xs[j] < target) ++j;
          const double t = (target - xs[j - 1]) / (xs[j] - xs[j - 1]);
          v0 = vs[j - 1] + t * (vs[j] - vs[j - 1]);
        }
        push(-1.0, v0);
      }
      for (std::size_t j = 0; j <= arg; ++j) push(xs[j] - gap, vs[j]);
      for (std::size_t j = arg; j < xs.size(); ++j) {
        if (xs[j] + gap > 1.0) break;
        push(xs[j] + gap, vs[j]);
      }
      if (nx.back() < 1.0) {
        const double target = 1.0 - gap;
        double v1 = vs[arg];
        if (target > xs[arg]) {
          std::size_t j = arg + 1;
          while (xs[j] < target) ++j;
          const double t = (target - xs[j - 1]) / (xs[j] - xs[j - 1]);
          v1 = vs[j - 1] + t * (vs[j] - vs[j - 1]);
        }
        nx.push_back(1.0);
        nv.push_back(v1);
      }
    }
    const double w = atoms[i].weight;
    for (std::size_t j = 0; j < nx.size(); ++j) nv[j] += w * nx[j];

    // Drop interior breakpoints that are collinear with their neighbours.
    xs.clear();
    vs.clear();
    for (std::size_t j = 0; j < nx.size(); ++j) {
      if (xs.size() >= 2) {
        const std::size_t m = xs.size();
        const double s1 = (vs[m - 1] - vs[m - 2]) / (xs[m - 1] - xs[m - 2]);
        const double s2 = (nv[j] - vs[m - 1]) / (nx[j] - xs[m - 1]);
        if (std::abs(s1 - s2) <= 1e-15 * (1.0 + std::abs(s1))) {
          xs.back() = nx[j];
          vs.back() = nv[j];
          continue;
        }
      }
      xs.push_back(nx[j]);
      vs.push_back(nv[j]);
    }
  }
  return std::clamp(*std::max_element(vs.begin(), vs.end()), 0.0, 2.0);
}

inline std::vector<Atom> signed_atoms(std::span<const double> a, std::span<const double> wa,
                                      std::span<const double> b, std::span<const double> wb) {
  std::vector<Atom> atoms;
  atoms.reserve(a.size() + b.size());
  for (std::size_t i = 0; i < a.size(); ++i) atoms.push_back({a[i], wa[i]});
  for (std::size_t i = 0; i < b.size(); ++i) atoms.push_back({b[i], -wb[i]});
  auto merged = merge_atoms(std::move(atoms));
  canonical_sign(merged);
  return merged;
}

}  // namespace detail

/// Exact bounded-Lipschitz distance between two weighted atomic measures on the line.
inline double bl_exact_1d(std::span<const double> a, std::span<const double> wa, std::span<const double> b,
                          std::span<const double> wb) {
  if (a.size() != wa.size() || b.size() != wb.size()) throw InputError("bl_exact_1d: size mismatch");
  return detail::bl_dual_1d(detail::signed_atoms(a, wa, b, wb));
}

/// Uniform-weight convenience overload.
inline double bl_exact_1d(std::span<const double> a, std::span<const double> b) {
  std::vector<double> wa(a.size(), 1.0 / static_cast<double>(a.size()));
  std::vector<double> wb(b.size(), 1.0 / static_cast<double>(b.size()));
  return bl_exact_1d(a, wa, b, wb);
}

/// Exact 1D Wasserstein-1 distance between weighted atoms (CDF integral).
inline double wasserstein1_1d(std::span<const double> a, std::span<const double> wa, std::span<const double> b,
                              std::span<const double> wb) {
  const auto atoms = detail::signed_atoms(a, wa, b, wb);
  double cdf = 0.0, total = 0.0;
  for (std::size_t i = 0; i + 1 < atoms.size(); ++i) {
    cdf += atoms[i].weight;
    total += std::abs(cdf) * (atoms[i + 1].position - atoms[i].position);
  }
  return total;
}

// Fixed family of 1-Lipschitz scalar maps x -> <u, x> and x -> |x - c|. The
// exact 1D distance of the pushed-forward measures is taken for each map; the
// maximum is a lower bound on the distance in R^d because composing a
// 1-Lipschitz bounded test function with a 1-Lipschitz map stays admissible.
class BLDictionary {
 public:
  BLDictionary(int dim, const Vector& region_lo, const Vector& region_hi, std::size_t size = 256,
               std::uint64_t seed = 0x5EEDB1D1C7ULL) {
    if (dim < 1 || region_lo.size() != dim || region_hi.size() != dim)
      throw InputError("BLDictionary: dimension mismatch");
    Engine eng = make_engine({seed, StreamPurpose::dictionary, 0, 0, 0});
    NormalSampler normal;
    for (int i = 0; i < dim; ++i) directions_.push_back(Vector::Unit(dim, i));
    const std::size_t n_dirs = std::max<std::size_t>(directions_.size(), size / 2);
    while (directions_.size() < n_dirs) {
      Vector u(dim);
      for (int i = 0; i < dim; ++i) u[i] = normal(eng);
      const double norm = u.norm();
      if (norm > 1e-12) directions_.push_back(u / norm);
    }
    while (directions_.size() + centers_.size() < size) {
      Vector c(dim);
      for (int i = 0; i < dim; ++i) c[i] = uniform(eng, region_lo[i], region_hi[i]);
      centers_.push_back(c);
    }
  }

  std::size_t size() const { return directions_.size() + centers_.size(); }
  const std::vector<Vector>& directions() const { return directions_; }
  const std::vector<Vector>& centers() const { return centers_; }

  template <class Visit>
  void for_each_map(Visit&& visit) const {
    for (const auto& u : directions_) visit([&u](const Vector& x) { return u.dot(x); });
    for (const auto& c : centers_) visit([&c](const Vector& x) { return (x - c).norm(); });
  }

 private:
  std::vector<Vector> directions_;
  std::vector<Vector> centers_;
};

namespace detail {

inline std::pair<Vector, Vector> support_box(const MeasureSummary& mu, const MeasureSummary& nu) {
  Vector lo = mu.support().front(), hi = lo;
  for (const auto* m : {&mu, &nu})
    for (const auto& x : m->support()) {
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
  return {lo, hi};
}

}  // namespace detail

/// Bounded-Lipschitz distance. Exact for d = 1; for d >= 2 a certified lower
/// bound over `dict` (built over the joint support box when not supplied).
inline BLEstimate bl_distance(const MeasureSummary& mu, const MeasureSummary& nu, const BLDictionary* dict = nullptr) {
  if (mu.dimension() != nu.dimension()) throw InputError("bl_distance: measures live in different dimensions");
  const int d = mu.dimension();
  if (d == 1) {
    std::vector<double> a(mu.size()), b(nu.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = mu.support()[i][0];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = nu.support()[i][0];
    return {bl_exact_1d(a, mu.weights(), b, nu.weights()), BLMethod::exact_1d, 0};
  }
  std::optional<BLDictionary> local;
  if (!dict) {
    auto [lo, hi] = detail::support_box(mu, nu);
    local.emplace(d, lo, hi);
    dict = &*local;
  }
  std::vector<double> a(mu.size()), b(nu.size());
  double best = 0.0;
  dict->for_each_map([&](auto&& g) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = g(mu.support()[i]);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = g(nu.support()[i]);
    best = std::max(best, bl_exact_1d(a, mu.weights(), b, nu.weights()));
  });
  return {best, BLMethod::dictionary, dict->size()};
}

/// Lower bound on the bounded-Lipschitz distance between two empirical path
/// measures under the sup metric on grid skeletons. Scalar functionals used:
/// node values along fixed directions, their running max/min and time average,
/// each 1-Lipschitz for the sup metric.
inline BLEstimate path_bl_distance(std::span<const ReflectedPath> p, std::span<const ReflectedPath> q,
                                   std::size_t n_directions = 8, std::size_t max_nodes = 64) {
  if (p.empty() || q.empty()) throw InputError("path_bl_distance: empty path set");
  const std::size_t nodes = p.front().nodes();
  const auto dim = p.front().states.front().size();
  for (const auto* set : {&p, &q})
    for (const auto& path : *set)
      if (path.nodes() != nodes) throw InputError("path_bl_distance: grid mismatch");
  if (q.front().states.front().size() != dim) throw InputError("path_bl_distance: dimension mismatch");

  std::vector<Vector> dirs;
  for (int i = 0; i < dim; ++i) dirs.push_back(Vector::Unit(dim, i));
  if (dim > 1) {
    Engine eng = make_engine({0x9A7B1D, StreamPurpose::dictionary, 1, 0, 0});
    NormalSampler normal;
    while (dirs.size() < n_directions) {
      Vector u(dim);
      for (int i = 0; i < dim; ++i) u[i] = normal(eng);
      if (u.norm() > 1e-12) dirs.push_back(u.normalized());
    }
  }
  std::vector<std::size_t> picked;
  const std::size_t stride = std::max<std::size_t>(1, (nodes + max_nodes - 1) / max_nodes);
  for (std::size_t k = 0; k < nodes; k += stride) picked.push_back(k);
  if (picked.back() != nodes - 1) picked.push_back(nodes - 1);

  const std::vector<double> wp(p.size(), 1.0 / static_cast<double>(p.size()));
  const std::vector<double> wq(q.size(), 1.0 / static_cast<double>(q.size()));
  std::vector<double> a(p.size()), b(q.size());
  double best = 0.0;
  std::size_t count = 0;
  auto eval = [&](auto&& functional) {
    for (std::size_t i = 0; i < p.size(); ++i) a[i] = functional(p[i]);
    for (std::size_t i = 0; i < q.size(); ++i) b[i] = functional(q[i]);
    best = std::max(best, bl_exact_1d(a, wp, b, wq));
    ++count;
  };
  for (const auto& u : dirs) {
    for (std::size_t k : picked) eval([&](const ReflectedPath& x) { return u.dot(x.states[k]); });
    eval([&](const ReflectedPath& x) {
      double m = -std::numeric_limits<double>::infinity();
      for (const auto& s : x.states) m = std::max(m, u.dot(s));
      return m;
    });
    eval([&](const ReflectedPath& x) {
      double m = std::numeric_limits<double>::infinity();
      for (const auto& s : x.states) m = std::min(m, u.dot(s));
      return m;
    });
    eval([&](const ReflectedPath& x) {
      double s = 0.0;
      for (const auto& st : x.states) s += u.dot(st);
      return s / static_cast<double>(x.states.size());
    });
  }
  return {best, BLMethod::dictionary, count};
}

enum class HolderMode { exact, dyadic_upper, automatic };

inline const char* to_string(HolderMode m) {
  switch (m) {
    case HolderMode::exact: return "exact";
    case HolderMode::dyadic_upper: return "dyadic_upper";
    case HolderMode::automatic: return "automatic";
  }
  return "?";
}

struct HolderResult {
  double value = 0.0;
  HolderMode mode = HolderMode::exact;  // mode actually used
};

/// sup_{s<t} |f(t) - f(s)| / |t - s|^alpha over grid nodes of a uniform grid.
/// `dyadic_upper` chains dyadic increments and returns an upper bound
/// (2 / (1 - 2^-alpha)) * max dyadic quotient in O(n log n).
inline HolderResult holder_statistic(std::span<const Vector> states, double dt, double alpha,
                                     HolderMode mode = HolderMode::automatic, std::size_t exact_limit = 4097) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw PreconditionError("holder_statistic: alpha must lie in (0, 1/2)");
  if (!(dt > 0.0)) throw InputError("holder_statistic: dt must be positive");
  const std::size_t n = states.size();
  if (mode == HolderMode::automatic) mode = n <= exact_limit ? HolderMode::exact : HolderMode::dyadic_upper;
  HolderResult out{0.0, mode};
  if (n < 2) return out;

  if (mode == HolderMode::exact) {
    std::vector<double> denom(n);
    for (std::size_t lag = 1; lag < n; ++lag) denom[lag] = std::pow(static_cast<double>(lag) * dt, alpha);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t t = s + 1; t < n; ++t)
        out.value = std::max(out.value, (states[t] - states[s]).norm() / denom[t - s]);
    return out;
  }
  double quotient = 0.0;
  for (std::size_t len = 1; len < n; len *= 2) {
    const double denom = std::pow(static_cast<double>(len) * dt, alpha);
    for (std::size_t s = 0; s + len < n; s += len)
      quotient = std::max(quotient, (states[s + len] - states[s]).norm() / denom);
  }
  out.value = 2.0 / (1.0 - std::pow(2.0, -alpha)) * quotient;
  return out;
}

inline HolderResult holder_statistic(const ReflectedPath& path, double dt, double alpha,
                                     HolderMode mode = HolderMode::automatic) {
  return holder_statistic(std::span<const Vector>(path.states), dt, alpha, mode);
}

}  // namespace rldp
