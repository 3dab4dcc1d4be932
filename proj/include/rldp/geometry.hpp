#pragma once

// Bounded convex domains (axis-aligned boxes and balls), Euclidean
// projection, outward normals, and exact 1D Skorokhod maps.

#include "rldp/core.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace rldp {

inline constexpr double kDefaultBoundaryTolerance = 1e-12;

enum class Membership { interior, boundary, exterior };

inline const char* to_string(Membership m) {
  switch (m) {
    case Membership::interior: return "interior";
    case Membership::boundary: return "boundary";
    case Membership::exterior: return "exterior";
  }
  return "?";
}

struct Projection {
  Vector point;
  bool hit_boundary = false;
  double displacement = 0.0;
};

class ConvexDomain {
 public:
  enum class Kind { box, ball };

  static ConvexDomain box(Vector lo, Vector hi, double tol = kDefaultBoundaryTolerance) {
    if (lo.size() == 0 || lo.size() != hi.size()) throw InputError("box: lo/hi dimension mismatch");
    require_finite(lo, "box lo");
    require_finite(hi, "box hi");
    if (((hi - lo).array() <= 0.0).any()) throw InputError("box: need hi > lo on every axis");
    ConvexDomain d;
    d.kind_ = Kind::box;
    d.lo_ = std::move(lo);
    d.hi_ = std::move(hi);
    d.tol_ = tol;
    return d;
  }

  /// Box [lo, hi]^dim.
  static ConvexDomain cube(int dim, double lo, double hi, double tol = kDefaultBoundaryTolerance) {
    return box(Vector::Constant(dim, lo), Vector::Constant(dim, hi), tol);
  }

  static ConvexDomain ball(Vector center, double radius, double tol = kDefaultBoundaryTolerance) {
    if (center.size() == 0) throw InputError("ball: empty center");
    require_finite(center, "ball center");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw InputError("ball: radius must be positive");
    ConvexDomain d;
    d.kind_ = Kind::ball;
    d.center_ = std::move(center);
    d.radius_ = radius;
    d.tol_ = tol;
    return d;
  }

  Kind kind() const { return kind_; }
  int dimension() const { return static_cast<int>(kind_ == Kind::box ? lo_.size() : center_.size()); }
  double tolerance() const { return tol_; }
  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  const Vector& center() const { return center_; }
  double radius() const { return radius_; }

  /// Radius of a ball about the origin containing the closed domain.
  double bounding_radius() const {
    if (kind_ == Kind::ball) return center_.norm() + radius_;
    return lo_.cwiseAbs().cwiseMax(hi_.cwiseAbs()).norm();
  }

  double diameter() const { return kind_ == Kind::ball ? 2.0 * radius_ : (hi_ - lo_).norm(); }

  Membership contains(const Vector& x) const {
    check_point(x);
    if (kind_ == Kind::ball) {
      const double r = (x - center_).norm();
      if (r > radius_ + tol_) return Membership::exterior;
      return r >= radius_ - tol_ ? Membership::boundary : Membership::interior;
    }
    bool on_face = false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] < lo_[i] - tol_ || x[i] > hi_[i] + tol_) return Membership::exterior;
      if (x[i] <= lo_[i] + tol_ || x[i] >= hi_[i] - tol_) on_face = true;
    }
    return on_face ? Membership::boundary : Membership::interior;
  }

  bool in_closure(const Vector& x) const { return contains(x) != Membership::exterior; }

  Projection project(const Vector& x) const {
    check_point(x);
    Projection out;
    if (kind_ == Kind::box) {
      out.point = x.cwiseMax(lo_).cwiseMin(hi_);
    } else {
      const Vector offset = x - center_;
      const double r = offset.norm();
      out.point = r > radius_ + tol_ ? Vector(center_ + offset * (radius_ / r)) : x;
    }
    out.displacement = (x - out.point).norm();
    out.hit_boundary = out.displacement > 0.0;
    return out;
  }

  /// Outward unit normal at a boundary point. At box corners the normalized
  /// sum of the active face normals is returned.
  Vector outward_normal(const Vector& x) const {
    if (contains(x) != Membership::boundary)
      throw PreconditionError("outward_normal: point " + format_point(x) + " is not on the boundary");
    if (kind_ == Kind::ball) return (x - center_).normalized();
    Vector n = Vector::Zero(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] <= lo_[i] + tol_) n[i] -= 1.0;
      if (x[i] >= hi_[i] - tol_) n[i] += 1.0;
    }
    return n.normalized();
  }

  std::string describe() const {
    if (kind_ == Kind::ball) return "ball(center=" + format_point(center_) + ", r=" + std::to_string(radius_) + ")";
    return "box(lo=" + format_point(lo_) + ", hi=" + format_point(hi_) + ")";
  }

  friend bool operator==(const ConvexDomain& a, const ConvexDomain& b) {
    if (a.kind_ != b.kind_) return false;
    if (a.kind_ == Kind::ball) return a.radius_ == b.radius_ && a.center_ == b.center_;
    return a.lo_ == b.lo_ && a.hi_ == b.hi_;
  }

 private:
  ConvexDomain() = default;

  void check_point(const Vector& x) const {
    if (x.size() != dimension()) throw InputError("point dimension does not match domain");
    require_finite(x, "point");
  }

  Kind kind_ = Kind::box;
  Vector lo_, hi_, center_;
  double radius_ = 0.0;
  double tol_ = kDefaultBoundaryTolerance;
};

struct SkorokhodResult {
  std::vector<double> path;        // reflected path on the grid
  std::vector<double> local_time;  // cumulative |K|: lower push plus upper push
  std::vector<double> lower_push;
  std::vector<double> upper_push;
  int iterations = 0;
  bool converged = true;
};

namespace detail {

// Minimal nondecreasing regulator keeping w + l >= lo.
inline void lower_regulator(std::span<const double> w, double lo, std::vector<double>& l) {
  double run = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    run = std::max(run, lo - w[k]);
    l[k] = run;
  }
}

// Minimal nondecreasing regulator keeping w - u <= hi.
inline void upper_regulator(std::span<const double> w, double hi, std::vector<double>& u) {
  double run = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    run = std::max(run, w[k] - hi);
    u[k] = run;
  }
}

}  // namespace detail

/// Skorokhod map of a sampled path on [lo, hi]; either barrier may be infinite.
/// The two-sided case alternates the one-sided maps until the sup-change is
/// below `tol` or `max_iter` passes have run.
inline SkorokhodResult skorokhod_1d(std::span<const double> w, double lo, double hi, double tol = 1e-14,
                                    int max_iter = 100) {
  if (w.empty()) throw InputError("skorokhod_1d: empty path");
  if (!(lo < hi)) throw InputError("skorokhod_1d: need lo < hi");
  for (double v : w)
    if (!std::isfinite(v)) throw InputError("skorokhod_1d: non-finite path value");
  if (w[0] < lo || w[0] > hi) throw InputError("skorokhod_1d: w(0) outside [lo, hi]");

  const std::size_t n = w.size();
  SkorokhodResult out;
  out.lower_push.assign(n, 0.0);
  out.upper_push.assign(n, 0.0);
  const bool has_lo = std::isfinite(lo);
  const bool has_hi = std::isfinite(hi);

  std::vector<double> shifted(n), next(n);
  out.converged = false;
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it + 1;
    double change = 0.0;
    if (has_lo) {
      for (std::size_t k = 0; k < n; ++k) shifted[k] = w[k] - out.upper_push[k];
      detail::lower_regulator(shifted, lo, next);
      for (std::size_t k = 0; k < n; ++k) change = std::max(change, std::abs(next[k] - out.lower_push[k]));
      out.lower_push.swap(next);
    }
    if (has_hi) {
      for (std::size_t k = 0; k < n; ++k) shifted[k] = w[k] + out.lower_push[k];
      detail::upper_regulator(shifted, hi, next);
      for (std::size_t k = 0; k < n; ++k) change = std::max(change, std::abs(next[k] - out.upper_push[k]));
      out.upper_push.swap(next);
    }
    if (change < tol || !(has_lo && has_hi)) {
      out.converged = true;
      break;
    }
  }

  out.path.resize(n);
  out.local_time.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // Clamp guards the last ulp of cancellation; the regulators are exact otherwise.
    double x = w[k] + out.lower_push[k] - out.upper_push[k];
    if (has_lo) x = std::max(x, lo);
    if (has_hi) x = std::min(x, hi);
    out.path[k] = x;
    out.local_time[k] = out.lower_push[k] + out.upper_push[k];
  }
  return out;
}

}  // namespace rldp
