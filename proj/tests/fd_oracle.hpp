#pragma once

// Finite-difference partials of a test function from f alone, and the
// generator assembled from them.

#include "rldp/diagnostics.hpp"

#include <algorithm>
#include <cmath>

namespace rldp::fd {

struct Partials {
  double f_t = 0.0;
  Vector gx, gz;
  Matrix hxx, hxz, hzz;
};

inline Partials partials(const TestFunction& f, double t, const Vector& x, const Vector& z, double h1 = 1e-5,
                         double h2 = 1e-4) {
  const int d = static_cast<int>(x.size()), d1 = static_cast<int>(z.size());
  // Joint variable u = (x, z).
  Vector u(d + d1);
  u << x, z;
  auto F = [&](const Vector& v) { return f(t, v.head(d), v.tail(d1)); };
  const int n = d + d1;
  Vector g(n);
  Matrix H(n, n);
  for (int i = 0; i < n; ++i) {
    Vector a = u, b = u;
    a[i] += h1;
    b[i] -= h1;
    g[i] = (F(a) - F(b)) / (2 * h1);
  }
  const double f0 = F(u);
  for (int i = 0; i < n; ++i) {
    Vector a = u, b = u;
    a[i] += h2;
    b[i] -= h2;
    H(i, i) = (F(a) - 2 * f0 + F(b)) / (h2 * h2);
    for (int j = i + 1; j < n; ++j) {
      Vector pp = u, pm = u, mp = u, mm = u;
      pp[i] += h2, pp[j] += h2;
      pm[i] += h2, pm[j] -= h2;
      mp[i] -= h2, mp[j] += h2;
      mm[i] -= h2, mm[j] -= h2;
      H(i, j) = H(j, i) = (F(pp) - F(pm) - F(mp) + F(mm)) / (4 * h2 * h2);
    }
  }
  Partials p;
  p.f_t = (f(t + h1, x, z) - f(t - h1, x, z)) / (2 * h1);
  p.gx = g.head(d);
  p.gz = g.tail(d1);
  p.hxx = H.topLeftCorner(d, d);
  p.hxz = H.topRightCorner(d, d1);
  p.hzz = H.bottomRightCorner(d1, d1);
  return p;
}

inline double generator(const ModelSpec& model, const TestFunction& f, double t, const Vector& x, const Vector& y,
                        const Vector& z, const MeasureSummary& nu) {
  const Partials p = partials(f, t, x, z);
  const Vector b = model.drift(t, x, nu);
  const Matrix s = model.diffusion(t, x, nu);
  double out = (b + s * y).dot(p.gx);
  for (int i = 0; i < model.d; ++i)
    for (int j = 0; j < model.d; ++j) out += 0.5 * (s * s.transpose())(i, j) * p.hxx(i, j);
  for (int i = 0; i < model.d; ++i)
    for (int j = 0; j < model.d1; ++j) out += s(i, j) * p.hxz(i, j);
  for (int j = 0; j < model.d1; ++j) out += 0.5 * p.hzz(j, j);
  return out;
}

inline double relative_error(double approx, double exact) {
  return std::abs(approx - exact) / std::max(1.0, std::abs(exact));
}

}  // namespace rldp::fd
