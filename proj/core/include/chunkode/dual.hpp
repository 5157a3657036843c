#pragma once

#include <array>
#include <cmath>

namespace chunkode {

// Forward-mode scalar carrying W tangent lanes. Seeding unit tangents in up
// to W directions per evaluation pass yields W columns of a Jacobian (or W
// parameter sensitivities) at once, exact to round-off.
//
// Non-smooth primitives pick fixed subgradients so that derivative outputs
// are well defined everywhere: d|x|/dx = 0 at x = 0, and the positive-part
// ramp has derivative 0 for x <= 0.
template <int W>
struct Dual {
  double v = 0.0;
  std::array<double, W> d{};

  Dual() = default;
  Dual(double value) : v(value) { d.fill(0.0); }  // NOLINT: implicit by design
  Dual(double value, const std::array<double, W>& tangents) : v(value), d(tangents) {}

  void seed(int lane, double t = 1.0) { d[lane] = t; }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int l = 0; l < W; ++l) d[l] += o.d[l];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int l = 0; l < W; ++l) d[l] -= o.d[l];
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator-(const Dual& a) {
    Dual r;
    r.v = -a.v;
    for (int l = 0; l < W; ++l) r.d[l] = -a.d[l];
    return r;
  }

  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r;
    r.v = a.v * b.v;
    for (int l = 0; l < W; ++l) r.d[l] = a.d[l] * b.v + a.v * b.d[l];
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    Dual r;
    const double inv = 1.0 / b.v;
    r.v = a.v * inv;
    for (int l = 0; l < W; ++l) r.d[l] = (a.d[l] - r.v * b.d[l]) * inv;
    return r;
  }

  friend Dual operator+(Dual a, double b) { a.v += b; return a; }
  friend Dual operator+(double a, Dual b) { b.v += a; return b; }
  friend Dual operator-(Dual a, double b) { a.v -= b; return a; }
  friend Dual operator-(double a, const Dual& b) { return -b + a; }
  friend Dual operator*(Dual a, double b) {
    a.v *= b;
    for (int l = 0; l < W; ++l) a.d[l] *= b;
    return a;
  }
  friend Dual operator*(double a, Dual b) { return b * a; }
  friend Dual operator/(Dual a, double b) { return a * (1.0 / b); }
  friend Dual operator/(double a, const Dual& b) { return Dual(a) / b; }

  friend bool operator>(const Dual& a, double b) { return a.v > b; }
  friend bool operator<(const Dual& a, double b) { return a.v < b; }
  friend bool operator>=(const Dual& a, double b) { return a.v >= b; }
  friend bool operator<=(const Dual& a, double b) { return a.v <= b; }
};

template <int W>
inline Dual<W> chain(double value, double dcoef, const Dual<W>& x) {
  Dual<W> r;
  r.v = value;
  for (int l = 0; l < W; ++l) r.d[l] = dcoef * x.d[l];
  return r;
}

// Plain-double names so templated model code written against unqualified
// calls instantiates for T = double as well as for duals.
using std::cos;
using std::exp;
using std::fabs;
using std::sin;
using std::sqrt;
using std::tanh;

template <int W>
inline Dual<W> sin(const Dual<W>& x) {
  return chain(std::sin(x.v), std::cos(x.v), x);
}
template <int W>
inline Dual<W> cos(const Dual<W>& x) {
  return chain(std::cos(x.v), -std::sin(x.v), x);
}
template <int W>
inline Dual<W> tanh(const Dual<W>& x) {
  const double t = std::tanh(x.v);
  return chain(t, 1.0 - t * t, x);
}
template <int W>
inline Dual<W> exp(const Dual<W>& x) {
  const double e = std::exp(x.v);
  return chain(e, e, x);
}
template <int W>
inline Dual<W> sqrt(const Dual<W>& x) {
  const double s = std::sqrt(x.v);
  return chain(s, s > 0.0 ? 0.5 / s : 0.0, x);
}

// |x| with the subgradient 0 at the kink.
template <int W>
inline Dual<W> fabs(const Dual<W>& x) {
  const double s = x.v > 0.0 ? 1.0 : (x.v < 0.0 ? -1.0 : 0.0);
  return chain(std::fabs(x.v), s, x);
}

// Positive part <x> = max(x, 0), derivative 0 for x <= 0.
template <int W>
inline Dual<W> positive_part(const Dual<W>& x) {
  if (x.v > 0.0) return x;
  return Dual<W>(0.0);
}
inline double positive_part(double x) { return x > 0.0 ? x : 0.0; }

// Numeric sign as a plain double (piecewise constant, no tangent).
template <int W>
inline double sign_of(const Dual<W>& x) {
  return x.v > 0.0 ? 1.0 : (x.v < 0.0 ? -1.0 : 0.0);
}
inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// x^n by squaring for integer n of modest size, library pow otherwise.
// Called from both the plain and the dual paths so every derivative strategy
// sees the same value arithmetic.
inline double pow_value(double x, double n) {
  const int ni = int(n);
  if (double(ni) == n && ni >= 0 && ni <= 32) {
    double r = 1.0, base = x;
    int e = ni;
    while (e > 0) {
      if (e & 1) r *= base;
      base *= base;
      e >>= 1;
    }
    return r;
  }
  return std::pow(x, n);
}
inline double pow(double x, double n) { return pow_value(x, n); }  // mirror of the dual overloads

template <int W>
inline Dual<W> pow(const Dual<W>& b, const Dual<W>& e) {
  const double value = pow_value(b.v, e.v);
  const double db = (b.v != 0.0) ? e.v * pow_value(b.v, e.v - 1.0) : 0.0;
  const double de = (b.v > 0.0) ? value * std::log(b.v) : 0.0;
  Dual<W> r;
  r.v = value;
  for (int l = 0; l < W; ++l) r.d[l] = db * b.d[l] + de * e.d[l];
  return r;
}
template <int W>
inline Dual<W> pow(const Dual<W>& b, double e) {
  return pow(b, Dual<W>(e));
}

template <int W>
inline bool is_finite(const Dual<W>& x) {
  if (!std::isfinite(x.v)) return false;
  for (int l = 0; l < W; ++l)
    if (!std::isfinite(x.d[l])) return false;
  return true;
}

// Lane width used by the library's forward-mode sweeps.
inline constexpr int kDualLanes = 8;
using Dual8 = Dual<kDualLanes>;

}  // namespace chunkode
