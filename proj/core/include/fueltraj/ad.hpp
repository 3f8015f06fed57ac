#pragma once

// Forward-mode automatic differentiation scalars.
//
// Jet carries a value plus a dense tangent (gradient) vector; Jet2 adds a
// dense symmetric Hessian. Model code is written once as a template over the
// scalar type and instantiated for double / Jet / Jet2, which yields exact
// first and second derivatives of any composite expression. An empty
// gradient/Hessian stands for "identically zero", so plain constants mixed
// into expressions cost nothing.

#include <Eigen/Core>

#include <cmath>
#include <utility>

namespace fueltraj::ad {

class Jet {
 public:
  Jet() = default;
  Jet(double value) : v(value) {}  // NOLINT: implicit by design
  Jet(double value, Eigen::VectorXd grad) : v(value), g(std::move(grad)) {}

  // Independent variable `index` out of `dim`.
  static Jet variable(double value, int dim, int index) {
    Jet j(value, Eigen::VectorXd::Zero(dim));
    j.g[index] = 1.0;
    return j;
  }

  double v = 0.0;
  Eigen::VectorXd g;  // empty == zero gradient

  Jet& operator+=(const Jet& o);
  Jet& operator-=(const Jet& o);
  Jet& operator*=(const Jet& o);
  Jet& operator/=(const Jet& o);
};

class Jet2 {
 public:
  Jet2() = default;
  Jet2(double value) : v(value) {}  // NOLINT: implicit by design
  Jet2(double value, Eigen::VectorXd grad)
      : v(value), g(std::move(grad)) {}

  static Jet2 variable(double value, int dim, int index) {
    Jet2 j(value, Eigen::VectorXd::Zero(dim));
    j.g[index] = 1.0;
    return j;
  }

  double v = 0.0;
  Eigen::VectorXd g;  // empty == zero gradient
  Eigen::MatrixXd h;  // empty == zero Hessian; always symmetric when present

  Jet2& operator+=(const Jet2& o);
  Jet2& operator-=(const Jet2& o);
  Jet2& operator*=(const Jet2& o);
  Jet2& operator/=(const Jet2& o);
};

// ---------------------------------------------------------------------------
// value()/scalar queries usable from templated code (branching on values is
// fine; branches are locally constant so derivatives stay consistent).

inline double value(double x) { return x; }
inline double value(const Jet& x) { return x.v; }
inline double value(const Jet2& x) { return x.v; }

inline bool operator<(const Jet& a, const Jet& b) { return a.v < b.v; }
inline bool operator>(const Jet& a, const Jet& b) { return a.v > b.v; }
inline bool operator<=(const Jet& a, const Jet& b) { return a.v <= b.v; }
inline bool operator>=(const Jet& a, const Jet& b) { return a.v >= b.v; }
inline bool operator<(const Jet2& a, const Jet2& b) { return a.v < b.v; }
inline bool operator>(const Jet2& a, const Jet2& b) { return a.v > b.v; }
inline bool operator<=(const Jet2& a, const Jet2& b) { return a.v <= b.v; }
inline bool operator>=(const Jet2& a, const Jet2& b) { return a.v >= b.v; }

// ---------------------------------------------------------------------------
// Jet arithmetic

namespace detail {

// g = g + s*other, allowing empty operands.
inline void axpy(Eigen::VectorXd& g, double s, const Eigen::VectorXd& o) {
  if (o.size() == 0) return;
  if (g.size() == 0) {
    g = s * o;
  } else {
    g.noalias() += s * o;
  }
}

inline void axpy(Eigen::MatrixXd& h, double s, const Eigen::MatrixXd& o) {
  if (o.size() == 0) return;
  if (h.size() == 0) {
    h = s * o;
  } else {
    h.noalias() += s * o;
  }
}

// h += s * (a b^T + b a^T)
inline void add_sym_outer(Eigen::MatrixXd& h, double s,
                          const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() == 0 || b.size() == 0) return;
  if (h.size() == 0) h = Eigen::MatrixXd::Zero(a.size(), a.size());
  h.noalias() += s * a * b.transpose();
  h.noalias() += s * b * a.transpose();
}

}  // namespace detail

inline Jet operator+(const Jet& a, const Jet& b) {
  Jet r(a.v + b.v, a.g);
  detail::axpy(r.g, 1.0, b.g);
  return r;
}
inline Jet operator-(const Jet& a, const Jet& b) {
  Jet r(a.v - b.v, a.g);
  detail::axpy(r.g, -1.0, b.g);
  return r;
}
inline Jet operator-(const Jet& a) {
  Jet r(-a.v);
  detail::axpy(r.g, -1.0, a.g);
  return r;
}
inline Jet operator*(const Jet& a, const Jet& b) {
  Jet r(a.v * b.v);
  detail::axpy(r.g, b.v, a.g);
  detail::axpy(r.g, a.v, b.g);
  return r;
}
inline Jet operator/(const Jet& a, const Jet& b) {
  const double inv = 1.0 / b.v;
  Jet r(a.v * inv);
  detail::axpy(r.g, inv, a.g);
  detail::axpy(r.g, -r.v * inv, b.g);
  return r;
}

inline Jet& Jet::operator+=(const Jet& o) { return *this = *this + o; }
inline Jet& Jet::operator-=(const Jet& o) { return *this = *this - o; }
inline Jet& Jet::operator*=(const Jet& o) { return *this = *this * o; }
inline Jet& Jet::operator/=(const Jet& o) { return *this = *this / o; }

// f(a) with supplied first derivative.
inline Jet chain(const Jet& a, double f, double df) {
  Jet r(f);
  detail::axpy(r.g, df, a.g);
  return r;
}

inline Jet sin(const Jet& a) { return chain(a, std::sin(a.v), std::cos(a.v)); }
inline Jet cos(const Jet& a) { return chain(a, std::cos(a.v), -std::sin(a.v)); }
inline Jet tan(const Jet& a) {
  const double t = std::tan(a.v);
  return chain(a, t, 1.0 + t * t);
}
inline Jet atan(const Jet& a) {
  return chain(a, std::atan(a.v), 1.0 / (1.0 + a.v * a.v));
}
inline Jet exp(const Jet& a) {
  const double e = std::exp(a.v);
  return chain(a, e, e);
}
inline Jet log(const Jet& a) { return chain(a, std::log(a.v), 1.0 / a.v); }
inline Jet sqrt(const Jet& a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s);
}
inline Jet tanh(const Jet& a) {
  const double t = std::tanh(a.v);
  return chain(a, t, 1.0 - t * t);
}
inline Jet asin(const Jet& a) {
  return chain(a, std::asin(a.v), 1.0 / std::sqrt(1.0 - a.v * a.v));
}

// ---------------------------------------------------------------------------
// Jet2 arithmetic

inline Jet2 operator+(const Jet2& a, const Jet2& b) {
  Jet2 r(a.v + b.v, a.g);
  detail::axpy(r.g, 1.0, b.g);
  r.h = a.h;
  detail::axpy(r.h, 1.0, b.h);
  return r;
}
inline Jet2 operator-(const Jet2& a, const Jet2& b) {
  Jet2 r(a.v - b.v, a.g);
  detail::axpy(r.g, -1.0, b.g);
  r.h = a.h;
  detail::axpy(r.h, -1.0, b.h);
  return r;
}
inline Jet2 operator-(const Jet2& a) {
  Jet2 r(-a.v);
  detail::axpy(r.g, -1.0, a.g);
  detail::axpy(r.h, -1.0, a.h);
  return r;
}
inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  Jet2 r(a.v * b.v);
  detail::axpy(r.g, b.v, a.g);
  detail::axpy(r.g, a.v, b.g);
  detail::axpy(r.h, b.v, a.h);
  detail::axpy(r.h, a.v, b.h);
  detail::add_sym_outer(r.h, 1.0, a.g, b.g);
  return r;
}
inline Jet2 operator/(const Jet2& a, const Jet2& b) {
  // a / b = a * inv(b); inv'(b) = -1/b^2, inv''(b) = 2/b^3.
  const double inv = 1.0 / b.v;
  Jet2 ib(inv);
  detail::axpy(ib.g, -inv * inv, b.g);
  detail::axpy(ib.h, -inv * inv, b.h);
  detail::add_sym_outer(ib.h, inv * inv * inv, b.g, b.g);
  return a * ib;
}

inline Jet2& Jet2::operator+=(const Jet2& o) { return *this = *this + o; }
inline Jet2& Jet2::operator-=(const Jet2& o) { return *this = *this - o; }
inline Jet2& Jet2::operator*=(const Jet2& o) { return *this = *this * o; }
inline Jet2& Jet2::operator/=(const Jet2& o) { return *this = *this / o; }

// f(a) with supplied first and second derivative.
inline Jet2 chain(const Jet2& a, double f, double df, double d2f) {
  Jet2 r(f);
  detail::axpy(r.g, df, a.g);
  detail::axpy(r.h, df, a.h);
  detail::add_sym_outer(r.h, 0.5 * d2f, a.g, a.g);
  return r;
}

inline Jet2 sin(const Jet2& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return chain(a, s, c, -s);
}
inline Jet2 cos(const Jet2& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return chain(a, c, -s, -c);
}
inline Jet2 tan(const Jet2& a) {
  const double t = std::tan(a.v);
  const double d = 1.0 + t * t;
  return chain(a, t, d, 2.0 * t * d);
}
inline Jet2 atan(const Jet2& a) {
  const double d = 1.0 / (1.0 + a.v * a.v);
  return chain(a, std::atan(a.v), d, -2.0 * a.v * d * d);
}
inline Jet2 exp(const Jet2& a) {
  const double e = std::exp(a.v);
  return chain(a, e, e, e);
}
inline Jet2 log(const Jet2& a) {
  const double inv = 1.0 / a.v;
  return chain(a, std::log(a.v), inv, -inv * inv);
}
inline Jet2 sqrt(const Jet2& a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}
inline Jet2 tanh(const Jet2& a) {
  const double t = std::tanh(a.v);
  const double d = 1.0 - t * t;
  return chain(a, t, d, -2.0 * t * d);
}
inline Jet2 asin(const Jet2& a) {
  const double w = 1.0 - a.v * a.v;
  const double d = 1.0 / std::sqrt(w);
  return chain(a, std::asin(a.v), d, a.v * d / w);
}

// ---------------------------------------------------------------------------
// Shared helpers over all scalar types.

template <typename T>
T sq(const T& x) {
  return x * x;
}

// atan2 via locally-smooth rewrites; same derivative field as atan(y/x)
// wherever defined, but correct value on all four quadrants and stable when
// |x| < |y|.
template <typename T>
T atan2(const T& y, const T& x) {
  constexpr double kPi = 3.14159265358979323846;
  if (std::abs(value(x)) >= std::abs(value(y))) {
    T r = atan(y / x);
    if (value(x) < 0.0) {
      return value(y) >= 0.0 ? r + kPi : r - kPi;
    }
    return r;
  }
  T r = atan(x / y);
  return value(y) > 0.0 ? T(0.5 * kPi) - r : T(-0.5 * kPi) - r;
}

inline double atan2(double y, double x) { return std::atan2(y, x); }

// pow with integer exponent (the only power the models need).
template <typename T>
T powi(const T& x, int n) {
  if (n == 0) return T(1.0);
  if (n < 0) return T(1.0) / powi(x, -n);
  T r = x;
  for (int i = 1; i < n; ++i) r = r * x;
  return r;
}

}  // namespace fueltraj::ad
