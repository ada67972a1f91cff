#pragma once

// Directed rounding on top of round-to-nearest.
//
// Every helper returns a double that bounds the exact real result from the
// requested side. Where an error-free transformation proves the
// round-to-nearest result exact, it is returned unchanged; otherwise it is
// moved one ulp outward. Overflow of a finite operation saturates towards
// DBL_MAX on the inner side and to infinity on the outer side.

#include <cfloat>
#include <cmath>
#include <limits>

namespace certiprop::rounding {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
// Below this magnitude fma-based error terms may be inexact (gradual underflow).
inline constexpr double kTiny = 0x1p-969;

inline double next_up(double x) { return std::nextafter(x, kInf); }
inline double next_down(double x) { return std::nextafter(x, -kInf); }

inline double add_down(double a, double b) {
  const double s = a + b;
  if (!std::isfinite(s)) {
    if (s == kInf && std::isfinite(a) && std::isfinite(b)) return DBL_MAX;
    return s;
  }
  const double bb = s - a;
  const double err = (a - (s - bb)) + (b - bb);
  return err < 0 ? next_down(s) : s;
}

inline double add_up(double a, double b) {
  const double s = a + b;
  if (!std::isfinite(s)) {
    if (s == -kInf && std::isfinite(a) && std::isfinite(b)) return -DBL_MAX;
    return s;
  }
  const double bb = s - a;
  const double err = (a - (s - bb)) + (b - bb);
  return err > 0 ? next_up(s) : s;
}

inline double sub_down(double a, double b) { return add_down(a, -b); }
inline double sub_up(double a, double b) { return add_up(a, -b); }

inline double mul_down(double a, double b) {
  const double p = a * b;
  if (a == 0 || b == 0) return 0.0;
  if (!std::isfinite(p)) {
    if (p == kInf && std::isfinite(a) && std::isfinite(b)) return DBL_MAX;
    return p;
  }
  if (std::fabs(p) < kTiny) return next_down(p);
  return std::fma(a, b, -p) < 0 ? next_down(p) : p;
}

inline double mul_up(double a, double b) {
  const double p = a * b;
  if (a == 0 || b == 0) return 0.0;
  if (!std::isfinite(p)) {
    if (p == -kInf && std::isfinite(a) && std::isfinite(b)) return -DBL_MAX;
    return p;
  }
  if (std::fabs(p) < kTiny) return next_up(p);
  return std::fma(a, b, -p) > 0 ? next_up(p) : p;
}

// Both bounds of a*b from one product.
inline void mul_bounds(double a, double b, double& lo, double& hi) {
  const double p = a * b;
  if (a == 0 || b == 0) {
    lo = hi = 0.0;
    return;
  }
  if (!std::isfinite(p) || std::fabs(p) < kTiny) {
    lo = mul_down(a, b);
    hi = mul_up(a, b);
    return;
  }
  const double e = std::fma(a, b, -p);
  lo = e < 0 ? next_down(p) : p;
  hi = e > 0 ? next_up(p) : p;
}

// b must be nonzero.
inline double div_down(double a, double b) {
  const double q = a / b;
  if (a == 0) return 0.0;
  if (!std::isfinite(q)) {
    if (q == kInf && std::isfinite(a) && std::isfinite(b)) return DBL_MAX;
    return q;
  }
  if (std::isinf(b)) return q == 0 ? (std::signbit(a) != std::signbit(b) ? -0x1p-1074 : 0.0) : q;
  if (std::fabs(q) < kTiny || std::fabs(a) < kTiny) return next_down(q);
  const double r = std::fma(-q, b, a);  // a - q*b, exact
  const bool above = (r > 0) == (b > 0);
  return (r != 0 && !above) ? next_down(q) : q;
}

inline double div_up(double a, double b) {
  const double q = a / b;
  if (a == 0) return 0.0;
  if (!std::isfinite(q)) {
    if (q == -kInf && std::isfinite(a) && std::isfinite(b)) return -DBL_MAX;
    return q;
  }
  if (std::isinf(b)) return q == 0 ? (std::signbit(a) != std::signbit(b) ? 0.0 : 0x1p-1074) : q;
  if (std::fabs(q) < kTiny || std::fabs(a) < kTiny) return next_up(q);
  const double r = std::fma(-q, b, a);
  const bool above = (r > 0) == (b > 0);
  return (r != 0 && above) ? next_up(q) : q;
}

inline double sqrt_down(double x) {
  const double s = std::sqrt(x);
  if (x == 0 || std::isinf(x)) return s;
  return std::fma(-s, s, x) < 0 ? next_down(s) : s;
}

inline double sqrt_up(double x) {
  const double s = std::sqrt(x);
  if (x == 0 || std::isinf(x)) return s;
  return std::fma(-s, s, x) > 0 ? next_up(s) : s;
}

// libm exp is not correctly rounded; two ulps cover its documented error.
inline double exp_down(double x) {
  if (x == 0) return 1.0;
  if (x == -kInf) return 0.0;
  const double y = std::exp(x);
  if (y == kInf) return std::isfinite(x) ? DBL_MAX : kInf;
  const double d = next_down(next_down(y));
  return d < 0 ? 0.0 : d;
}

inline double exp_up(double x) {
  if (x == 0) return 1.0;
  if (x == -kInf) return 0.0;
  const double y = std::exp(x);
  if (y == kInf) return kInf;
  return next_up(next_up(y));
}

}  // namespace certiprop::rounding
