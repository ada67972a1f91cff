#pragma once

// Outward-rounded interval arithmetic over double.

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "certiprop/errors.hpp"
#include "certiprop/rounding.hpp"

namespace certiprop {

class Interval {
public:
  constexpr Interval() = default;
  explicit Interval(double point) : Interval(point, point) {}
  Interval(double lo, double hi) : lo_(lo), hi_(hi) {
    if (std::isnan(lo) || std::isnan(hi)) throw ValidationError("interval endpoint is NaN");
    if (std::isinf(lo) || std::isinf(hi)) throw ValidationError("interval endpoint is infinite");
    if (lo > hi) throw ValidationError("inverted interval endpoints");
  }

  // Result of an arithmetic operation: overflow is a numeric failure, not bad input.
  static Interval from_result(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw NumericError("interval overflow");
    return Interval(lo, hi);
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }

  double mid() const {
    if (lo_ == hi_) return lo_;
    const double m = 0.5 * lo_ + 0.5 * hi_;
    return std::clamp(m, lo_, hi_);
  }
  // [mid - rad, mid + rad] contains the interval.
  double rad() const {
    const double m = mid();
    return std::max(rounding::sub_up(hi_, m), rounding::sub_up(m, lo_));
  }
  double width() const { return rounding::sub_up(hi_, lo_); }
  double mag() const { return std::max(std::fabs(lo_), std::fabs(hi_)); }

  bool contains(double x) const { return lo_ <= x && x <= hi_; }
  bool contains(const Interval& o) const { return lo_ <= o.lo_ && o.hi_ <= hi_; }
  bool is_point() const { return lo_ == hi_; }

  friend bool operator==(const Interval&, const Interval&) = default;

private:
  double lo_ = 0.0;
  double hi_ = 0.0;
};

inline Interval iv_add(const Interval& a, const Interval& b) {
  return Interval::from_result(rounding::add_down(a.lo(), b.lo()), rounding::add_up(a.hi(), b.hi()));
}

inline Interval iv_sub(const Interval& a, const Interval& b) {
  return Interval::from_result(rounding::sub_down(a.lo(), b.hi()), rounding::sub_up(a.hi(), b.lo()));
}

inline Interval iv_neg(const Interval& a) { return Interval(-a.hi(), -a.lo()); }

inline Interval iv_mul(const Interval& a, const Interval& b) {
  using namespace rounding;
  const double c[4][2] = {{a.lo(), b.lo()}, {a.lo(), b.hi()}, {a.hi(), b.lo()}, {a.hi(), b.hi()}};
  double lo = kInf;
  double hi = -kInf;
  for (const auto& p : c) {
    lo = std::min(lo, mul_down(p[0], p[1]));
    hi = std::max(hi, mul_up(p[0], p[1]));
  }
  return Interval::from_result(lo, hi);
}

inline Interval iv_scale(double s, const Interval& a) {
  using namespace rounding;
  if (s >= 0) return Interval::from_result(mul_down(s, a.lo()), mul_up(s, a.hi()));
  return Interval::from_result(mul_down(s, a.hi()), mul_up(s, a.lo()));
}

inline Interval iv_sqr(const Interval& a) {
  using namespace rounding;
  if (a.lo() >= 0) return Interval::from_result(mul_down(a.lo(), a.lo()), mul_up(a.hi(), a.hi()));
  if (a.hi() <= 0) return Interval::from_result(mul_down(a.hi(), a.hi()), mul_up(a.lo(), a.lo()));
  const double m = a.mag();
  return Interval::from_result(0.0, mul_up(m, m));
}

// Divisor must not contain zero.
inline Interval iv_div(const Interval& a, const Interval& b) {
  using namespace rounding;
  if (b.contains(0.0)) throw NumericError("interval division by an interval containing zero");
  const double c[4][2] = {{a.lo(), b.lo()}, {a.lo(), b.hi()}, {a.hi(), b.lo()}, {a.hi(), b.hi()}};
  double lo = kInf;
  double hi = -kInf;
  for (const auto& p : c) {
    lo = std::min(lo, div_down(p[0], p[1]));
    hi = std::max(hi, div_up(p[0], p[1]));
  }
  return Interval::from_result(lo, hi);
}

inline Interval iv_exp(const Interval& a) {
  return Interval::from_result(rounding::exp_down(a.lo()), rounding::exp_up(a.hi()));
}

inline Interval operator+(const Interval& a, const Interval& b) { return iv_add(a, b); }
inline Interval operator-(const Interval& a, const Interval& b) { return iv_sub(a, b); }
inline Interval operator-(const Interval& a) { return iv_neg(a); }
inline Interval operator*(const Interval& a, const Interval& b) { return iv_mul(a, b); }
inline Interval operator*(double s, const Interval& a) { return iv_scale(s, a); }
inline Interval operator/(const Interval& a, const Interval& b) { return iv_div(a, b); }

inline Interval hull(const Interval& a, const Interval& b) {
  return Interval(std::min(a.lo(), b.lo()), std::max(a.hi(), b.hi()));
}

inline std::optional<Interval> intersect(const Interval& a, const Interval& b) {
  const double lo = std::max(a.lo(), b.lo());
  const double hi = std::min(a.hi(), b.hi());
  if (lo > hi) return std::nullopt;
  return Interval(lo, hi);
}

// Intersection of two enclosures of the same quantity; disjointness means a bug upstream.
inline Interval intersect_enclosures(const Interval& a, const Interval& b) {
  auto r = intersect(a, b);
  if (!r) throw NumericError("disjoint enclosures of one quantity");
  return *r;
}

inline std::ostream& operator<<(std::ostream& os, const Interval& a) {
  return os << '[' << a.lo() << ", " << a.hi() << ']';
}

class IntervalVector {
public:
  IntervalVector() = default;
  explicit IntervalVector(std::size_t dim, Interval fill = Interval()) : entries_(dim, fill) {}
  explicit IntervalVector(std::vector<Interval> entries) : entries_(std::move(entries)) {}
  IntervalVector(std::initializer_list<Interval> entries) : entries_(entries) {}

  static IntervalVector from_center_radius(std::span<const double> center, std::span<const double> radius) {
    require_dims(center.size() == radius.size(), "center/radius");
    IntervalVector v(center.size());
    for (std::size_t i = 0; i < center.size(); ++i) {
      if (!(radius[i] >= 0)) throw ValidationError("negative radius");
      v[i] = Interval::from_result(rounding::sub_down(center[i], radius[i]), rounding::add_up(center[i], radius[i]));
    }
    return v;
  }

  std::size_t dim() const { return entries_.size(); }
  Interval& operator[](std::size_t i) { return entries_[i]; }
  const Interval& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  const std::vector<Interval>& entries() const { return entries_; }

  bool contains(std::span<const double> x) const {
    if (x.size() != dim()) return false;
    for (std::size_t i = 0; i < dim(); ++i)
      if (!entries_[i].contains(x[i])) return false;
    return true;
  }
  bool contains(const IntervalVector& o) const {
    if (o.dim() != dim()) return false;
    for (std::size_t i = 0; i < dim(); ++i)
      if (!entries_[i].contains(o[i])) return false;
    return true;
  }

  friend bool operator==(const IntervalVector&, const IntervalVector&) = default;

private:
  std::vector<Interval> entries_;
};

class IntervalMatrix {
public:
  IntervalMatrix() = default;
  IntervalMatrix(std::size_t rows, std::size_t cols, Interval fill = Interval())
      : rows_(rows), cols_(cols), entries_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Interval& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
  const Interval& operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Interval> entries_;
};

// Accumulates lo/hi of a sum term by term.
struct IntervalAccumulator {
  double lo = 0.0;
  double hi = 0.0;

  void add(const Interval& a) {
    lo = rounding::add_down(lo, a.lo());
    hi = rounding::add_up(hi, a.hi());
  }
  void add_product(double a, double b) {
    double plo, phi;
    rounding::mul_bounds(a, b, plo, phi);
    lo = rounding::add_down(lo, plo);
    hi = rounding::add_up(hi, phi);
  }
  Interval value() const { return Interval::from_result(lo, hi); }
};

inline IntervalVector iv_matvec(const IntervalMatrix& a, const IntervalVector& v) {
  require_dims(a.cols() == v.dim(), "iv_matvec");
  IntervalVector out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    IntervalAccumulator acc;
    for (std::size_t c = 0; c < a.cols(); ++c) acc.add(a(r, c) * v[c]);
    out[r] = acc.value();
  }
  return out;
}

inline IntervalVector hull(const IntervalVector& a, const IntervalVector& b) {
  require_dims(a.dim() == b.dim(), "hull");
  IntervalVector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = hull(a[i], b[i]);
  return out;
}

inline double mid(const Interval& a) { return a.mid(); }
inline double rad(const Interval& a) { return a.rad(); }

}  // namespace certiprop
