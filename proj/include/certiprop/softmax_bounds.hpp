#pragma once

// Rigorous enclosures of softmax and of the products s_i s_c, s_i s_j s_c
// over a parametrized set z = x + L t, t in [-1,1]^n.
//
// Each quantity is bounded twice, once directly from the box of z and once
// through the quotient form
//   s_b1 ... s_bq = 1 / sum_{a1..aq} exp(sum_k (z_ak - z_bk)),
// whose exponents shrink when the rows of L are correlated. The two bounds
// are intersected.

#include <array>
#include <span>
#include <vector>

#include "certiprop/interval.hpp"
#include "certiprop/linalg.hpp"

namespace certiprop::softmax {

using rounding::add_down;
using rounding::add_up;
using rounding::div_down;
using rounding::div_up;
using rounding::exp_down;
using rounding::exp_up;
using rounding::sub_down;
using rounding::sub_up;

inline Interval unit_clamp(double lo, double hi) {
  lo = std::clamp(lo, 0.0, 1.0);
  hi = std::clamp(hi, 0.0, 1.0);
  return Interval(lo, std::max(lo, hi));
}

// s_i in [1 / (1 + sum_{j!=i} exp(hi_j - lo_i)), 1 / (1 + sum_{j!=i} exp(lo_j - hi_i))].
// Same bound as exp(lo_i) / (exp(lo_i) + sum exp(hi_j)) with the shift folded into the exponents.
inline IntervalVector monotone_box(const IntervalVector& z) {
  const std::size_t m = z.dim();
  IntervalVector out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double den_up = 1.0;
    double den_down = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      den_up = add_up(den_up, exp_up(sub_up(z[j].hi(), z[i].lo())));
      den_down = add_down(den_down, exp_down(sub_down(z[j].lo(), z[i].hi())));
    }
    out[i] = unit_clamp(div_down(1.0, den_up), div_up(1.0, den_down));
  }
  return out;
}

// Enclosure of softmax at a single point. Evaluated as exp(x_i - R) / sum exp(x_j - R), R = max x.
inline IntervalVector at_point(std::span<const double> x) {
  const std::size_t m = x.size();
  double r = x[0];
  for (double v : x) r = std::max(r, v);
  std::vector<Interval> e(m);
  IntervalAccumulator sum;
  for (std::size_t j = 0; j < m; ++j) {
    e[j] = Interval::from_result(exp_down(sub_down(x[j], r)), exp_up(sub_up(x[j], r)));
    sum.add(e[j]);
  }
  const Interval s = sum.value();
  IntervalVector out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Interval q = e[i] / s;
    out[i] = unit_clamp(q.lo(), q.hi());
  }
  return out;
}

// z = center + generators * t over the unit cube.
struct Parametrization {
  Vector center;
  Matrix generators;  // m x n

  std::size_t dim() const { return static_cast<std::size_t>(center.size()); }
  IntervalVector box() const {
    IntervalVector z(dim());
    for (Eigen::Index i = 0; i < center.size(); ++i) {
      double r = 0.0;
      for (Eigen::Index p = 0; p < generators.cols(); ++p) r = add_up(r, std::fabs(generators(i, p)));
      z[i] = Interval::from_result(sub_down(center[i], r), add_up(center[i], r));
    }
    return z;
  }
};

namespace detail {

struct Multiset {
  std::array<int, 3> idx{};
  double multiplicity = 1;  // number of ordered tuples
};

inline std::vector<Multiset> multisets(int m, int order) {
  std::vector<Multiset> out;
  auto push = [&](std::array<int, 3> a) {
    Multiset s;
    s.idx = a;
    if (order == 1) s.multiplicity = 1;
    else if (order == 2) s.multiplicity = a[0] == a[1] ? 1 : 2;
    else if (a[0] == a[1] && a[1] == a[2]) s.multiplicity = 1;
    else if (a[0] == a[1] || a[1] == a[2]) s.multiplicity = 3;
    else s.multiplicity = 6;
    out.push_back(s);
  };
  for (int i = 0; i < m; ++i) {
    if (order == 1) {
      push({i, 0, 0});
      continue;
    }
    for (int j = i; j < m; ++j) {
      if (order == 2) {
        push({i, j, 0});
        continue;
      }
      for (int k = j; k < m; ++k) push({i, j, k});
    }
  }
  return out;
}

// Quotient-form enclosure of prod_k s_{b_k} for every multiset b of the given order.
inline std::vector<Interval> reduced_products(const Parametrization& par, int order, std::vector<Multiset>& sets) {
  const int m = static_cast<int>(par.dim());
  const Eigen::Index n = par.generators.cols();
  sets = multisets(m, order);
  const std::size_t count = sets.size();

  std::vector<Interval> xs(count);
  std::vector<double> lo(count * n), hi(count * n);
  for (std::size_t a = 0; a < count; ++a) {
    IntervalAccumulator xa;
    for (int k = 0; k < order; ++k) xa.add(Interval(par.center[sets[a].idx[k]]));
    xs[a] = xa.value();
    for (Eigen::Index p = 0; p < n; ++p) {
      IntervalAccumulator la;
      for (int k = 0; k < order; ++k) la.add(Interval(par.generators(sets[a].idx[k], p)));
      lo[a * n + p] = la.lo;
      hi[a * n + p] = la.hi;
    }
  }

  // spread(a, b) >= sum_p |Lsum_a,p - Lsum_b,p|
  std::vector<double> spread(count * count, 0.0);
  for (std::size_t a = 0; a < count; ++a)
    for (std::size_t b = a + 1; b < count; ++b) {
      double s = 0.0;
      for (Eigen::Index p = 0; p < n; ++p) {
        const double d1 = std::fabs(sub_down(lo[a * n + p], hi[b * n + p]));
        const double d2 = std::fabs(sub_up(hi[a * n + p], lo[b * n + p]));
        s = add_up(s, std::max(d1, d2));
      }
      spread[a * count + b] = spread[b * count + a] = s;
    }

  std::vector<Interval> out(count);
  for (std::size_t b = 0; b < count; ++b) {
    double den_up = 0.0;
    double den_down = 0.0;
    for (std::size_t a = 0; a < count; ++a) {
      const double mult = sets[a].multiplicity;
      if (a == b) {
        den_up = add_up(den_up, mult);
        den_down = add_down(den_down, mult);
        continue;
      }
      const Interval dx = xs[a] - xs[b];
      const double s = spread[a * count + b];
      den_up = add_up(den_up, rounding::mul_up(mult, exp_up(add_up(dx.hi(), s))));
      den_down = add_down(den_down, rounding::mul_down(mult, exp_down(sub_down(dx.lo(), s))));
    }
    out[b] = unit_clamp(div_down(1.0, den_up), div_up(1.0, den_down));
  }
  return out;
}

}  // namespace detail

// Enclosures of s_i, s_i s_c and s_i s_j s_c over the parametrized set.
struct ProductBounds {
  std::size_t m = 0;
  IntervalVector s;
  std::vector<Interval> s2;  // [i*m + c]
  std::vector<Interval> s3;  // [(i*m + j)*m + c]
  // Direct (box) bounds before intersection, kept for diagnostics and tests.
  std::vector<Interval> s2_direct;
  std::vector<Interval> s3_direct;

  const Interval& pair(std::size_t i, std::size_t c) const { return s2[i * m + c]; }
  const Interval& triple(std::size_t i, std::size_t j, std::size_t c) const { return s3[(i * m + j) * m + c]; }
};

inline ProductBounds product_bounds(const Parametrization& par) {
  const std::size_t m = par.dim();
  ProductBounds pb;
  pb.m = m;
  const IntervalVector direct = monotone_box(par.box());
  std::vector<detail::Multiset> sets;
  const auto r1 = detail::reduced_products(par, 1, sets);
  pb.s = IntervalVector(m);
  for (std::size_t i = 0; i < m; ++i) pb.s[i] = intersect_enclosures(direct[i], r1[i]);

  pb.s2_direct.assign(m * m, Interval());
  pb.s2.assign(m * m, Interval());
  const auto r2 = detail::reduced_products(par, 2, sets);
  for (std::size_t a = 0; a < sets.size(); ++a) {
    const auto i = static_cast<std::size_t>(sets[a].idx[0]);
    const auto c = static_cast<std::size_t>(sets[a].idx[1]);
    const Interval d = i == c ? iv_sqr(pb.s[i]) : pb.s[i] * pb.s[c];
    const Interval v = intersect_enclosures(d, r2[a]);
    pb.s2_direct[i * m + c] = pb.s2_direct[c * m + i] = d;
    pb.s2[i * m + c] = pb.s2[c * m + i] = v;
  }

  pb.s3_direct.assign(m * m * m, Interval());
  pb.s3.assign(m * m * m, Interval());
  const auto r3 = detail::reduced_products(par, 3, sets);
  for (std::size_t a = 0; a < sets.size(); ++a) {
    const std::array<std::size_t, 3> t = {static_cast<std::size_t>(sets[a].idx[0]),
                                          static_cast<std::size_t>(sets[a].idx[1]),
                                          static_cast<std::size_t>(sets[a].idx[2])};
    const Interval d = intersect_enclosures(pb.s2[t[0] * m + t[1]] * pb.s[t[2]], pb.s[t[0]] * pb.s[t[1]] * pb.s[t[2]]);
    const Interval v = intersect_enclosures(d, r3[a]);
    const std::array<std::array<int, 3>, 6> perms = {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    for (const auto& p : perms) {
      const std::size_t k = (t[p[0]] * m + t[p[1]]) * m + t[p[2]];
      pb.s3_direct[k] = d;
      pb.s3[k] = v;
    }
  }
  return pb;
}

// Entry (j, c) of d J_i / d z, i.e. d^2 s_i / dz_j dz_c:
//   [i=j=c] s_i - [i=j] s_i s_c - [i=c] s_i s_j - [j=c] s_i s_j + 2 s_i s_j s_c
inline Interval second_derivative(const ProductBounds& pb, std::size_t i, std::size_t j, std::size_t c) {
  IntervalAccumulator acc;
  if (i == j && j == c) acc.add(pb.s[i]);
  if (i == j) acc.add(-pb.pair(i, c));
  if (i == c) acc.add(-pb.pair(i, j));
  if (j == c) acc.add(-pb.pair(i, j));
  acc.add(2.0 * pb.triple(i, j, c));
  return acc.value();
}

// Bound on |1/2 w^T D^2 s_i w| for w in the interval vector `offset`
// (the Lagrange remainder of the first-order expansion).
inline std::vector<double> taylor_remainder(const ProductBounds& pb, const IntervalVector& offset) {
  const std::size_t m = pb.m;
  require_dims(offset.dim() == m, "taylor_remainder");
  std::vector<double> e(m);
  for (std::size_t i = 0; i < m; ++i) {
    IntervalAccumulator acc;
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t c = 0; c < m; ++c) {
        const Interval ww = j == c ? iv_sqr(offset[j]) : offset[j] * offset[c];
        acc.add(second_derivative(pb, i, j, c) * ww);
      }
    e[i] = rounding::mul_up(0.5, acc.value().mag());
  }
  return e;
}

// Enclosure of the Jacobian J_ij = s_i (delta_ij - s_j) at a point.
inline IntervalMatrix jacobian(const IntervalVector& s) {
  const std::size_t m = s.dim();
  IntervalMatrix j(m, m);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      if (a == b) {
        j(a, b) = s[a] * (Interval(1.0) - s[a]);
      } else {
        j(a, b) = -(s[a] * s[b]);
      }
    }
  return j;
}

}  // namespace certiprop::softmax
