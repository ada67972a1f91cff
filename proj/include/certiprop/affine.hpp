#pragma once

// Affine arithmetic over shared noise symbols t_k in [-1, 1].
//
// A vector of affine forms represents the zonotope {center + A t}. Affine
// layers are applied exactly up to floating-point rounding, whose bound is
// carried by one fresh symbol per output entry. ReLU and softmax are
// replaced by affine approximations plus a fresh symbol bounding the error.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <utility>
#include <variant>
#include <vector>

#include "certiprop/interval.hpp"
#include "certiprop/linalg.hpp"
#include "certiprop/network.hpp"
#include "certiprop/report.hpp"
#include "certiprop/softmax_bounds.hpp"

namespace certiprop::affine {

using SymbolId = std::uint32_t;

// Hands out noise symbols; ids strictly increase and are never reused.
class SymbolContext {
public:
  SymbolId fresh(int layer) {
    origin_.push_back(layer);
    return static_cast<SymbolId>(origin_.size() - 1);
  }
  std::size_t count() const { return origin_.size(); }
  // Index of the layer that created the symbol (-1 for input symbols).
  int origin(SymbolId id) const { return origin_.at(id); }

private:
  std::vector<int> origin_;
};

struct AffineForm {
  double center = 0.0;
  std::vector<std::pair<SymbolId, double>> coeffs;  // sorted by id, nonzero

  AffineForm() = default;
  explicit AffineForm(double c) : center(c) {}
  AffineForm(double c, std::vector<std::pair<SymbolId, double>> k) : center(c), coeffs(std::move(k)) {
    std::sort(coeffs.begin(), coeffs.end());
    std::erase_if(coeffs, [](const auto& p) { return p.second == 0.0; });
  }

  // Upper bound on sum |a_i|.
  double radius() const {
    double s = 0.0;
    for (const auto& [id, a] : coeffs) s = rounding::add_up(s, std::fabs(a));
    return s;
  }
  Interval range() const {
    const double s = radius();
    return Interval::from_result(rounding::sub_down(center, s), rounding::add_up(center, s));
  }
  double coeff(SymbolId id) const {
    auto it = std::lower_bound(coeffs.begin(), coeffs.end(), std::make_pair(id, -rounding::kInf));
    return it != coeffs.end() && it->first == id ? it->second : 0.0;
  }
  // Value at a point of the symbol cube; symbols missing from t count as 0.
  double evaluate(const std::vector<double>& t) const {
    long double v = center;
    for (const auto& [id, a] : coeffs)
      if (id < t.size()) v += static_cast<long double>(a) * t[id];
    return static_cast<double>(v);
  }
};

using AffineVector = std::vector<AffineForm>;

inline IntervalVector ranges(const AffineVector& v) {
  IntervalVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i].range();
  return out;
}

inline std::size_t symbol_count(const AffineVector& v) {
  std::vector<SymbolId> ids;
  for (const auto& f : v)
    for (const auto& [id, a] : f.coeffs) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
}

namespace detail {

// Dense view of the symbols used by a vector of forms.
struct SymbolTable {
  std::vector<SymbolId> ids;  // column -> id
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;  // per entry: (column, coeff)

  explicit SymbolTable(const AffineVector& v) {
    for (const auto& f : v)
      for (const auto& [id, a] : f.coeffs) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    rows.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      rows[i].reserve(v[i].coeffs.size());
      std::size_t col = 0;
      for (const auto& [id, a] : v[i].coeffs) {
        while (ids[col] != id) ++col;
        rows[i].emplace_back(static_cast<std::uint32_t>(col), a);
      }
    }
  }
  std::size_t size() const { return ids.size(); }
};

// Turns per-coefficient enclosures into point coefficients; returns the bound on the dropped error.
inline double settle(const std::vector<double>& lo, const std::vector<double>& hi, const std::vector<SymbolId>& ids,
                     std::vector<std::pair<SymbolId, double>>& out) {
  double err = 0.0;
  for (std::size_t s = 0; s < ids.size(); ++s) {
    if (lo[s] == 0.0 && hi[s] == 0.0) continue;
    const Interval iv = Interval::from_result(lo[s], hi[s]);
    const double m = iv.mid();
    if (!iv.is_point()) err = rounding::add_up(err, iv.rad());
    if (m != 0.0) out.emplace_back(ids[s], m);
  }
  return err;
}

}  // namespace detail

// Wraps an accumulated rounding error bound into a fresh symbol.
inline void absorb_error(AffineForm& f, double err, SymbolContext& ctx, int layer) {
  if (err > 0.0) f.coeffs.emplace_back(ctx.fresh(layer), err);
}

// Coefficients come from one point product W * A with an a-priori error
// bound; each row's total error goes to a fresh symbol.
inline AffineVector aa_affine(const Matrix& W, const Vector& b, const AffineVector& v, SymbolContext& ctx,
                              int layer = 0) {
  require_dims(static_cast<std::size_t>(W.cols()) == v.size(), "aa_affine input");
  require_dims(W.rows() == b.size(), "aa_affine bias");
  const detail::SymbolTable table(v);
  const auto ns = static_cast<Eigen::Index>(table.size());
  Matrix coef = Matrix::Zero(W.cols(), ns);
  for (std::size_t j = 0; j < v.size(); ++j)
    for (const auto& [col, a] : table.rows[j]) coef(static_cast<Eigen::Index>(j), col) = a;
  const BoundedProduct prod = bounded_product(W, coef);
  AffineVector out(static_cast<std::size_t>(W.rows()));
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    IntervalAccumulator center;
    center.lo = center.hi = b[i];
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      if (W(i, j) != 0.0) center.add_product(W(i, j), v[static_cast<std::size_t>(j)].center);
    AffineForm& f = out[static_cast<std::size_t>(i)];
    double err = 0.0;
    for (Eigen::Index s = 0; s < ns; ++s) {
      const double a = prod.value(i, s);
      if (a != 0.0) f.coeffs.emplace_back(table.ids[static_cast<std::size_t>(s)], a);
      err = rounding::add_up(err, prod.error(i, s));
    }
    const Interval c = center.value();
    f.center = c.mid();
    if (!c.is_point()) err = rounding::add_up(err, c.rad());
    absorb_error(f, err, ctx, layer);
  }
  return out;
}

// Coefficients of the ReLU approximation B(t) = b0 + c sum a_i t_i + b_new t_new.
struct ReluLinearization {
  enum class Kind { Identity, Zero, Crossing };
  Kind kind = Kind::Crossing;
  double S = 0;  // sum |a_i|
  double M = 0;  // a0 + S
  double tau = 0;
  double c = 0;
  double D_plus = 0;  // ReLU(A) - Btilde <= D_plus
  double D_minus = 0;  // ReLU(A) - Btilde >= D_minus
  double b0 = 0;
  double b_new = 0;
};

// With u = A(t) in [L, U], L < 0 < U and 0 <= c <= 1, ReLU(u) - c u lies in
// [0, max(-c L, (1 - c) U)]. For c = tau M / (2S) and tau = U / (U - L) this
// reproduces D_+ = M(1 - tau), D_- = c a0 - tau M / 2; the general form stays
// valid when rounding perturbs c or tau.
inline ReluLinearization relu_linearization(const AffineForm& f) {
  using namespace rounding;
  ReluLinearization r;
  double s_down = 0.0;
  double s_up = 0.0;
  for (const auto& [id, a] : f.coeffs) {
    s_down = add_down(s_down, std::fabs(a));
    s_up = add_up(s_up, std::fabs(a));
  }
  const double lower = sub_down(f.center, s_up);
  const double upper = add_up(f.center, s_up);
  r.S = s_up;
  r.M = f.center + s_up;
  if (lower >= 0) {
    r.kind = ReluLinearization::Kind::Identity;
    return r;
  }
  if (upper <= 0) {
    r.kind = ReluLinearization::Kind::Zero;
    return r;
  }
  r.kind = ReluLinearization::Kind::Crossing;
  const double two_s = 2.0 * s_up;
  r.tau = std::clamp(r.M / two_s, 0.0, 1.0);
  r.c = std::clamp(r.tau * r.M / two_s, 0.0, 1.0);
  const double btilde0 = 0.5 * r.tau * r.M;

  const double h = std::max(mul_up(r.c, -lower), mul_up(sub_up(1.0, r.c), upper));
  double ca0_lo, ca0_hi;
  mul_bounds(r.c, f.center, ca0_lo, ca0_hi);
  const double lo = ca0_lo;
  const double hi = add_up(ca0_hi, h);
  r.D_minus = sub_down(lo, btilde0);
  r.D_plus = sub_up(hi, btilde0);
  const Interval out = Interval::from_result(lo, hi);
  r.b0 = out.mid();
  r.b_new = out.rad();
  return r;
}

inline AffineForm aa_relu_scalar(const AffineForm& f, SymbolContext& ctx, int layer = 0) {
  const ReluLinearization lin = relu_linearization(f);
  if (lin.kind == ReluLinearization::Kind::Identity) return f;
  if (lin.kind == ReluLinearization::Kind::Zero) return AffineForm(0.0);
  AffineForm out(lin.b0);
  out.coeffs.reserve(f.coeffs.size() + 1);
  double err = lin.b_new;
  for (const auto& [id, a] : f.coeffs) {
    double lo, hi;
    rounding::mul_bounds(lin.c, a, lo, hi);
    const Interval iv(lo, hi);
    if (!iv.is_point()) err = rounding::add_up(err, iv.rad());
    const double m = iv.mid();
    if (m != 0.0) out.coeffs.emplace_back(id, m);
  }
  absorb_error(out, err, ctx, layer);
  return out;
}

inline AffineVector aa_relu(const AffineVector& v, SymbolContext& ctx, int layer = 0) {
  AffineVector out;
  out.reserve(v.size());
  for (const auto& f : v) out.push_back(aa_relu_scalar(f, ctx, layer));
  return out;
}

struct SoftmaxResult {
  AffineVector forms;
  IntervalVector direct;  // enclosure of softmax over the input set, independent of the forms
};

// softmax(x + L t) ~ softmax(x) + J(x) L t, with the second-order remainder
// bounded through d J_i / dz evaluated over the set.
inline SoftmaxResult aa_softmax_with_bounds(const AffineVector& v, SymbolContext& ctx, int layer = 0) {
  const std::size_t m = v.size();
  if (m < 2) throw ValidationError("softmax needs at least two entries");
  const detail::SymbolTable table(v);
  const auto n = static_cast<Eigen::Index>(table.size());

  softmax::Parametrization par;
  par.center.resize(static_cast<Eigen::Index>(m));
  par.generators = Matrix::Zero(static_cast<Eigen::Index>(m), n);
  for (std::size_t i = 0; i < m; ++i) {
    par.center[static_cast<Eigen::Index>(i)] = v[i].center;
    for (const auto& [col, a] : table.rows[i]) par.generators(static_cast<Eigen::Index>(i), col) = a;
  }

  const softmax::ProductBounds pb = softmax::product_bounds(par);
  IntervalVector offset(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double r = v[i].radius();
    offset[i] = Interval(-r, r);
  }
  const std::vector<double> remainder = softmax::taylor_remainder(pb, offset);

  const IntervalVector s0 = softmax::at_point({par.center.data(), m});
  const IntervalMatrix jac = softmax::jacobian(s0);

  SoftmaxResult res;
  res.forms.resize(m);
  res.direct = pb.s;
  std::vector<double> lo(table.size()), hi(table.size());
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(lo.begin(), lo.end(), 0.0);
    std::fill(hi.begin(), hi.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const Interval& jij = jac(i, j);
      for (const auto& [col, a] : table.rows[j]) {
        const Interval p = jij * Interval(a);
        lo[col] = rounding::add_down(lo[col], p.lo());
        hi[col] = rounding::add_up(hi[col], p.hi());
      }
    }
    AffineForm& f = res.forms[i];
    double err = detail::settle(lo, hi, table.ids, f.coeffs);
    f.center = s0[i].mid();
    err = rounding::add_up(err, s0[i].rad());
    err = rounding::add_up(err, remainder[i]);
    absorb_error(f, err, ctx, layer);
  }
  return res;
}

inline AffineVector aa_softmax(const AffineVector& v, SymbolContext& ctx, int layer = 0) {
  return aa_softmax_with_bounds(v, ctx, layer).forms;
}

// Caps the symbol count at `budget`: the symbols with the smallest total
// |coefficient| across entries are folded into one fresh symbol per entry.
inline AffineVector aa_condense(const AffineVector& v, std::size_t budget, SymbolContext& ctx, int layer = 0) {
  if (budget < v.size()) throw ValidationError("condense budget smaller than vector dimension");
  const detail::SymbolTable table(v);
  if (table.size() <= budget) return v;
  const std::size_t keep = budget - v.size();
  std::vector<double> mass(table.size(), 0.0);
  for (const auto& row : table.rows)
    for (const auto& [col, a] : row) mass[col] += std::fabs(a);
  std::vector<std::uint32_t> order(table.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return mass[a] > mass[b]; });
  std::vector<char> kept(table.size(), 0);
  for (std::size_t k = 0; k < keep; ++k) kept[order[k]] = 1;

  AffineVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i].center = v[i].center;
    double folded = 0.0;
    for (const auto& [col, a] : table.rows[i]) {
      if (kept[col]) out[i].coeffs.emplace_back(table.ids[col], a);
      else folded = rounding::add_up(folded, std::fabs(a));
    }
    absorb_error(out[i], folded, ctx, layer);
  }
  return out;
}

// One symbol per input coordinate with nonzero radius.
inline AffineVector aa_from_region(const InputRegion& region, SymbolContext& ctx) {
  AffineVector v(region.dim());
  for (std::size_t i = 0; i < region.dim(); ++i) {
    v[i].center = region.center[static_cast<Eigen::Index>(i)];
    const double r = region.radius[static_cast<Eigen::Index>(i)];
    if (r > 0) v[i].coeffs.emplace_back(ctx.fresh(-1), r);
  }
  return v;
}

struct Options {
  bool with_softmax = true;
  std::size_t condense_budget = 0;  // 0 = unlimited
};

struct Propagation {
  AffineVector forms;
  IntervalVector box;
  SymbolContext ctx;
};

inline Propagation aa_propagate(const NetworkSpec& spec, const InputRegion& region, const Options& opt = {}) {
  require_dims(region.dim() == spec.input_dim(), "region vs network input");
  Propagation p;
  p.forms = aa_from_region(region, p.ctx);
  std::optional<IntervalVector> softmax_direct;
  int layer = 0;
  for (const auto& l : spec.layers()) {
    if (auto d = std::get_if<DenseLayer>(&l)) {
      p.forms = aa_affine(d->W, d->b, p.forms, p.ctx, layer);
    } else if (auto c = std::get_if<Conv2DLayer>(&l)) {
      const DenseLayer dense = conv_to_dense(*c);
      p.forms = aa_affine(dense.W, dense.b, p.forms, p.ctx, layer);
    } else if (std::holds_alternative<ReluLayer>(l)) {
      p.forms = aa_relu(p.forms, p.ctx, layer);
    } else if (opt.with_softmax) {
      auto res = aa_softmax_with_bounds(p.forms, p.ctx, layer);
      p.forms = std::move(res.forms);
      softmax_direct = std::move(res.direct);
    }
    if (opt.condense_budget > 0)
      p.forms = aa_condense(p.forms, opt.condense_budget, p.ctx, layer);
    ++layer;
  }
  p.box = ranges(p.forms);
  if (softmax_direct) {
    for (std::size_t i = 0; i < p.box.dim(); ++i) {
      const Interval unit(0.0, 1.0);
      p.box[i] = intersect_enclosures(intersect_enclosures(p.box[i], unit), (*softmax_direct)[i]);
    }
  }
  return p;
}

inline BoundReport aa_forward(const NetworkSpec& spec, const InputRegion& region, bool with_softmax,
                              std::size_t condense_budget = 0) {
  Stopwatch sw;
  Propagation p = aa_propagate(spec, region, {with_softmax, condense_budget});
  BoundReport r(Method::AA, std::move(p.box));
  r.wall_time = sw.elapsed();
  r.metadata["softmax"] = with_softmax && spec.ends_with_softmax() ? "on" : "off";
  r.metadata["symbols"] = std::to_string(p.ctx.count());
  if (condense_budget > 0) r.metadata["condense_budget"] = std::to_string(condense_budget);
  return r;
}

}  // namespace certiprop::affine
