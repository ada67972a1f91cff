#pragma once

// Doubleton arithmetic: sets x + C r + Q q with point matrices C, Q and
// interval vectors r, q containing zero.
//
// C r carries the image of the input box, Q q accumulates linearization and
// rounding errors in a frame chosen at every nonlinear layer.

#include <numeric>
#include <string>
#include <variant>

#include "certiprop/interval.hpp"
#include "certiprop/linalg.hpp"
#include "certiprop/network.hpp"
#include "certiprop/report.hpp"
#include "certiprop/softmax_bounds.hpp"

namespace certiprop::doubleton {

using namespace certiprop::rounding;

enum class Strategy { S1, S2, S3, Hybrid };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::S1: return "s1";
    case Strategy::S2: return "s2";
    case Strategy::S3: return "s3";
    case Strategy::Hybrid: return "hybrid";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "s1") return Strategy::S1;
  if (s == "s2") return Strategy::S2;
  if (s == "s3") return Strategy::S3;
  if (s == "hybrid") return Strategy::Hybrid;
  throw ValidationError("unknown doubleton strategy '" + s + "'");
}

struct Doubleton {
  Vector x;
  Matrix C;
  IntervalVector r;
  Matrix Q;
  IntervalVector q;

  std::size_t dim() const { return static_cast<std::size_t>(x.size()); }

  // Outward-rounded row-wise evaluation of x + C r + Q q.
  IntervalVector hull() const {
    IntervalVector out(dim());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      IntervalAccumulator acc;
      acc.lo = acc.hi = x[i];
      for (Eigen::Index j = 0; j < C.cols(); ++j)
        if (C(i, j) != 0) acc.add(iv_scale(C(i, j), r[static_cast<std::size_t>(j)]));
      for (Eigen::Index j = 0; j < Q.cols(); ++j)
        if (Q(i, j) != 0) acc.add(iv_scale(Q(i, j), q[static_cast<std::size_t>(j)]));
      out[static_cast<std::size_t>(i)] = acc.value();
    }
    return out;
  }

  // Point of the set for parameters rho in r and kappa in q (not certified).
  Vector point(const Vector& rho, const Vector& kappa) const { return x + C * rho + Q * kappa; }
};

inline Doubleton db_from_region(const InputRegion& region) {
  const auto n = static_cast<Eigen::Index>(region.dim());
  Doubleton d;
  d.x = region.center;
  d.C = region.radius.asDiagonal();
  d.r = IntervalVector(region.dim(), Interval(-1.0, 1.0));
  d.Q = Matrix::Identity(n, n);
  d.q = IntervalVector(region.dim(), Interval(0.0, 0.0));
  return d;
}

namespace detail {

// Upper bound on rows of err * mag(v).
inline std::vector<double> error_rows(const Matrix& err, const IntervalVector& v) {
  std::vector<double> out(static_cast<std::size_t>(err.rows()), 0.0);
  for (Eigen::Index i = 0; i < err.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < err.cols(); ++j) {
      const double m = v[static_cast<std::size_t>(j)].mag();
      if (m != 0) s = add_up(s, mul_up(err(i, j), m));
    }
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

// Appends diag(err) as new Q columns with [-1, 1] parameters (rows with zero error skipped).
inline void append_error_columns(Matrix& Q, IntervalVector& q, const std::vector<double>& err) {
  const auto extra = static_cast<Eigen::Index>(std::count_if(err.begin(), err.end(), [](double e) { return e > 0; }));
  if (extra == 0) return;
  const Eigen::Index k = Q.cols();
  Matrix grown = Matrix::Zero(Q.rows(), k + extra);
  grown.leftCols(k) = Q;
  std::vector<Interval> qe(q.begin(), q.end());
  Eigen::Index col = k;
  for (std::size_t i = 0; i < err.size(); ++i) {
    if (err[i] <= 0) continue;
    grown(static_cast<Eigen::Index>(i), col++) = err[i];
    qe.emplace_back(-1.0, 1.0);
  }
  Q = std::move(grown);
  q = IntervalVector(std::move(qe));
}

}  // namespace detail

inline Doubleton db_affine(const Matrix& W, const Vector& b, const Doubleton& X) {
  require_dims(static_cast<std::size_t>(W.cols()) == X.dim(), "db_affine input");
  require_dims(W.rows() == b.size(), "db_affine bias");
  Doubleton out;
  const BoundedProduct wc = bounded_product(W, X.C);
  const BoundedProduct wq = bounded_product(W, X.Q);
  std::vector<double> err = detail::error_rows(wc.error, X.r);
  const std::vector<double> err_q = detail::error_rows(wq.error, X.q);
  out.x.resize(W.rows());
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    IntervalAccumulator acc;
    acc.lo = acc.hi = b[i];
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      if (W(i, j) != 0) acc.add_product(W(i, j), X.x[j]);
    const Interval xi = acc.value();
    out.x[i] = xi.mid();
    auto& e = err[static_cast<std::size_t>(i)];
    e = add_up(e, err_q[static_cast<std::size_t>(i)]);
    if (!xi.is_point()) e = add_up(e, xi.rad());
  }
  out.C = wc.value;
  out.r = X.r;
  out.Q = wq.value;
  out.q = X.q;
  detail::append_error_columns(out.Q, out.q, err);
  return out;
}

// f(z) in x0 + L (z - x) + e for z in the doubleton.
struct Linearization {
  Vector x0;
  Matrix L;
  IntervalVector e;
};

struct RecoordResult {
  Matrix Q_new;
  Matrix A;  // approximate left inverse of Q_new
  double A_radius = 0.0;  // the exact inverse lies in A +- A_radius entrywise
  IntervalVector q_new;
  std::string used;  // "s1", "s2", "s3" or "identity"
};

// Column order for pivoted QR over the generators [LQ | Id]: LQ column j is
// weighted by ||LQ_j||_2 * width(q_j), identity column i by width(Delta_i).
// Stable sort, decreasing.
inline std::vector<std::size_t> db_strategy3_permutation(const Matrix& LQ, const IntervalVector& q,
                                                         const IntervalVector& delta) {
  require_dims(static_cast<std::size_t>(LQ.cols()) == q.dim(), "strategy3 q");
  require_dims(static_cast<std::size_t>(LQ.rows()) == delta.dim(), "strategy3 delta");
  const std::size_t k = q.dim();
  std::vector<double> metric(k + delta.dim());
  for (std::size_t j = 0; j < k; ++j) metric[j] = LQ.col(static_cast<Eigen::Index>(j)).norm() * q[j].width();
  for (std::size_t i = 0; i < delta.dim(); ++i) metric[k + i] = delta[i].width();
  std::vector<std::size_t> perm(metric.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(), [&](auto a, auto b) { return metric[a] > metric[b]; });
  return perm;
}

namespace detail {

// [A] v for [A] = A +- beta.
inline IntervalVector apply_inverse(const Matrix& A, double beta, const IntervalVector& v) {
  IntervalVector out(static_cast<std::size_t>(A.rows()));
  double vmag = 0.0;
  for (const auto& iv : v) vmag = add_up(vmag, iv.mag());
  const double extra = mul_up(beta, vmag);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    IntervalAccumulator acc;
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      if (A(i, j) != 0) acc.add(iv_scale(A(i, j), v[static_cast<std::size_t>(j)]));
    acc.lo = sub_down(acc.lo, extra);
    acc.hi = add_up(acc.hi, extra);
    out[static_cast<std::size_t>(i)] = acc.value();
  }
  return out;
}

// ([A] LQ) q, with the matrix product formed before it meets q.
inline IntervalVector apply_transformed(const Matrix& A, double beta, const Matrix& LQ, const IntervalVector& q) {
  const BoundedProduct alq = bounded_product(A, LQ);
  IntervalVector out(static_cast<std::size_t>(A.rows()));
  std::vector<double> colabs(static_cast<std::size_t>(LQ.cols()), 0.0);
  for (Eigen::Index j = 0; j < LQ.cols(); ++j)
    for (Eigen::Index l = 0; l < LQ.rows(); ++l) colabs[j] = add_up(colabs[j], std::fabs(LQ(l, j)));
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    IntervalAccumulator acc;
    double extra = 0.0;
    for (Eigen::Index j = 0; j < LQ.cols(); ++j) {
      const Interval& qj = q[static_cast<std::size_t>(j)];
      const double m = qj.mag();
      if (m == 0) continue;
      if (alq.value(i, j) != 0) acc.add(iv_scale(alq.value(i, j), qj));
      extra = add_up(extra, mul_up(add_up(alq.error(i, j), mul_up(beta, colabs[j])), m));
    }
    acc.lo = sub_down(acc.lo, extra);
    acc.hi = add_up(acc.hi, extra);
    out[static_cast<std::size_t>(i)] = acc.value();
  }
  return out;
}

inline IntervalVector add(const IntervalVector& a, const IntervalVector& b) {
  IntervalVector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline std::optional<RecoordResult> try_strategy1(const Matrix& LQ, const IntervalVector& q,
                                                  const IntervalVector& delta) {
  if (LQ.rows() != LQ.cols() || LQ.rows() == 0) return std::nullopt;
  Eigen::PartialPivLU<Matrix> lu(LQ);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-8)) return std::nullopt;
  Matrix Y = lu.inverse();
  if (!Y.allFinite()) return std::nullopt;
  const auto beta = verify_inverse(Y, LQ);
  if (!beta) return std::nullopt;
  RecoordResult res;
  res.Q_new = LQ;
  res.A = std::move(Y);
  res.A_radius = *beta;
  // A LQ = Id exactly for the true inverse, so q passes through unchanged.
  res.q_new = add(q, apply_inverse(res.A, res.A_radius, delta));
  res.used = "s1";
  return res;
}

inline RecoordResult orthogonal_frame(Matrix basis, const Matrix& LQ, const IntervalVector& q,
                                      const IntervalVector& delta, const char* used) {
  const Eigen::Index d = LQ.rows();
  Eigen::HouseholderQR<Matrix> qr(basis);
  Matrix Qt = qr.householderQ() * Matrix::Identity(d, d);
  Matrix Y = Qt.transpose();
  const auto beta = verify_inverse(Y, Qt);
  if (!beta) throw NumericError("orthogonal frame failed verification");
  RecoordResult res;
  res.Q_new = std::move(Qt);
  res.A = std::move(Y);
  res.A_radius = *beta;
  res.q_new = add(apply_transformed(res.A, res.A_radius, LQ, q), apply_inverse(res.A, res.A_radius, delta));
  res.used = used;
  return res;
}

}  // namespace detail

inline RecoordResult recoord_identity(const Matrix& LQ, const IntervalVector& q, const IntervalVector& delta) {
  const Eigen::Index d = LQ.rows();
  RecoordResult res;
  res.Q_new = Matrix::Identity(d, d);
  res.A = Matrix::Identity(d, d);
  res.q_new = detail::add(detail::apply_transformed(res.A, 0.0, LQ, q), delta);
  res.used = "identity";
  return res;
}

// Strategy 1: Q~ = LQ, A = (LQ)^{-1}. Throws SingularMatrixError when LQ is
// not square or not verifiably invertible.
inline RecoordResult recoord_strategy1(const Matrix& LQ, const IntervalVector& q, const IntervalVector& delta) {
  auto r = detail::try_strategy1(LQ, q, delta);
  if (!r) throw SingularMatrixError("strategy 1: LQ is singular, ill-conditioned or not square");
  return std::move(*r);
}

// Strategy 2: Q~ from the QR factorization of the leading block of LQ.
inline RecoordResult recoord_strategy2(const Matrix& LQ, const IntervalVector& q, const IntervalVector& delta) {
  const Eigen::Index d = LQ.rows();
  Matrix basis = LQ.cols() >= d ? Matrix(LQ.leftCols(d)) : LQ;
  return detail::orthogonal_frame(std::move(basis), LQ, q, delta, "s2");
}

// Strategy 3: QR of the leading columns of the width-scaled generators after pivoting.
inline RecoordResult recoord_strategy3(const Matrix& LQ, const IntervalVector& q, const IntervalVector& delta) {
  const Eigen::Index d = LQ.rows();
  const Eigen::Index k = LQ.cols();
  const auto perm = db_strategy3_permutation(LQ, q, delta);
  Matrix basis(d, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const std::size_t src = perm[static_cast<std::size_t>(c)];
    if (src < static_cast<std::size_t>(k)) {
      basis.col(c) = LQ.col(static_cast<Eigen::Index>(src)) * q[src].rad();
    } else {
      basis.col(c).setZero();
      const auto row = static_cast<Eigen::Index>(src - static_cast<std::size_t>(k));
      basis(row, c) = delta[static_cast<std::size_t>(row)].rad();
    }
  }
  return detail::orthogonal_frame(std::move(basis), LQ, q, delta, "s3");
}

inline RecoordResult recoordinate(const Matrix& LQ, const IntervalVector& q, const IntervalVector& delta,
                                  Strategy strategy) {
  switch (strategy) {
    case Strategy::S1: return recoord_strategy1(LQ, q, delta);
    case Strategy::S2: return recoord_strategy2(LQ, q, delta);
    case Strategy::S3: return recoord_strategy3(LQ, q, delta);
    case Strategy::Hybrid:
      if (auto r = detail::try_strategy1(LQ, q, delta)) return std::move(*r);
      return recoord_strategy3(LQ, q, delta);
  }
  throw ValidationError("unknown strategy");
}

struct NonlinearResult {
  Doubleton X;
  std::string used;
};

// Rewrites f(X) as x~ + (LC) r + Q~ q~ with x~ = x0 + mid(e).
// Under `fallback_identity`, a Strategy 1 failure uses the identity frame
// instead of throwing.
inline NonlinearResult db_nonlinear_ex(const Doubleton& X, const Linearization& lin, Strategy strategy,
                                       bool fallback_identity = false) {
  const auto d = lin.x0.size();
  require_dims(lin.L.rows() == d && lin.e.dim() == static_cast<std::size_t>(d), "linearization output");
  require_dims(static_cast<std::size_t>(lin.L.cols()) == X.dim(), "linearization input");

  IntervalVector delta(static_cast<std::size_t>(d));
  Vector xt(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Interval& ei = lin.e[static_cast<std::size_t>(i)];
    const double me = ei.mid();
    IntervalAccumulator acc;
    acc.lo = acc.hi = lin.x0[i];
    acc.add(Interval(me));
    const Interval xi = acc.value();
    xt[i] = xi.mid();
    const double slack = xi.is_point() ? 0.0 : xi.rad();
    delta[static_cast<std::size_t>(i)] =
        Interval::from_result(sub_down(sub_down(ei.lo(), me), slack), add_up(sub_up(ei.hi(), me), slack));
  }

  const BoundedProduct lc = bounded_product(lin.L, X.C);
  const BoundedProduct lq = bounded_product(lin.L, X.Q);
  const auto err_c = detail::error_rows(lc.error, X.r);
  const auto err_q = detail::error_rows(lq.error, X.q);
  for (std::size_t i = 0; i < delta.dim(); ++i) {
    const double e = add_up(err_c[i], err_q[i]);
    if (e > 0) delta[i] = Interval::from_result(sub_down(delta[i].lo(), e), add_up(delta[i].hi(), e));
  }

  RecoordResult rc;
  if (strategy == Strategy::S1 && fallback_identity) {
    if (auto r = detail::try_strategy1(lq.value, X.q, delta)) rc = std::move(*r);
    else rc = recoord_identity(lq.value, X.q, delta);
  } else {
    rc = recoordinate(lq.value, X.q, delta, strategy);
  }

  NonlinearResult out;
  out.X.x = std::move(xt);
  out.X.C = lc.value;
  out.X.r = X.r;
  out.X.Q = std::move(rc.Q_new);
  out.X.q = std::move(rc.q_new);
  out.used = rc.used;
  return out;
}

inline Doubleton db_nonlinear(const Doubleton& X, const Linearization& lin, Strategy strategy) {
  return db_nonlinear_ex(X, lin, strategy).X;
}

// Per coordinate: identity on nonnegative hulls, zero on nonpositive ones,
// otherwise slope hi/(hi-lo) with ReLU(z) - c z in [0, max(-c lo, (1-c) hi)].
inline Linearization db_relu_linearize(const Doubleton& X) {
  const IntervalVector h = X.hull();
  const auto n = static_cast<Eigen::Index>(X.dim());
  Linearization lin;
  lin.x0 = Vector::Zero(n);
  lin.L = Matrix::Zero(n, n);
  lin.e = IntervalVector(X.dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Interval& hi = h[static_cast<std::size_t>(i)];
    if (hi.lo() >= 0) {
      lin.x0[i] = X.x[i];
      lin.L(i, i) = 1.0;
      continue;
    }
    if (hi.hi() <= 0) continue;
    const double c = std::clamp(hi.hi() / (hi.hi() - hi.lo()), 0.0, 1.0);
    const double dev = std::max(mul_up(c, -hi.lo()), mul_up(sub_up(1.0, c), hi.hi()));
    double cx_lo, cx_hi;
    mul_bounds(c, X.x[i], cx_lo, cx_hi);
    const double x0 = c * X.x[i];
    lin.x0[i] = x0;
    lin.L(i, i) = c;
    lin.e[static_cast<std::size_t>(i)] = Interval::from_result(sub_down(cx_lo, x0), add_up(sub_up(cx_hi, x0), dev));
  }
  return lin;
}

// First-order expansion at the doubleton center with the second-order
// remainder bounded over the interval hull.
inline Linearization db_softmax_linearize(const Doubleton& X) {
  const std::size_t m = X.dim();
  if (m < 2) throw ValidationError("softmax needs at least two entries");
  const IntervalVector h = X.hull();
  IntervalVector offset(m);
  softmax::Parametrization par;
  par.center.resize(static_cast<Eigen::Index>(m));
  par.generators = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    offset[i] = Interval::from_result(sub_down(h[i].lo(), X.x[ii]), sub_up(h[i].hi(), X.x[ii]));
    par.center[ii] = h[i].mid();
    par.generators(ii, ii) = h[i].rad();
  }
  const softmax::ProductBounds pb = softmax::product_bounds(par);
  const std::vector<double> remainder = softmax::taylor_remainder(pb, offset);
  const IntervalVector s0 = softmax::at_point({X.x.data(), m});
  const IntervalMatrix jac = softmax::jacobian(s0);

  Linearization lin;
  lin.x0.resize(static_cast<Eigen::Index>(m));
  lin.L.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  lin.e = IntervalVector(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    lin.x0[ii] = s0[i].mid();
    double err = add_up(s0[i].rad(), remainder[i]);
    for (std::size_t j = 0; j < m; ++j) {
      const Interval& jij = jac(i, j);
      lin.L(ii, static_cast<Eigen::Index>(j)) = jij.mid();
      if (!jij.is_point()) err = add_up(err, mul_up(jij.rad(), offset[j].mag()));
    }
    lin.e[i] = Interval(-err, err);
  }
  return lin;
}

struct Propagation {
  Doubleton X;
  IntervalVector box;
  std::map<std::string, int> frames_used;
};

inline Propagation db_propagate(const NetworkSpec& spec, const InputRegion& region, Strategy strategy,
                                bool with_softmax) {
  require_dims(region.dim() == spec.input_dim(), "region vs network input");
  Propagation p;
  p.X = db_from_region(region);
  std::optional<IntervalVector> softmax_direct;
  for (const auto& l : spec.layers()) {
    if (auto d = std::get_if<DenseLayer>(&l)) {
      p.X = db_affine(d->W, d->b, p.X);
    } else if (auto c = std::get_if<Conv2DLayer>(&l)) {
      const DenseLayer dense = conv_to_dense(*c);
      p.X = db_affine(dense.W, dense.b, p.X);
    } else if (std::holds_alternative<ReluLayer>(l)) {
      auto res = db_nonlinear_ex(p.X, db_relu_linearize(p.X), strategy, true);
      p.X = std::move(res.X);
      ++p.frames_used[res.used];
    } else if (with_softmax) {
      softmax_direct = softmax::monotone_box(p.X.hull());
      auto res = db_nonlinear_ex(p.X, db_softmax_linearize(p.X), strategy, true);
      p.X = std::move(res.X);
      ++p.frames_used[res.used];
    }
  }
  p.box = p.X.hull();
  if (softmax_direct) {
    for (std::size_t i = 0; i < p.box.dim(); ++i)
      p.box[i] = intersect_enclosures(intersect_enclosures(p.box[i], Interval(0.0, 1.0)), (*softmax_direct)[i]);
  }
  return p;
}

inline BoundReport db_forward(const NetworkSpec& spec, const InputRegion& region, Strategy strategy,
                              bool with_softmax) {
  Stopwatch sw;
  Propagation p = db_propagate(spec, region, strategy, with_softmax);
  BoundReport r(Method::DA, std::move(p.box));
  r.wall_time = sw.elapsed();
  r.metadata["softmax"] = with_softmax && spec.ends_with_softmax() ? "on" : "off";
  r.metadata["strategy"] = strategy_name(strategy);
  std::string frames;
  for (const auto& [k, v] : p.frames_used) frames += (frames.empty() ? "" : ",") + k + ":" + std::to_string(v);
  r.metadata["frames"] = frames;
  return r;
}

}  // namespace certiprop::doubleton
