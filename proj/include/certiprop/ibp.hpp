#pragma once

// Interval bound propagation: the box is re-wrapped after every layer.

#include <variant>

#include "certiprop/interval.hpp"
#include "certiprop/linalg.hpp"
#include "certiprop/network.hpp"
#include "certiprop/report.hpp"
#include "certiprop/softmax_bounds.hpp"

namespace certiprop::ibp {

// Smallest box around W x + b for x in the box: W mid(x) + b +- |W| rad(x).
inline IntervalVector ibp_affine(const Matrix& W, const Vector& b, const IntervalVector& x) {
  require_dims(static_cast<std::size_t>(W.cols()) == x.dim(), "ibp_affine input");
  require_dims(W.rows() == b.size(), "ibp_affine bias");
  const std::size_t n = x.dim();
  std::vector<double> m(n), r(n);
  for (std::size_t j = 0; j < n; ++j) {
    m[j] = x[j].mid();
    r[j] = x[j].rad();
  }
  IntervalVector out(static_cast<std::size_t>(W.rows()));
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    IntervalAccumulator center;
    center.lo = center.hi = b[i];
    double radius = 0.0;
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      const double w = W(i, j);
      if (w == 0) continue;
      center.add_product(w, m[j]);
      radius = rounding::add_up(radius, rounding::mul_up(std::fabs(w), r[j]));
    }
    out[i] = Interval::from_result(rounding::sub_down(center.lo, radius), rounding::add_up(center.hi, radius));
  }
  return out;
}

inline IntervalVector ibp_relu(const IntervalVector& x) {
  IntervalVector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = Interval(std::max(x[i].lo(), 0.0), std::max(x[i].hi(), 0.0));
  return out;
}

inline IntervalVector ibp_softmax(const IntervalVector& x) { return softmax::monotone_box(x); }

inline BoundReport ibp_forward(const NetworkSpec& spec, const InputRegion& region, bool with_softmax) {
  require_dims(region.dim() == spec.input_dim(), "region vs network input");
  Stopwatch sw;
  IntervalVector box = region.box();
  for (const auto& l : spec.layers()) {
    if (auto d = std::get_if<DenseLayer>(&l)) {
      box = ibp_affine(d->W, d->b, box);
    } else if (auto c = std::get_if<Conv2DLayer>(&l)) {
      const DenseLayer dense = conv_to_dense(*c);
      box = ibp_affine(dense.W, dense.b, box);
    } else if (std::holds_alternative<ReluLayer>(l)) {
      box = ibp_relu(box);
    } else if (with_softmax) {
      box = ibp_softmax(box);
    }
  }
  BoundReport r(Method::IBP, std::move(box));
  r.wall_time = sw.elapsed();
  r.metadata["softmax"] = with_softmax && spec.ends_with_softmax() ? "on" : "off";
  return r;
}

}  // namespace certiprop::ibp
