#pragma once

// Non-certified reference bounds: a sampled inner box and exact hulls of
// linear networks.

#include <cmath>
#include <cstdint>
#include <limits>

#include "certiprop/network.hpp"
#include "certiprop/parallel.hpp"
#include "certiprop/random.hpp"
#include "certiprop/report.hpp"

namespace certiprop::oracle {

// Hull of the images of n_samples uniform points of the region. Points are
// evaluated in long double and rounded to nearest, which keeps every image
// inside any certified box with double endpoints.
inline BoundReport lb_sample(const NetworkSpec& spec, const InputRegion& region, std::size_t n_samples,
                             std::uint64_t seed, unsigned threads = 1) {
  if (n_samples < 1) throw ValidationError("lb_sample needs at least one sample");
  require_dims(region.dim() == spec.input_dim(), "region vs network input");
  Stopwatch sw;
  const CounterRng rng(seed, 0x5a3b1e);
  const std::size_t n = region.dim();
  const std::size_t m = spec.output_dim();
  std::vector<double> images(n_samples * m);
  parallel_for(n_samples, threads, [&](std::size_t s) {
    std::vector<long double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double u = rng.uniform(static_cast<std::uint64_t>(s) * n + i);
      x[i] = static_cast<long double>(region.center[ii]) +
             static_cast<long double>(region.radius[ii]) * (2.0L * u - 1.0L);
    }
    const auto y = eval_point<long double>(spec, x);
    for (std::size_t o = 0; o < m; ++o) images[s * m + o] = static_cast<double>(y[o]);
  });
  std::vector<Interval> box(m);
  for (std::size_t o = 0; o < m; ++o) {
    double lo = images[o], hi = images[o];
    for (std::size_t s = 1; s < n_samples; ++s) {
      lo = std::min(lo, images[s * m + o]);
      hi = std::max(hi, images[s * m + o]);
    }
    box[o] = Interval(lo, hi);
  }
  BoundReport r(Method::LB, IntervalVector(std::move(box)));
  r.wall_time = sw.elapsed();
  r.metadata["samples"] = std::to_string(n_samples);
  r.metadata["seed"] = std::to_string(seed);
  return r;
}

template <typename Real>
struct ExactHull {
  std::vector<Real> lo;
  std::vector<Real> hi;
};

namespace detail {

inline void require_linear(const NetworkSpec& spec) {
  if (!spec.is_linear()) throw ValidationError("exact hull needs a network without nonlinear layers");
}

template <typename Real>
using RealMatrix = std::vector<std::vector<Real>>;

// Composed map x -> W x + b of a linear network, in Real.
template <typename Real>
void compose(const NetworkSpec& spec, RealMatrix<Real>& W, std::vector<Real>& b) {
  const std::size_t n = spec.input_dim();
  W.assign(n, std::vector<Real>(n, Real(0)));
  for (std::size_t i = 0; i < n; ++i) W[i][i] = Real(1);
  b.assign(n, Real(0));
  for (const auto& l : spec.layers()) {
    DenseLayer d = std::holds_alternative<DenseLayer>(l) ? std::get<DenseLayer>(l)
                                                         : conv_to_dense(std::get<Conv2DLayer>(l));
    const auto rows = static_cast<std::size_t>(d.W.rows());
    const auto inner = static_cast<std::size_t>(d.W.cols());
    RealMatrix<Real> nw(rows, std::vector<Real>(n, Real(0)));
    std::vector<Real> nb(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      nb[r] = Real(d.b[static_cast<Eigen::Index>(r)]);
      for (std::size_t k = 0; k < inner; ++k) {
        const double wk = d.W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
        if (wk == 0) continue;
        const Real w(wk);
        nb[r] += w * b[k];
        for (std::size_t c = 0; c < n; ++c) nw[r][c] += w * W[k][c];
      }
    }
    W = std::move(nw);
    b = std::move(nb);
  }
}

template <typename Real>
Real abs_value(const Real& v) {
  return v < Real(0) ? Real(-v) : v;
}

// Nearest double, then one step outward if it landed on the wrong side.
template <typename Real>
double round_down(const Real& v) {
  double d = static_cast<double>(v);
  if (Real(d) > v) d = std::nextafter(d, -std::numeric_limits<double>::infinity());
  return d;
}
template <typename Real>
double round_up(const Real& v) {
  double d = static_cast<double>(v);
  if (Real(d) < v) d = std::nextafter(d, std::numeric_limits<double>::infinity());
  return d;
}

}  // namespace detail

// mid = W_total c + b_total, rad = |W_total| r, all in Real.
template <typename Real = long double>
ExactHull<Real> exact_hull_linear_real(const NetworkSpec& spec, const InputRegion& region) {
  detail::require_linear(spec);
  require_dims(region.dim() == spec.input_dim(), "region vs network input");
  detail::RealMatrix<Real> W;
  std::vector<Real> b;
  detail::compose<Real>(spec, W, b);
  ExactHull<Real> h;
  for (std::size_t r = 0; r < W.size(); ++r) {
    Real mid = b[r], rad(0);
    for (std::size_t c = 0; c < region.dim(); ++c) {
      const auto cc = static_cast<Eigen::Index>(c);
      mid += W[r][c] * Real(region.center[cc]);
      rad += detail::abs_value(W[r][c]) * Real(region.radius[cc]);
    }
    h.lo.push_back(mid - rad);
    h.hi.push_back(mid + rad);
  }
  return h;
}

// Hull over all 2^dim corners, each corner pushed through the layers in Real.
template <typename Real = long double>
ExactHull<Real> exact_hull_corners_real(const NetworkSpec& spec, const InputRegion& region) {
  detail::require_linear(spec);
  require_dims(region.dim() == spec.input_dim(), "region vs network input");
  const std::size_t n = region.dim();
  if (n > 20) throw ValidationError("corner enumeration needs input dim <= 20");
  ExactHull<Real> h;
  std::vector<Real> x(n);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const Real c(region.center[ii]), r(region.radius[ii]);
      x[i] = (mask >> i) & 1 ? Real(c + r) : Real(c - r);
    }
    const auto y = eval_point<Real>(spec, x);
    if (mask == 0) {
      h.lo = y;
      h.hi = y;
      continue;
    }
    for (std::size_t o = 0; o < y.size(); ++o) {
      if (y[o] < h.lo[o]) h.lo[o] = y[o];
      if (y[o] > h.hi[o]) h.hi[o] = y[o];
    }
  }
  return h;
}

template <typename Real>
BoundReport to_report(const ExactHull<Real>& h) {
  std::vector<Interval> box;
  for (std::size_t i = 0; i < h.lo.size(); ++i) box.emplace_back(detail::round_down(h.lo[i]), detail::round_up(h.hi[i]));
  return BoundReport(Method::EXACT, IntervalVector(std::move(box)));
}

template <typename Real = long double>
BoundReport exact_hull_linear(const NetworkSpec& spec, const InputRegion& region) {
  return to_report(exact_hull_linear_real<Real>(spec, region));
}

template <typename Real = long double>
BoundReport exact_hull_corners(const NetworkSpec& spec, const InputRegion& region) {
  return to_report(exact_hull_corners_real<Real>(spec, region));
}

}  // namespace certiprop::oracle
