#pragma once

// Point-matrix products with rigorous a-priori error bounds, and verified
// enclosures of matrix inverses.

#include <Eigen/Dense>
#include <cfloat>
#include <cmath>
#include <optional>

#include "certiprop/errors.hpp"
#include "certiprop/interval.hpp"
#include "certiprop/rounding.hpp"

namespace certiprop {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// value = fl(A*B); |A*B - value| <= error entrywise.
struct BoundedProduct {
  Matrix value;
  Matrix error;
};

// Coefficient c with |fl(sum) - sum| <= c * fl(sum |a_i b_i|) for n-term dot
// products in any summation order, fma or not: c >= n*u / (1 - 2*n*u).
inline double dot_error_factor(Eigen::Index n) {
  const double u = 0x1p-53;
  return rounding::next_up(1.01 * static_cast<double>(n + 1) * u);
}

inline BoundedProduct bounded_product(const Matrix& a, const Matrix& b) {
  require_dims(a.cols() == b.rows(), "bounded_product");
  BoundedProduct p;
  p.value = a * b;
  const Matrix abs_prod = a.cwiseAbs() * b.cwiseAbs();
  const double c = dot_error_factor(a.cols());
  const double underflow = rounding::next_up(2.0 * static_cast<double>(a.cols() + 1) * 0x1p-1074);
  p.error.resize(p.value.rows(), p.value.cols());
  for (Eigen::Index j = 0; j < p.value.cols(); ++j)
    for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
      if (!std::isfinite(p.value(i, j)) || !std::isfinite(abs_prod(i, j)))
        throw NumericError("overflow in matrix product");
      p.error(i, j) = rounding::add_up(rounding::mul_up(c, rounding::next_up(abs_prod(i, j))), underflow);
    }
  return p;
}

inline BoundedProduct bounded_product(const Matrix& a, const Vector& v) {
  const Matrix vm = v;
  return bounded_product(a, vm);
}

// Upper bound on the infinity norm of a nonnegative matrix.
inline double norm_inf_up(const Matrix& m) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) s = rounding::add_up(s, std::fabs(m(i, j)));
    best = std::max(best, s);
  }
  return best;
}

// Given an approximate inverse y of the square matrix m, returns beta with
// |m^{-1} - y| <= beta entrywise, or nullopt when ||I - y m|| >= 1/2 could not
// be excluded (m singular or too ill-conditioned for y).
inline std::optional<double> verify_inverse(const Matrix& y, const Matrix& m) {
  require_dims(m.rows() == m.cols() && y.rows() == m.cols() && y.cols() == m.rows(), "verify_inverse");
  const BoundedProduct ym = bounded_product(y, m);
  const Eigen::Index n = m.rows();
  Matrix e_abs(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = (i == j ? 1.0 : 0.0);
      const double lo = rounding::sub_down(d, ym.value(i, j));
      const double hi = rounding::sub_up(d, ym.value(i, j));
      e_abs(i, j) = rounding::add_up(std::max(std::fabs(lo), std::fabs(hi)), ym.error(i, j));
    }
  const double e = norm_inf_up(e_abs);
  if (!(e < 0.5)) return std::nullopt;
  const double ny = norm_inf_up(y.cwiseAbs());
  return rounding::div_up(rounding::mul_up(e, ny), rounding::sub_down(1.0, e));
}

}  // namespace certiprop
