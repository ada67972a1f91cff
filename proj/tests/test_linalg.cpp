#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace certiprop;
using testing_support::Rational;
using testing_support::exact;

namespace {

using RMatrix = std::vector<std::vector<Rational>>;

RMatrix to_rational(const Matrix& m) {
  RMatrix r(m.rows(), std::vector<Rational>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[i][j] = exact(m(i, j));
  return r;
}

// Gauss-Jordan elimination in exact arithmetic.
RMatrix rational_inverse(RMatrix a) {
  const std::size_t n = a.size();
  RMatrix inv(n, std::vector<Rational>(n, 0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    while (a[p][c] == 0) ++p;
    std::swap(a[p], a[c]);
    std::swap(inv[p], inv[c]);
    const Rational d = a[c][c];
    for (std::size_t j = 0; j < n; ++j) {
      a[c][j] /= d;
      inv[c][j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c || a[r][c] == 0) continue;
      const Rational f = a[r][c];
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] -= f * a[c][j];
        inv[r][j] -= f * inv[c][j];
      }
    }
  }
  return inv;
}

}  // namespace

TEST(Linalg, BoundedProductEnclosesExactProduct) {
  std::mt19937_64 gen(21);
  for (int t = 0; t < 40; ++t) {
    const Eigen::Index r = 1 + t % 5, k = 1 + (t * 7) % 13, c = 1 + (t * 3) % 4;
    Matrix a(r, k), b(k, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < k; ++j) a(i, j) = testing_support::random_double(gen, -40, 40);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < c; ++j) b(i, j) = testing_support::random_double(gen, -40, 40);
    const BoundedProduct p = bounded_product(a, b);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) {
        Rational s = 0;
        for (Eigen::Index l = 0; l < k; ++l) s += exact(a(i, l)) * exact(b(l, j));
        const Rational diff = s - exact(p.value(i, j));
        EXPECT_LE(diff < 0 ? Rational(-diff) : diff, exact(p.error(i, j)));
      }
  }
}

TEST(Linalg, BoundedProductCoversSubnormalProducts) {
  Matrix a(1, 2), b(2, 1);
  a << 0x1p-540, 0x1p-540;
  b << 0x1.8p-540, -0x1p-541;
  const BoundedProduct p = bounded_product(a, b);
  const Rational s = exact(a(0, 0)) * exact(b(0, 0)) + exact(a(0, 1)) * exact(b(1, 0));
  const Rational diff = s - exact(p.value(0, 0));
  EXPECT_LE(diff < 0 ? Rational(-diff) : diff, exact(p.error(0, 0)));
}

TEST(Linalg, OverflowInProductIsNumericError) {
  Matrix a(1, 2), b(2, 1);
  a << 1e300, 1e300;
  b << 1e10, 1e10;
  EXPECT_THROW(bounded_product(a, b), NumericError);
}

TEST(Linalg, VerifiedInverseEnclosesRationalInverse) {
  std::mt19937_64 gen(22);
  for (int t = 0; t < 30; ++t) {
    const Eigen::Index n = 2 + t % 4;
    const Matrix m = testing_support::random_matrix(gen, n, n) + 2.0 * Matrix::Identity(n, n);
    const Matrix y = m.inverse();
    const auto beta = verify_inverse(y, m);
    ASSERT_TRUE(beta.has_value());
    const RMatrix inv = rational_inverse(to_rational(m));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const Rational d = inv[i][j] - exact(y(i, j));
        EXPECT_LE(d < 0 ? Rational(-d) : d, exact(*beta));
      }
  }
}

TEST(Linalg, SingularMatrixFailsVerification) {
  Matrix m(2, 2);
  m << 1, 2, 2, 4;
  Matrix y = Matrix::Identity(2, 2);
  EXPECT_FALSE(verify_inverse(y, m).has_value());
  EXPECT_THROW(verify_inverse(Matrix::Identity(2, 3), Matrix::Identity(3, 2)), DimensionError);
}
