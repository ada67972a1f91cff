#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

using namespace certiprop;
using namespace certiprop::experiments;

TEST(Haar, Orthogonal) {
  for (std::size_t n : {1u, 2u, 7u, 64u}) {
    const Matrix u = haar_orthogonal(n, 17 + n);
    const auto nn = static_cast<Eigen::Index>(n);
    EXPECT_LT((u.transpose() * u - Matrix::Identity(nn, nn)).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index i = 0; i < nn; ++i) EXPECT_NEAR(u.row(i).norm(), 1.0, 1e-12);
  }
  const Matrix one = haar_orthogonal(1, 3);
  EXPECT_EQ(std::fabs(one(0, 0)), 1.0);
  EXPECT_TRUE((haar_orthogonal(5, 9).array() == haar_orthogonal(5, 9).array()).all());
}

TEST(Haar, FirstColumnIsUniformOnSphere) {
  // Sign fixing makes every entry symmetric with E[u_ij^2] = 1/n.
  const int trials = 4000;
  double m = 0, m2 = 0;
  for (int t = 0; t < trials; ++t) {
    const Matrix u = haar_orthogonal(4, 1000 + t);
    m += u(0, 0) / trials;
    m2 += u(0, 0) * u(0, 0) / trials;
  }
  EXPECT_NEAR(m, 0.0, 0.03);
  EXPECT_NEAR(m2, 0.25, 0.02);
}

TEST(L1Moments, ClosedForms) {
  EXPECT_EQ(expected_r(3), 1.5);
  EXPECT_NEAR(expected_r(2), 4.0 / std::numbers::pi, 1e-15);
  for (std::size_t n : {10u, 50u, 100u, 1000u, 5000u})
    EXPECT_LT(std::fabs(expected_r(n) - std::sqrt(2.0 * n / std::numbers::pi)), 1.0 / std::sqrt(double(n)));
  // Continuity between the recurrence and the log-Gamma branch.
  EXPECT_NEAR(expected_r(2000), 3 * expected_r(2001) - 3 * expected_r(2002) + expected_r(2003), 1e-7);
  // n = 3 by hand: E|V_1 V_2| = 2 / (3 pi), so E(R^2) = 1 + 4/pi.
  EXPECT_NEAR(expected_r2(3), 1.0 + 4.0 / std::numbers::pi, 1e-15);
  EXPECT_NEAR(expected_r2_printed(3), expected_r2(3), 1e-15);
  EXPECT_GT(std::fabs(expected_r2_printed(4) - expected_r2(4)), 0.1);
  EXPECT_THROW(expected_r(1), ValidationError);
}

TEST(L1Moments, MonteCarloMatchesClosedForm) {
  for (std::size_t n : {3u, 7u, 40u}) {
    const LemmaStats s = lemma_stats(n, 20000, 5);
    EXPECT_LT(std::fabs(s.E_hat - s.E_closed), 3 * s.E_stderr) << n;
    EXPECT_LT(std::fabs(s.V_hat - s.V_closed), 3 * s.V_stderr) << n;
  }
  EXPECT_THROW(lemma_stats(2, 100, 0), ValidationError);
  const LemmaStats a = lemma_stats(5, 1000, 1, 1), b = lemma_stats(5, 1000, 1, 4);
  EXPECT_EQ(a.E_hat, b.E_hat);
  EXPECT_EQ(a.V_hat, b.V_hat);
}

TEST(Wrapping, SmokeTiny) {
  const WrappingStats st = run_wrapping(2, 1, 1, 0);
  EXPECT_EQ(st.rows.size(), 4u);
  for (const auto& r : st.rows) EXPECT_GT(r.width_ratio, 0.0);
  std::ostringstream os;
  write_wrapping_csv(os, st);
  EXPECT_NE(os.str().find("n,k,trial,layer,method,width_ratio"), std::string::npos);
}

TEST(Wrapping, IbpGrowthIsGeometricAndAffineIsExact) {
  const WrappingStats st = run_wrapping(16, 5, 40, 3);
  const auto& w = st.mean_width.at("IBP");
  // Least-squares fit of log width against layer index.
  const std::size_t k = w.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double x = double(j), y = std::log(w[j]);
    sx += x, sy += y, sxx += x * x, sxy += x * y, syy += y * y;
  }
  const double cov = sxy - sx * sy / k, vx = sxx - sx * sx / k, vy = syy - sy * sy / k;
  EXPECT_GT(cov * cov / (vx * vy), 0.999);
  for (const char* m : {"AA", "DA"})
    for (double e : st.excess_ratio.at(m)) EXPECT_NEAR(e, 1.0, 1e-6);
  EXPECT_NEAR(st.predicted_ratio, std::sqrt(32.0 / std::numbers::pi), 1e-15);
  EXPECT_THROW(run_wrapping(1, 1, 1, 0), ValidationError);
}

TEST(Boundary, LinearClassifierCrossing) {
  Matrix w(2, 1);
  w << 1, -1;
  Vector b(2);
  b << -0.3, 0.3;
  const NetworkSpec spec(1, {DenseLayer{w, b}});
  const BoundaryResult r = boundary_points(spec, {Vector::Constant(1, -1.0), Vector::Constant(1, 2.0)});
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_NEAR(r.points[0][0], 0.3, 3e-6);
  const BoundaryResult s =
      boundary_points(spec, {Vector::Constant(1, -1.0), Vector::Constant(1, -0.5), Vector::Constant(1, 2.0)});
  EXPECT_EQ(s.skipped.size(), 1u);
  EXPECT_EQ(s.points.size(), 2u);
  EXPECT_THROW(boundary_points(spec, {Vector::Constant(1, -1.0), Vector::Constant(1, -0.5)}), ValidationError);
}

TEST(Boundary, MlpPointsHaveSmallLogitGap) {
  std::mt19937_64 gen(81);
  const NetworkSpec spec = testing_support::random_network(gen, {2, 16, 16, 3}, true, false);
  std::vector<Vector> reps;
  std::set<std::size_t> seen;
  for (int i = 0; i < 2000 && reps.size() < 3; ++i) {
    const Vector x = testing_support::random_vector(gen, 2, 3.0);
    if (seen.insert(predicted_class(spec, x)).second) reps.push_back(x);
  }
  ASSERT_GE(reps.size(), 2u);
  const BoundaryResult r = boundary_points(spec, reps);
  for (const auto& p : r.points) {
    Vector y = eval_point(spec, p);
    std::sort(y.data(), y.data() + y.size(), std::greater<>());
    EXPECT_LT(y[0] - y[1], 1e-3);
  }
}

TEST(Boundary, RepresentativesAreFirstCorrect) {
  Matrix w(2, 1);
  w << 1, -1;
  const NetworkSpec spec(1, {DenseLayer{w, Vector::Zero(2)}});
  const std::vector<Vector> samples{Vector::Constant(1, 1.0), Vector::Constant(1, 2.0), Vector::Constant(1, -3.0),
                                    Vector::Constant(1, -1.0)};
  const auto reps = select_representatives(spec, samples, {1, 0, 1, 0});
  ASSERT_EQ(reps.size(), 2u);
  EXPECT_EQ(reps[0][0], 2.0);
  EXPECT_EQ(reps[1][0], -3.0);
}

TEST(Mask, Examples) {
  std::vector<Vector> pts{Vector::LinSpaced(64, 1, 64), Vector::LinSpaced(64, -64, -1)};
  const auto same = mask_inputs(pts, 0.0, 3);
  EXPECT_TRUE((same[0].array() == pts[0].array()).all());
  const auto zero = mask_inputs(pts, 1.0, 3);
  EXPECT_TRUE((zero[1].array() == 0.0).all());
  const auto half = mask_inputs(pts, 0.5, 3);
  for (const auto& p : half) EXPECT_EQ((p.array() == 0.0).count(), 32);
  const auto again = mask_inputs(pts, 0.5, 3);
  EXPECT_TRUE((again[0].array() == half[0].array()).all());
  EXPECT_FALSE((mask_inputs(pts, 0.5, 4)[0].array() == half[0].array()).all());
  EXPECT_THROW(mask_inputs(pts, 1.5, 3), ValidationError);
}

TEST(Sweep, ZeroEpsAndMonotone) {
  std::mt19937_64 gen(82);
  const NetworkSpec spec = testing_support::random_network(gen, {4, 12, 12, 3}, true, false);
  std::vector<Vector> pts;
  for (int i = 0; i < 3; ++i) pts.push_back(testing_support::random_vector(gen, 4));
  SweepOptions opt;
  opt.n_samples = 200;
  const std::vector<Method> methods{Method::LB, Method::IBP, Method::AA, Method::DA};
  const SweepResult r = run_sweep(spec, pts, {0.0, 1e-3, 1e-2, 1e-1}, methods, opt);
  for (std::size_t m = 1; m < methods.size(); ++m) EXPECT_LT(r.mean_max_diameter[m][0], 1e-12);
  for (std::size_t m = 0; m < methods.size(); ++m)
    for (std::size_t e = 1; e < 4; ++e) EXPECT_GE(r.mean_max_diameter[m][e], r.mean_max_diameter[m][e - 1]);
  for (std::size_t e = 0; e < 4; ++e) {
    EXPECT_LE(r.mean_max_diameter[0][e], r.mean_max_diameter[2][e]);
    EXPECT_LE(r.mean_max_diameter[2][e], r.mean_max_diameter[1][e]);
  }
  EXPECT_THROW(run_sweep(spec, pts, {}, methods, opt), ValidationError);
  std::ostringstream os;
  write_sweep_csv(os, r, {{"version", kVersion}});
  EXPECT_EQ(os.str().rfind("# version=", 0), 0u);
}
