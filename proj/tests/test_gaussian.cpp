#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include "support.hpp"

using namespace mixgw;
using testing_support::Rng;

namespace {

// n draws of N(m, s^2), one per equal-probability stratum (u_i uniform in
// [i/n, (i+1)/n)), so sampling noise in the mean and spread is negligible.
std::vector<double> stratified_normal(Rng& rng, int n, double m, double s) {
  const boost::math::normal_distribution<double> law(m, s);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = boost::math::quantile(law, (i + rng.uniform(1e-12, 1.0 - 1e-12)) / n);
  std::shuffle(out.begin(), out.end(), rng.engine());
  return out;
}

Matrix diag(std::initializer_list<double> v) {
  Vector d(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) d(i++) = x;
  return d.asDiagonal();
}

// Empirical W2^2 between two 1-D samples of equal size: pair sorted values.
double sorted_sample_w2(std::vector<double> x, std::vector<double> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

}  // namespace

TEST(PsdSqrt, IdentityAndDiagonal) {
  EXPECT_LE((linalg::psd_sqrt(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm(), 1e-14);
  EXPECT_LE((linalg::psd_sqrt(diag({4, 9})) - diag({2, 3})).norm(), 1e-14);
}

TEST(PsdSqrt, SquaresBackOnRandomInputs) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = rng.normal_matrix(5, 5);
    const Matrix m = linalg::symmetrize(a.transpose() * a);
    const Matrix s = linalg::psd_sqrt(m);
    EXPECT_LE((s * s - m).norm(), 1e-8 * (1.0 + m.trace()));
    EXPECT_LE((s - s.transpose()).norm(), 1e-14);
  }
}

TEST(PsdSqrt, RejectsAsymmetricAndNegative) {
  Matrix m = Matrix::Identity(2, 2);
  m(0, 1) = 0.5;
  try {
    linalg::psd_sqrt(m);
    FAIL() << "expected NotSymmetric";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotSymmetric);
  }
  try {
    linalg::psd_sqrt(diag({1.0, -0.5}));
    FAIL() << "expected NotPsd";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotPsd);
  }
  // roundoff-size negatives are clamped
  const Matrix s = linalg::psd_sqrt(diag({1.0, -1e-13}));
  EXPECT_NEAR(s(1, 1), 0.0, 1e-15);
}

TEST(SortedEigen, OrderAndSignConvention) {
  Rng rng(2);
  const Matrix m = rng.spd(4);
  const auto e = linalg::sorted_eigen(m);
  for (Eigen::Index i = 1; i < 4; ++i) EXPECT_GE(e.values(i - 1), e.values(i));
  for (Eigen::Index c = 0; c < 4; ++c) {
    Eigen::Index arg = 0;
    e.vectors.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(e.vectors(arg, c), 0.0);
  }
  EXPECT_LE((e.vectors * e.values.asDiagonal() * e.vectors.transpose() - m).norm(), 1e-12);
}

TEST(GaussianType, ValidatesCovariance) {
  EXPECT_THROW(Gaussian(Vector::Zero(2), Matrix::Identity(3, 3)), Error);
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 1) = 1e-3;
  EXPECT_THROW(Gaussian(Vector::Zero(2), bad), Error);
  EXPECT_THROW(Gaussian(Vector::Zero(2), diag({1.0, -1.0})), Error);
  const Gaussian g(Vector::Zero(2), diag({1.0, -1e-14}));
  EXPECT_GE(linalg::sorted_eigen(g.cov()).values(1), 0.0);
}

TEST(W2Gaussian, HandCases) {
  Vector m(2);
  m << 3, 4;
  EXPECT_NEAR(w2_gaussian_sq(Gaussian(Vector::Zero(2), Matrix::Identity(2, 2)), Gaussian(m, Matrix::Identity(2, 2))), 25.0, 1e-10);
  EXPECT_NEAR(w2_gaussian_sq(Gaussian(Vector::Zero(1), diag({4})), Gaussian(Vector::Zero(1), diag({1}))), 1.0, 1e-10);
  Vector e1(2);
  e1 << 1, 0;
  EXPECT_NEAR(w2_gaussian_sq(Gaussian(Vector::Zero(2), diag({4, 9})), Gaussian(e1, diag({1, 1}))), 6.0, 1e-10);
}

TEST(W2Gaussian, MatchesSortedSampleOracleIn1D) {
  Rng rng(3);
  const int n = 100000;
  for (int t = 0; t < 20; ++t) {
    const double m0 = 3.0 * rng.normal(), m1 = 3.0 * rng.normal();
    const double s0 = rng.uniform(0.3, 3.0), s1 = rng.uniform(0.3, 3.0);
    const std::vector<double> x = stratified_normal(rng, n, m0, s0), y = stratified_normal(rng, n, m1, s1);
    const double closed = w2_gaussian_sq(Gaussian(Vector::Constant(1, m0), diag({s0 * s0})), Gaussian(Vector::Constant(1, m1), diag({s1 * s1})));
    const double oracle = sorted_sample_w2(x, y);
    EXPECT_LE(std::abs(closed - oracle) / closed, 0.01) << "pair " << t;
  }
}

TEST(W2Gaussian, SymmetryAndSelfDistance) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index d = 1 + t % 5;
    const Gaussian g0 = rng.gaussian(d), g1 = rng.gaussian(d);
    const double a = w2_gaussian_sq(g0, g1), b = w2_gaussian_sq(g1, g0);
    EXPECT_LE(std::abs(a - b), 1e-8 * std::max(1.0, a));
    EXPECT_LE(w2_gaussian_sq(g0, g0), 1e-10 * (1.0 + g0.cov().trace()));
  }
}

TEST(W2Gaussian, TriangleInequality) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index d = 1 + t % 5;
    const Gaussian a = rng.gaussian(d), b = rng.gaussian(d), c = rng.gaussian(d);
    const double ab = std::sqrt(w2_gaussian_sq(a, b)), bc = std::sqrt(w2_gaussian_sq(b, c)), ac = std::sqrt(w2_gaussian_sq(a, c));
    EXPECT_GE(ab + bc - ac, -1e-7);
  }
}

TEST(W2Gaussian, DimensionMismatch) {
  try {
    w2_gaussian_sq(Gaussian::standard(2), Gaussian::standard(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(W2GaussianMap, IdentityAndScalar) {
  const AffineMap id = w2_gaussian_map(Gaussian::standard(2), Gaussian::standard(2));
  EXPECT_LE((id.linear - Matrix::Identity(2, 2)).norm(), 1e-12);
  EXPECT_LE(id.offset.norm(), 1e-12);
  const AffineMap t = w2_gaussian_map(Gaussian(Vector::Zero(1), diag({4})), Gaussian(Vector::Constant(1, 3.0), diag({1})));
  EXPECT_NEAR(t.linear(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(t.offset(0), 3.0, 1e-12);
}

TEST(W2GaussianMap, PushForwardMoments) {
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index d = 1 + t % 4;
    const Gaussian g0 = rng.gaussian(d), g1 = rng.gaussian(d);
    const AffineMap m = w2_gaussian_map(g0, g1);
    const Matrix pushed = m.linear * g0.cov() * m.linear.transpose();
    EXPECT_LE((pushed - g1.cov()).norm(), 1e-6 * g1.cov().norm());
    EXPECT_LE((m.apply(g0.mean()) - g1.mean()).norm(), 1e-9 * (1.0 + g1.mean().norm()));
    // the map's linear part is symmetric positive definite
    EXPECT_LE((m.linear - m.linear.transpose()).norm(), 1e-10);
    EXPECT_GT(linalg::sorted_eigen(m.linear).values(d - 1), 0.0);
  }
}

TEST(W2GaussianMap, SingularSourceIsJittered) {
  // the ridge 1e-9 * max(1, tr/d) makes the source invertible; the map stays
  // finite and the non-degenerate direction is mapped exactly
  const AffineMap m = w2_gaussian_map(Gaussian(Vector::Zero(2), diag({1.0, 0.0})), Gaussian::standard(2));
  EXPECT_TRUE(m.linear.allFinite());
  EXPECT_NEAR(m.linear(0, 0), 1.0, 1e-8);
  EXPECT_NEAR(m.linear(0, 1), 0.0, 1e-12);
}

TEST(AffineMap, CompositionIsAssociative) {
  Rng rng(7);
  const AffineMap f{rng.normal_matrix(2, 3), rng.normal_vector(2)};
  const AffineMap g{rng.normal_matrix(3, 4), rng.normal_vector(3)};
  const AffineMap h{rng.normal_matrix(4, 2), rng.normal_vector(4)};
  const AffineMap left = f.compose(g).compose(h);
  const AffineMap right = f.compose(g.compose(h));
  EXPECT_LE((left.linear - right.linear).norm(), 1e-12);
  EXPECT_LE((left.offset - right.offset).norm(), 1e-12);
  const Vector x = rng.normal_vector(2);
  EXPECT_LE((left.apply(x) - f.apply(g.apply(h.apply(x)))).norm(), 1e-12);
}

TEST(Ew2ClosedForm, HandCases) {
  EXPECT_NEAR(ew2_gaussian_closed_form(Gaussian::standard(3), Gaussian::standard(3)).value, 0.0, 1e-12);
  EXPECT_EQ(ew2_gaussian_closed_form(Gaussian(Vector::Zero(2), diag({4, 1})), Gaussian(Vector::Zero(1), diag({1}))).value, 2.0);
  EXPECT_EQ(ew2_gaussian_closed_form(Gaussian(Vector::Zero(2), diag({4, 1})), Gaussian(Vector::Zero(2), diag({9, 1}))).value, 1.0);
}

TEST(Ew2ClosedForm, SolutionAttainsValue) {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    const Eigen::Index d = 1 + t % 5;
    const Eigen::Index dp = 1 + (t / 5) % d;
    const Gaussian g0(Vector::Zero(d), rng.spd(d)), g1(Vector::Zero(dp), rng.spd(dp));
    const auto s = ew2_gaussian_closed_form(g0, g1);
    EXPECT_LE((s.p_star.transpose() * s.p_star - Matrix::Identity(dp, dp)).norm(), 1e-10);
    // W2 between g0 and the embedded target equals the closed-form value
    const Gaussian embedded(Vector::Zero(d), linalg::symmetrize(s.p_star * g1.cov() * s.p_star.transpose()));
    // the embedded covariance is singular when d' < d, so the square root in
    // w2_gaussian_sq sees roundoff-level eigenvalues: error ~ sqrt(machine eps)
    EXPECT_LE(std::abs(w2_gaussian_sq(g0, embedded) - s.value), 1e-6 * (1.0 + s.value));
    // the map pushes g0 forward onto g1
    const Matrix pushed = s.map.linear * g0.cov() * s.map.linear.transpose();
    EXPECT_LE((pushed - g1.cov()).norm(), 1e-8 * (1.0 + g1.cov().norm()));
    // every sign pattern is an optimum with the same value
    Vector signs = Vector::Ones(dp);
    signs(0) = -1.0;
    EXPECT_NEAR(ew2_gaussian_closed_form(g0, g1, signs).value, s.value, 1e-12);
  }
}

TEST(Ew2ClosedForm, RotationInvariance) {
  Rng rng(9);
  for (int t = 0; t < 30; ++t) {
    const Eigen::Index d = 1 + t % 5;
    const Gaussian g0(Vector::Zero(d), rng.spd(d)), g1(Vector::Zero(d), rng.spd(d));
    const double v = ew2_gaussian_closed_form(g0, g1).value;
    const double r = ew2_gaussian_closed_form(g0, rotate(g1, rng.orthogonal(d))).value;
    EXPECT_LE(std::abs(v - r), 1e-8 * std::max(1.0, v));
  }
}

TEST(Ew2ClosedForm, Errors) {
  try {
    ew2_gaussian_closed_form(Gaussian::standard(1), Gaussian::standard(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionOrder);
  }
  try {
    ew2_gaussian_closed_form(Gaussian(Vector::Zero(2), diag({1.0, 0.0})), Gaussian::standard(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateSource);
  }
}
