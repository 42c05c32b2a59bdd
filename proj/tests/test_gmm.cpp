#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace mixgw;
using testing_support::Rng;

namespace {

Gmm two_component_1d(double m0, double m1, double w0) {
  return Gmm((Vector(2) << w0, 1.0 - w0).finished(),
             {Gaussian(Vector::Constant(1, m0), Matrix::Identity(1, 1)), Gaussian(Vector::Constant(1, m1), Matrix::Identity(1, 1))});
}

Matrix two_clusters(std::uint64_t seed, Eigen::Index n) {
  Rng rng(seed);
  Matrix pts(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = i % 2 == 0 ? 0.0 : 10.0;
    pts(i, 0) = c + 0.5 * rng.normal();
    pts(i, 1) = c + 0.5 * rng.normal();
  }
  return pts;
}

}  // namespace

TEST(GmmType, Validation) {
  EXPECT_THROW(Gmm(Vector::Ones(2), {Gaussian::standard(1)}), Error);
  EXPECT_THROW(Gmm((Vector(2) << 0.5, 0.5).finished(), {Gaussian::standard(1), Gaussian::standard(2)}), Error);
  EXPECT_THROW(Gmm((Vector(2) << 0.7, 0.7).finished(), {Gaussian::standard(1), two_component_1d(3, 4, 0.5).component(1)}), Error);
  EXPECT_THROW(Gmm((Vector(2) << 1.0, 0.0).finished(), {Gaussian::standard(1), two_component_1d(3, 4, 0.5).component(1)}), Error);
}

TEST(GmmType, MergesCoincidentComponents) {
  const Gmm g((Vector(3) << 0.2, 0.3, 0.5).finished(), {Gaussian::standard(2), Gaussian::standard(2), Gaussian(Vector::Ones(2), Matrix::Identity(2, 2))});
  ASSERT_EQ(g.size(), 2);
  EXPECT_NEAR(g.weights()(0), 0.5, 1e-15);
  EXPECT_NEAR(g.weights()(1), 0.5, 1e-15);
}

TEST(Density, StandardNormalAtZero) {
  EXPECT_NEAR(density(testing_support::single(Gaussian::standard(1)), Vector::Zero(1)), 0.3989422804014327, 1e-15);
}

TEST(Density, SymmetricMixtureMidpoint) {
  const Gmm g = two_component_1d(-2.0, 2.0, 0.5);
  const double pdf = std::exp(-2.0) / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(density(g, Vector::Zero(1)), pdf, 1e-15);
  const Vector per = component_densities(g, Vector::Zero(1));
  EXPECT_NEAR(per(0), pdf, 1e-15);
  EXPECT_NEAR(per(1), pdf, 1e-15);
}

TEST(Density, IntegratesToOne) {
  const Gmm g((Vector(3) << 0.2, 0.5, 0.3).finished(),
              {Gaussian(Vector::Constant(1, -3.0), Matrix::Constant(1, 1, 0.25)), Gaussian(Vector::Constant(1, 0.5), Matrix::Constant(1, 1, 2.0)),
               Gaussian(Vector::Constant(1, 4.0), Matrix::Constant(1, 1, 0.7))});
  const double lo = -20.0, hi = 20.0;
  const int n = 40000;
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += density(g, Vector::Constant(1, lo + (i + 0.5) * h)) * h;
  EXPECT_NEAR(s, 1.0, 1e-3);
}

TEST(Density, MatchesClosedFormGaussianPdf) {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index d = 1 + t % 4;
    const Gaussian g = rng.gaussian(d);
    const Vector x = rng.normal_vector(d);
    const Vector z = x - g.mean();
    const double want = std::exp(-0.5 * z.dot(g.cov().inverse() * z)) / std::sqrt(std::pow(2.0 * std::numbers::pi, static_cast<double>(d)) * g.cov().determinant());
    EXPECT_LE(testing_support::rel_err(density(testing_support::single(g), x), want), 1e-6);
  }
}

TEST(Density, RotationChangeOfVariables) {
  Rng rng(32);
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index d = 1 + t % 3;
    const Gmm g = rng.gmm(3, d, 2.0, 0.5);
    const Matrix q = rng.orthogonal(d);
    const Gmm rotated = transform(g, AffineMap{q, Vector::Zero(d)});
    const Vector x = rng.normal_vector(d, 2.0);
    EXPECT_LE(testing_support::rel_err(density(rotated, q * x), density(g, x)), 1e-10);
  }
}

TEST(Density, ZeroCovarianceIsJittered) {
  // jitter turns an all-zero covariance into a tiny multiple of the identity
  const Gmm g(Vector::Ones(1), {Gaussian(Vector::Zero(2), Matrix::Zero(2, 2))});
  EXPECT_TRUE(std::isfinite(GmmDensity(g).log_density(Vector::Zero(2))));
}

TEST(Center, Examples) {
  const Gmm g = two_component_1d(-1.0, 3.0, 0.75);
  const auto [c, mu] = center(g);
  EXPECT_NEAR(mu(0), 0.0, 1e-15);
  EXPECT_NEAR(c.component(0).mean()(0), -1.0, 1e-15);
  EXPECT_NEAR(c.component(1).mean()(0), 3.0, 1e-15);

  Rng rng(33);
  const Gaussian s = rng.gaussian(3);
  const auto [cs, ms] = center(testing_support::single(s));
  EXPECT_LE((ms - s.mean()).norm(), 1e-15);
  EXPECT_LE(cs.component(0).mean().norm(), 1e-15);
  EXPECT_LE((cs.component(0).cov() - s.cov()).norm(), 1e-15);

  const auto [again, zero] = center(cs);
  EXPECT_LE(zero.norm(), 1e-15);
  EXPECT_LE((again.component(0).mean() - cs.component(0).mean()).norm(), 1e-15);
}

TEST(Transform, Examples) {
  Rng rng(34);
  const Gmm g = rng.gmm(3, 2);
  const Gmm same = transform(g, AffineMap::identity(2));
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    EXPECT_LE((same.component(k).mean() - g.component(k).mean()).norm(), 1e-15);
    EXPECT_LE((same.component(k).cov() - g.component(k).cov()).norm(), 1e-15);
  }

  const Matrix q = rng.orthogonal(2);
  const Vector e1 = Vector::Unit(2, 0);
  const Matrix s = (Vector(2) << 4.0, 1.0).finished().asDiagonal();
  const Gmm r = transform(testing_support::single(Gaussian(e1, s)), AffineMap{q, Vector::Zero(2)});
  EXPECT_LE((r.component(0).mean() - q * e1).norm(), 1e-14);
  EXPECT_LE((r.component(0).cov() - q * s * q.transpose()).norm(), 1e-13);

  const Matrix p = rng.stiefel(3, 2);
  const Gmm up = transform(g, AffineMap{p, Vector::Zero(3)});
  for (const auto& c : up.components()) {
    const auto e = linalg::sorted_eigen(c.cov());
    EXPECT_LE(std::abs(e.values(2)), 1e-12);
  }
  EXPECT_THROW(transform(g, AffineMap{Matrix::Identity(3, 3), Vector::Zero(3)}), Error);
}

TEST(Transform, MeanBookkeepingCommutesWithCentering) {
  Rng rng(35);
  for (int t = 0; t < 10; ++t) {
    const Gmm g = rng.gmm(4, 3);
    const AffineMap map{rng.stiefel(3, 3), rng.normal_vector(3)};
    const auto [a, ma] = center(transform(g, map));
    const auto [c, mc] = center(g);
    const Gmm b = transform(c, AffineMap{map.linear, Vector::Zero(3)});
    EXPECT_LE((ma - map.apply(mc)).norm(), 1e-12);
    for (Eigen::Index k = 0; k < g.size(); ++k) EXPECT_LE((a.component(k).mean() - b.component(k).mean()).norm(), 1e-12);
  }
}

TEST(Sample, MomentsAndDeterminism) {
  const Gmm g = testing_support::single(Gaussian::standard(1));
  const Matrix s = sample(g, 100000, 7);
  EXPECT_LE(std::abs(s.mean()), 0.02);
  EXPECT_EQ(s, sample(g, 100000, 7));

  Rng rng(36);
  const Gmm mix = rng.gmm(3, 2);
  const Eigen::Index n = 20000;
  const Matrix x = sample(mix, n, 8);
  const Vector emp = x.colwise().mean().transpose();
  const Matrix cov = mix.covariance();
  for (Eigen::Index j = 0; j < 2; ++j) EXPECT_LE(std::abs(emp(j) - mix.mean()(j)), 5.0 * std::sqrt(cov(j, j) / static_cast<double>(n)));

  const Gaussian only(Vector::Constant(2, 100.0), Matrix::Identity(2, 2) * 0.01);
  const Matrix y = sample(testing_support::single(only), 1000, 9);
  EXPECT_LE((y.rowwise() - only.mean().transpose()).rowwise().norm().maxCoeff(), 1.0);
}

TEST(FitEm, SingleComponentIsSampleMoments) {
  Rng rng(37);
  const Matrix pts = rng.normal_matrix(500, 3) * rng.spd(3);
  EmConfig cfg;
  cfg.cov_reg = 0.0;
  const Gmm g = fit_em(pts, cfg);
  const Vector mean = pts.colwise().mean().transpose();
  const Matrix centred = pts.rowwise() - mean.transpose();
  const Matrix cov = centred.transpose() * centred / static_cast<double>(pts.rows());
  EXPECT_LE((g.component(0).mean() - mean).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((g.component(0).cov() - cov).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitEm, TwoClustersCentroids) {
  const Matrix pts = two_clusters(38, 1000);
  EmConfig cfg;
  cfg.n_components = 2;
  const Gmm g = fit_em(pts, cfg);
  ASSERT_EQ(g.size(), 2);
  // k-means oracle: the true split is known by construction
  Vector c0 = Vector::Zero(2), c1 = Vector::Zero(2);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) (i % 2 == 0 ? c0 : c1) += pts.row(i).transpose();
  c0 /= 500.0;
  c1 /= 500.0;
  const double d00 = (g.component(0).mean() - c0).norm(), d01 = (g.component(0).mean() - c1).norm();
  const double d10 = (g.component(1).mean() - c0).norm(), d11 = (g.component(1).mean() - c1).norm();
  EXPECT_LE(std::min(std::max(d00, d11), std::max(d01, d10)), 0.1);
}

TEST(FitEm, LikelihoodMonotoneAndDeterministic) {
  Rng rng(39);
  const Gmm truth = rng.gmm(4, 2, 2.0, 0.5);
  const Matrix pts = sample(truth, 2000, 40);
  EmConfig cfg;
  cfg.n_components = 4;
  cfg.n_restarts = 3;
  cfg.seed = 5;
  const EmResult r = fit_em_detailed(pts, cfg);
  for (std::size_t i = 1; i < r.loglik_history.size(); ++i) {
    EXPECT_GE(r.loglik_history[i] - r.loglik_history[i - 1], -1e-9 * std::abs(r.loglik_history[i]));
  }
  const Gmm again = fit_em(pts, cfg);
  ASSERT_EQ(again.size(), r.gmm.size());
  EXPECT_EQ(again.weights(), r.gmm.weights());
  for (Eigen::Index k = 0; k < again.size(); ++k) {
    EXPECT_EQ(again.component(k).mean(), r.gmm.component(k).mean());
    EXPECT_EQ(again.component(k).cov(), r.gmm.component(k).cov());
  }
}

TEST(FitEm, Errors) {
  EmConfig cfg;
  cfg.n_components = 5;
  try {
    fit_em(Matrix::Zero(3, 2), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewPoints);
    EXPECT_NE(std::string(e.what()).find("too few points"), std::string::npos);
  }
  // three points in R^3 cannot support a full covariance without regularisation
  EmConfig bare;
  bare.cov_reg = 0.0;
  try {
    fit_em(Matrix::Identity(3, 3), bare);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateComponent);
  }
}
