#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "mixgw/errors.hpp"
#include "mixgw/linalg.hpp"

namespace mixgw {

/// Gaussian distribution N(mean, cov). The covariance is validated on
/// construction: symmetric to 1e-12 relative, no eigenvalue below
/// -1e-10 * trace / d. Small negative eigenvalues are clamped to zero.
class Gaussian {
 public:
  Gaussian() = default;

  Gaussian(Vector mean, Matrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size()) {
      fail(ErrorCode::kDimensionMismatch, "gaussian mean/cov sizes differ");
    }
    if (!linalg::is_symmetric(cov_)) fail(ErrorCode::kNotSymmetric, "gaussian covariance");
    cov_ = linalg::symmetrize(cov_);
    if (cov_.size() > 0) {
      const auto eig = linalg::sorted_eigen(cov_);
      if (eig.values(eig.values.size() - 1) < 0.0) {
        const Vector vals = linalg::clamped_spectrum(eig, cov_, "gaussian covariance");
        cov_ = linalg::symmetrize(eig.vectors * vals.asDiagonal() * eig.vectors.transpose());
      }
    }
  }

  static Gaussian standard(Eigen::Index d) { return Gaussian(Vector::Zero(d), Matrix::Identity(d, d)); }

  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }

 private:
  Vector mean_;
  Matrix cov_;
};

/// x -> linear * x + offset, from R^s to R^r.
struct AffineMap {
  Matrix linear;
  Vector offset;

  static AffineMap identity(Eigen::Index d) { return {Matrix::Identity(d, d), Vector::Zero(d)}; }

  Eigen::Index in_dim() const { return linear.cols(); }
  Eigen::Index out_dim() const { return linear.rows(); }

  Vector apply(const Vector& x) const {
    if (x.size() != linear.cols()) fail(ErrorCode::kDimensionMismatch, "affine map input");
    return linear * x + offset;
  }

  /// (*this) o inner: x -> linear * (inner.linear x + inner.offset) + offset.
  AffineMap compose(const AffineMap& inner) const {
    if (inner.out_dim() != in_dim()) fail(ErrorCode::kDimensionMismatch, "affine composition");
    return {linear * inner.linear, linear * inner.offset + offset};
  }
};

/// Squared 2-Wasserstein distance between Gaussians (Bures-Wasserstein closed form).
inline double w2_gaussian_sq(const Gaussian& g0, const Gaussian& g1) {
  if (g0.dim() != g1.dim()) fail(ErrorCode::kDimensionMismatch, "w2_gaussian_sq");
  const double mean_term = (g0.mean() - g1.mean()).squaredNorm();
  const Matrix root0 = linalg::psd_sqrt(g0.cov());
  const Matrix cross = linalg::symmetrize(root0 * g1.cov() * root0);
  const double bures = g0.cov().trace() + g1.cov().trace() - 2.0 * linalg::trace_sqrt(cross);
  return std::max(0.0, mean_term + bures);
}

/// Monge map between Gaussians: T(x) = m1 + A (x - m0) with
/// A = S0^{-1/2} (S0^{1/2} S1 S0^{1/2})^{1/2} S0^{-1/2}.
inline AffineMap w2_gaussian_map(const Gaussian& g0, const Gaussian& g1) {
  if (g0.dim() != g1.dim()) fail(ErrorCode::kDimensionMismatch, "w2_gaussian_map");
  const auto roots = linalg::pd_sqrt_pair(g0.cov(), ErrorCode::kSingularSourceCovariance, "w2_gaussian_map source");
  const Matrix middle = linalg::psd_sqrt(linalg::symmetrize(roots.sqrt * g1.cov() * roots.sqrt));
  const Matrix a = linalg::symmetrize(roots.inv_sqrt * middle * roots.inv_sqrt);
  return {a, g1.mean() - a * g0.mean()};
}

/// Closed-form embedded Wasserstein solution between centred Gaussians,
/// source on R^d, target on R^{d'} with d >= d'.
struct EwGaussianSolution {
  double value = 0.0;
  Matrix p_star;        // d x d', orthonormal columns
  AffineMap map;        // R^d -> R^{d'}
  Vector sign_diag;     // length d', entries +-1
};

inline EwGaussianSolution ew2_gaussian_closed_form(const Gaussian& g0, const Gaussian& g1, const Vector& sign_diag) {
  const Eigen::Index d = g0.dim();
  const Eigen::Index dp = g1.dim();
  if (d < dp) fail(ErrorCode::kDimensionOrder, "ew2_gaussian_closed_form requires dim(g0) >= dim(g1)");
  if (sign_diag.size() != dp) fail(ErrorCode::kDimensionMismatch, "sign_diag length");
  for (Eigen::Index i = 0; i < dp; ++i) {
    if (sign_diag(i) != 1.0 && sign_diag(i) != -1.0) fail(ErrorCode::kInvalidConfig, "sign_diag entries must be +-1");
  }
  const double mean_scale = 1.0 + g0.mean().cwiseAbs().maxCoeff() + g1.mean().cwiseAbs().maxCoeff();
  if (g0.mean().cwiseAbs().maxCoeff() > 1e-12 * mean_scale || g1.mean().cwiseAbs().maxCoeff() > 1e-12 * mean_scale) {
    fail(ErrorCode::kInvalidConfig, "ew2_gaussian_closed_form requires centred Gaussians");
  }

  const auto e0 = linalg::sorted_eigen(g0.cov());
  const auto e1 = linalg::sorted_eigen(g1.cov());
  const Vector d0 = linalg::clamped_spectrum(e0, g0.cov(), "ew2 source");
  const Vector d1 = linalg::clamped_spectrum(e1, g1.cov(), "ew2 target");
  if (d0(d - 1) <= linalg::jitter_amount(g0.cov())) fail(ErrorCode::kDegenerateSource, "source covariance is singular");

  EwGaussianSolution out;
  const Vector head = d0.head(dp);
  out.value = std::max(0.0, d0.sum() + d1.sum() - 2.0 * head.cwiseSqrt().cwiseProduct(d1.cwiseSqrt()).sum());
  out.sign_diag = sign_diag;
  out.p_star = e0.vectors.leftCols(dp) * sign_diag.asDiagonal() * e1.vectors.transpose();

  Matrix core = Matrix::Zero(dp, d);
  for (Eigen::Index i = 0; i < dp; ++i) core(i, i) = sign_diag(i) * std::sqrt(d1(i) / d0(i));
  out.map = {e1.vectors * core * e0.vectors.transpose(), Vector::Zero(dp)};
  return out;
}

inline EwGaussianSolution ew2_gaussian_closed_form(const Gaussian& g0, const Gaussian& g1) {
  return ew2_gaussian_closed_form(g0, g1, Vector::Ones(g1.dim()));
}

/// Conjugates the covariance and rotates the mean: N(Q m, Q S Q^T).
inline Gaussian rotate(const Gaussian& g, const Matrix& q) {
  return Gaussian(q * g.mean(), linalg::symmetrize(q * g.cov() * q.transpose()));
}

}  // namespace mixgw
