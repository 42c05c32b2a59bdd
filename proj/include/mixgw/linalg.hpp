#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "mixgw/errors.hpp"

namespace mixgw {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace linalg {

// Symmetry tolerance: max |M - M^T| <= 1e-12 (1 + max|M|).
inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Eigenvalues sorted non-increasing (stable on ties), each eigenvector
/// oriented so that its largest-magnitude entry is positive.
struct SortedEigen {
  Vector values;
  Matrix vectors;
};

inline SortedEigen sorted_eigen(const Matrix& m) {
  const Eigen::Index n = m.rows();
  SortedEigen out;
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(m));
  if (solver.info() != Eigen::Success) fail(ErrorCode::kSolverFailure, "eigendecomposition did not converge");
  const Vector& ev = solver.eigenvalues();
  const Matrix& evec = solver.eigenvectors();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return ev(i) > ev(j); });

  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Eigen::Index src = order[static_cast<std::size_t>(c)];
    out.values(c) = ev(src);
    Vector v = evec.col(src);
    Eigen::Index arg = 0;
    for (Eigen::Index r = 1; r < n; ++r) {
      if (std::abs(v(r)) > std::abs(v(arg))) arg = r;
    }
    if (v(arg) < 0.0) v = -v;
    out.vectors.col(c) = v;
  }
  return out;
}

// Eigenvalues below -1e-10 * trace/d are rejected; those above are clamped to 0.
inline double negative_eigen_threshold(const Matrix& m) {
  const double d = static_cast<double>(m.rows());
  return -1e-10 * std::max(m.trace(), 0.0) / std::max(d, 1.0);
}

inline Vector clamped_spectrum(const SortedEigen& eig, const Matrix& m, const char* what) {
  const double threshold = negative_eigen_threshold(m);
  Vector vals = eig.values;
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    if (vals(i) < 0.0) {
      if (vals(i) < threshold) fail(ErrorCode::kNotPsd, std::string(what) + ": eigenvalue below clamp threshold");
      vals(i) = 0.0;
    }
  }
  return vals;
}

inline Matrix psd_sqrt(const Matrix& m) {
  if (!is_symmetric(m)) fail(ErrorCode::kNotSymmetric, "psd_sqrt input");
  if (m.size() == 0) return m;
  const SortedEigen eig = sorted_eigen(m);
  const Vector vals = clamped_spectrum(eig, m, "psd_sqrt");
  Matrix s = eig.vectors * vals.cwiseSqrt().asDiagonal() * eig.vectors.transpose();
  return symmetrize(s);
}

/// Ridge added when a positive-definite matrix is required.
inline double jitter_amount(const Matrix& m) {
  const double d = static_cast<double>(std::max<Eigen::Index>(m.rows(), 1));
  return 1e-9 * std::max(1.0, m.trace() / d);
}

/// Returns m unchanged when its smallest eigenvalue already exceeds the
/// jitter amount, otherwise m + jitter * I.
inline Matrix regularize_pd(const Matrix& m) {
  const double lambda = jitter_amount(m);
  const SortedEigen eig = sorted_eigen(m);
  if (eig.values.size() == 0 || eig.values(eig.values.size() - 1) > lambda) return m;
  return m + lambda * Matrix::Identity(m.rows(), m.cols());
}

/// Inverse square root of a (regularized) positive-definite matrix. Throws
/// `code` when the matrix is still singular after the jitter policy.
inline Matrix pd_inv_sqrt(const Matrix& m, ErrorCode code, const char* what) {
  if (!is_symmetric(m)) fail(ErrorCode::kNotSymmetric, what);
  const Matrix reg = regularize_pd(m);
  const SortedEigen eig = sorted_eigen(reg);
  const Vector vals = clamped_spectrum(eig, reg, what);
  const double floor = 0.5 * jitter_amount(m);
  if (vals.size() > 0 && vals(vals.size() - 1) < floor) fail(code, std::string(what) + ": singular after jitter");
  Matrix s = eig.vectors * vals.cwiseSqrt().cwiseInverse().asDiagonal() * eig.vectors.transpose();
  return symmetrize(s);
}

/// Symmetric (positive definite) square root and its inverse together.
struct SqrtPair {
  Matrix sqrt;
  Matrix inv_sqrt;
};

inline SqrtPair pd_sqrt_pair(const Matrix& m, ErrorCode code, const char* what) {
  if (!is_symmetric(m)) fail(ErrorCode::kNotSymmetric, what);
  const Matrix reg = regularize_pd(m);
  const SortedEigen eig = sorted_eigen(reg);
  const Vector vals = clamped_spectrum(eig, reg, what);
  const double floor = 0.5 * jitter_amount(m);
  if (vals.size() > 0 && vals(vals.size() - 1) < floor) fail(code, std::string(what) + ": singular after jitter");
  const Vector root = vals.cwiseSqrt();
  SqrtPair out;
  out.sqrt = symmetrize(eig.vectors * root.asDiagonal() * eig.vectors.transpose());
  out.inv_sqrt = symmetrize(eig.vectors * root.cwiseInverse().asDiagonal() * eig.vectors.transpose());
  return out;
}

/// Trace of the PSD square root (sum of square roots of the clamped spectrum).
inline double trace_sqrt(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  const SortedEigen eig = sorted_eigen(m);
  const Vector vals = clamped_spectrum(eig, m, "trace_sqrt");
  return vals.cwiseSqrt().sum();
}

/// Id_{cols}^{[rows, cols]}: the rows x cols matrix with ones on the leading diagonal.
inline Matrix truncated_identity(Eigen::Index rows, Eigen::Index cols) { return Matrix::Identity(rows, cols); }

}  // namespace linalg
}  // namespace mixgw
