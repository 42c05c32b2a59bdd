#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/SVD>

#include "mixgw/errors.hpp"
#include "mixgw/gaussian.hpp"
#include "mixgw/linalg.hpp"
#include "mixgw/ot.hpp"

namespace mixgw {

/// d x d' matrix with orthonormal columns (d >= d'). Construction checks
/// P^T P = I to 1e-10 in Frobenius norm.
class StiefelMatrix {
 public:
  StiefelMatrix() = default;

  explicit StiefelMatrix(Matrix p) : p_(std::move(p)) {
    if (p_.rows() < p_.cols()) fail(ErrorCode::kDimensionOrder, "stiefel matrix needs rows >= cols");
    if ((p_.transpose() * p_ - Matrix::Identity(p_.cols(), p_.cols())).norm() > 1e-10) {
      fail(ErrorCode::kInvalidConfig, "matrix columns are not orthonormal");
    }
  }

  /// Id_{d'}^{[d, d']}.
  static StiefelMatrix truncated_identity(Eigen::Index d, Eigen::Index dp) { return StiefelMatrix(Matrix::Identity(d, dp)); }

  const Matrix& matrix() const { return p_; }
  Eigen::Index rows() const { return p_.rows(); }
  Eigen::Index cols() const { return p_.cols(); }

 private:
  Matrix p_;
};

struct StiefelProjection {
  StiefelMatrix p;
  bool rank_deficient = false;
};

/// Nearest Stiefel point in Frobenius norm, U Id^{[d,d']} V^T from the SVD.
/// Rank-deficient inputs are completed by the SVD routine's own basis
/// ordering and flagged.
inline StiefelProjection project_stiefel_checked(const Matrix& m) {
  if (m.rows() < m.cols()) fail(ErrorCode::kDimensionOrder, "project_stiefel requires d >= d'");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  const double tol = std::max(1e-300, 1e-12 * smax * static_cast<double>(std::max(m.rows(), m.cols())));
  bool deficient = s.size() == 0 || smax == 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) deficient = deficient || s(i) <= tol;
  Matrix p = svd.matrixU().leftCols(m.cols()) * svd.matrixV().transpose();
  // re-orthonormalise against accumulated rounding in U, V
  const Matrix gram = p.transpose() * p;
  if ((gram - Matrix::Identity(p.cols(), p.cols())).norm() > 1e-13) {
    Eigen::HouseholderQR<Matrix> qr(p);
    Matrix q = qr.householderQ() * Matrix::Identity(p.rows(), p.cols());
    const Vector diag = (q.transpose() * p).diagonal();
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      if (diag(c) < 0.0) q.col(c) = -q.col(c);
    }
    p = q;
  }
  return {StiefelMatrix(p), deficient};
}

inline StiefelMatrix project_stiefel(const Matrix& m) { return project_stiefel_checked(m).p; }

/// As project_stiefel, but when m is rank-deficient the free directions are
/// completed as close as possible (Frobenius) to `reference`, a Stiefel point
/// of the same shape, instead of by the SVD basis ordering. Falls back to the
/// plain projection when the reference is degenerate on those directions.
inline StiefelProjection project_stiefel_toward(const Matrix& m, const Matrix& reference) {
  if (m.rows() < m.cols()) fail(ErrorCode::kDimensionOrder, "project_stiefel requires d >= d'");
  if (reference.rows() != m.rows() || reference.cols() != m.cols()) fail(ErrorCode::kDimensionMismatch, "reference shape");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  const double tol = std::max(1e-300, 1e-12 * smax * static_cast<double>(std::max(m.rows(), m.cols())));
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > tol) ++rank;
  if (rank == m.cols()) return project_stiefel_checked(m);
  const Matrix ur = svd.matrixU().leftCols(rank);
  const Matrix vr = svd.matrixV().leftCols(rank);
  const Matrix vn = svd.matrixV().rightCols(m.cols() - rank);
  const Matrix free = reference * vn - ur * (ur.transpose() * (reference * vn));
  Eigen::JacobiSVD<Matrix> polar(free, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sf = polar.singularValues();
  if (sf(sf.size() - 1) <= 1e-8) return project_stiefel_checked(m);
  Matrix p = ur * vr.transpose() + polar.matrixU() * polar.matrixV().transpose() * vn.transpose();
  if ((p.transpose() * p - Matrix::Identity(p.cols(), p.cols())).norm() > 1e-13) p = project_stiefel(p).matrix();
  return {StiefelMatrix(p), true};
}

/// Pieces of J_omega(P) = sum_{k,l} omega_kl W2^2(mu_k, P_# nu_l) that do not
/// depend on P: component moments and the square roots of the target
/// covariances. Pairs with omega_kl == 0 are skipped.
class EmbeddingObjective {
 public:
  EmbeddingObjective(std::vector<Gaussian> source, std::vector<Gaussian> target)
      : source_(std::move(source)), target_(std::move(target)) {
    if (source_.empty() || target_.empty()) fail(ErrorCode::kDimensionMismatch, "embedding objective needs components");
    d_ = source_.front().dim();
    dp_ = target_.front().dim();
    for (const auto& g : source_) {
      if (g.dim() != d_) fail(ErrorCode::kDimensionMismatch, "source components differ in dimension");
    }
    for (const auto& g : target_) {
      if (g.dim() != dp_) fail(ErrorCode::kDimensionMismatch, "target components differ in dimension");
      target_roots_.push_back(linalg::psd_sqrt(g.cov()));
    }
  }

  Eigen::Index source_dim() const { return d_; }
  Eigen::Index target_dim() const { return dp_; }
  std::size_t source_size() const { return source_.size(); }
  std::size_t target_size() const { return target_.size(); }

  /// ||m0 - P m1||^2 + tr S0 + tr S1 - 2 tr (S1^{1/2} P^T S0 P S1^{1/2})^{1/2};
  /// equals W2^2(mu_k, P_# nu_l) whenever P has orthonormal columns.
  double pair_cost(const Matrix& p, std::size_t k, std::size_t l) const {
    const Gaussian& g0 = source_[k];
    const Gaussian& g1 = target_[l];
    const Matrix& r1 = target_roots_[l];
    const Matrix inner = linalg::symmetrize(r1 * p.transpose() * g0.cov() * p * r1);
    const double value = (g0.mean() - p * g1.mean()).squaredNorm() + g0.cov().trace() + g1.cov().trace() -
                         2.0 * linalg::trace_sqrt(inner);
    return std::max(0.0, value);
  }

  Matrix cost_matrix(const Matrix& p) const {
    check_shape(p);
    Matrix c(static_cast<Eigen::Index>(source_.size()), static_cast<Eigen::Index>(target_.size()));
    for (std::size_t k = 0; k < source_.size(); ++k) {
      for (std::size_t l = 0; l < target_.size(); ++l) c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = pair_cost(p, k, l);
    }
    return c;
  }

  double value(const Matrix& p, const Matrix& omega) const {
    check_shape(p);
    check_omega(omega);
    double total = 0.0;
    for (std::size_t k = 0; k < source_.size(); ++k) {
      for (std::size_t l = 0; l < target_.size(); ++l) {
        const double w = omega(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
        if (w != 0.0) total += w * pair_cost(p, k, l);
      }
    }
    return total;
  }

  /// Analytic gradient
  ///   2 sum omega_kl [P m1 m1^T - m0 m1^T - S0 P R (R P^T S0 P R)^{-1/2} R],  R = S1^{1/2}.
  Matrix gradient(const Matrix& p, const Matrix& omega) const {
    check_shape(p);
    check_omega(omega);
    Eigen::JacobiSVD<Matrix> svd(p);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(s.size() - 1) <= 1e-12 * std::max(1.0, s(0))) fail(ErrorCode::kRankDeficientP, "gradient requires full column rank");

    Matrix grad = Matrix::Zero(d_, dp_);
    for (std::size_t k = 0; k < source_.size(); ++k) {
      for (std::size_t l = 0; l < target_.size(); ++l) {
        const double w = omega(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
        if (w == 0.0) continue;
        const Gaussian& g0 = source_[k];
        const Gaussian& g1 = target_[l];
        const Matrix& r1 = target_roots_[l];
        const Matrix sp = g0.cov() * p;
        const Matrix inner = linalg::symmetrize(r1 * p.transpose() * sp * r1);
        const Matrix inner_isqrt = linalg::pd_inv_sqrt(inner, ErrorCode::kSingularInnerMatrix, "gradient inner matrix");
        grad += w * (p * g1.mean() * g1.mean().transpose() - g0.mean() * g1.mean().transpose() - sp * r1 * inner_isqrt * r1);
      }
    }
    return 2.0 * grad;
  }

 private:
  void check_shape(const Matrix& p) const {
    if (p.rows() != d_ || p.cols() != dp_) fail(ErrorCode::kDimensionMismatch, "P has the wrong shape");
  }
  void check_omega(const Matrix& omega) const {
    if (omega.rows() != static_cast<Eigen::Index>(source_.size()) || omega.cols() != static_cast<Eigen::Index>(target_.size())) {
      fail(ErrorCode::kDimensionMismatch, "coupling shape does not match components");
    }
  }

  std::vector<Gaussian> source_;
  std::vector<Gaussian> target_;
  std::vector<Matrix> target_roots_;
  Eigen::Index d_ = 0;
  Eigen::Index dp_ = 0;
};

/// Analytic gradient of J_omega at P for explicit component lists.
inline Matrix grad_j(const Matrix& p, const Coupling& omega, const std::vector<Gaussian>& comps0,
                     const std::vector<Gaussian>& comps1) {
  return EmbeddingObjective(comps0, comps1).gradient(p, omega.plan);
}

struct PgdResult {
  StiefelMatrix p;
  double objective = 0.0;
  int iterations = 0;
  std::vector<double> history;  // best-so-far objective, starting at P0
};

/// Projected gradient descent P <- kappa(P - eta grad). A step that does not
/// lower the objective is retried with eta halved (up to 20 times); after an
/// accepted step eta doubles again, capped at 2^20 times its initial value.
/// Stops on a relative decrease below objective_rel_tol, on a failed
/// backtrack, or after inner_pgd_iters steps. Only descending iterates are
/// accepted, so the returned point is the best one seen.
inline PgdResult pgd_stiefel(const std::function<double(const Matrix&)>& objective,
                             const std::function<Matrix(const Matrix&)>& gradient, const StiefelMatrix& p0,
                             const SolverConfig& config) {
  config.validate();
  PgdResult out{p0, objective(p0.matrix()), 0, {}};
  out.history.push_back(out.objective);
  const double eta_max = config.step_size_eta * std::ldexp(1.0, 20);
  double eta = config.step_size_eta;
  Matrix p = p0.matrix();
  for (int it = 0; it < config.inner_pgd_iters; ++it) {
    out.iterations = it + 1;
    const Matrix g = gradient(p);
    if (!g.allFinite()) fail(ErrorCode::kSolverFailure, "gradient is not finite");
    if (g.squaredNorm() == 0.0) break;
    bool accepted = false;
    StiefelMatrix candidate;
    double f_candidate = 0.0;
    for (int halving = 0; halving <= 20; ++halving) {
      candidate = project_stiefel(p - eta * g);
      f_candidate = objective(candidate.matrix());
      if (f_candidate < out.objective) {
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
    const double decrease = out.objective - f_candidate;
    const double before = out.objective;
    p = candidate.matrix();
    out.p = candidate;
    out.objective = f_candidate;
    out.history.push_back(f_candidate);
    if (decrease <= config.objective_rel_tol * std::abs(before)) break;
    eta = std::min(2.0 * eta, eta_max);
  }
  return out;
}

}  // namespace mixgw
