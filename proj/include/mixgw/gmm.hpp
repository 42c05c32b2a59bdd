#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "mixgw/errors.hpp"
#include "mixgw/gaussian.hpp"
#include "mixgw/linalg.hpp"

namespace mixgw {

/// Finite Gaussian mixture: positive weights summing to one, components of a
/// common dimension. Components that coincide to 1e-12 are merged.
class Gmm {
 public:
  Gmm() = default;

  Gmm(Vector weights, std::vector<Gaussian> components) {
    if (weights.size() != static_cast<Eigen::Index>(components.size()) || components.empty()) {
      fail(ErrorCode::kDimensionMismatch, "gmm needs one weight per component and at least one component");
    }
    const Eigen::Index d = components.front().dim();
    for (const auto& c : components) {
      if (c.dim() != d) fail(ErrorCode::kDimensionMismatch, "gmm components have different dimensions");
    }
    for (Eigen::Index k = 0; k < weights.size(); ++k) {
      if (!std::isfinite(weights(k)) || weights(k) <= 0.0) fail(ErrorCode::kInvalidWeights, "gmm weights must be positive");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-9) fail(ErrorCode::kInvalidWeights, "gmm weights must sum to 1");

    std::vector<double> merged_w;
    for (std::size_t k = 0; k < components.size(); ++k) {
      bool merged = false;
      for (std::size_t m = 0; m < components_.size(); ++m) {
        const double gap = (components_[m].mean() - components[k].mean()).norm() +
                           (components_[m].cov() - components[k].cov()).norm();
        if (gap <= 1e-12) {
          merged_w[m] += weights(static_cast<Eigen::Index>(k));
          merged = true;
          break;
        }
      }
      if (!merged) {
        components_.push_back(components[k]);
        merged_w.push_back(weights(static_cast<Eigen::Index>(k)));
      }
    }
    weights_ = Eigen::Map<Vector>(merged_w.data(), static_cast<Eigen::Index>(merged_w.size()));
  }

  Eigen::Index dim() const { return components_.empty() ? 0 : components_.front().dim(); }
  Eigen::Index size() const { return weights_.size(); }
  const Vector& weights() const { return weights_; }
  const std::vector<Gaussian>& components() const { return components_; }
  const Gaussian& component(Eigen::Index k) const { return components_[static_cast<std::size_t>(k)]; }

  /// E[X] = sum_k a_k m_k.
  Vector mean() const {
    Vector m = Vector::Zero(dim());
    for (Eigen::Index k = 0; k < size(); ++k) m += weights_(k) * component(k).mean();
    return m;
  }

  /// Mixture covariance: sum_k a_k (S_k + m_k m_k^T) - E[X] E[X]^T.
  Matrix covariance() const {
    const Vector mu = mean();
    Matrix c = Matrix::Zero(dim(), dim());
    for (Eigen::Index k = 0; k < size(); ++k) {
      const Vector dm = component(k).mean() - mu;
      c += weights_(k) * (component(k).cov() + dm * dm.transpose());
    }
    return linalg::symmetrize(c);
  }

  /// K x d matrix of component means.
  Matrix means() const {
    Matrix m(size(), dim());
    for (Eigen::Index k = 0; k < size(); ++k) m.row(k) = component(k).mean().transpose();
    return m;
  }

 private:
  Vector weights_;
  std::vector<Gaussian> components_;
};

/// Shifts every component by -E[X]; returns the centred mixture and E[X].
inline std::pair<Gmm, Vector> center(const Gmm& gmm) {
  const Vector mu = gmm.mean();
  std::vector<Gaussian> comps;
  comps.reserve(static_cast<std::size_t>(gmm.size()));
  for (const auto& c : gmm.components()) comps.emplace_back(c.mean() - mu, c.cov());
  return {Gmm(gmm.weights(), std::move(comps)), mu};
}

/// Push-forward by an affine map: N(m, S) -> N(P m + b, P S P^T).
inline Gmm transform(const Gmm& gmm, const AffineMap& map) {
  if (map.in_dim() != gmm.dim() || map.offset.size() != map.out_dim()) fail(ErrorCode::kDimensionMismatch, "transform map shape");
  std::vector<Gaussian> comps;
  comps.reserve(static_cast<std::size_t>(gmm.size()));
  for (const auto& c : gmm.components()) {
    comps.emplace_back(map.linear * c.mean() + map.offset, linalg::symmetrize(map.linear * c.cov() * map.linear.transpose()));
  }
  return Gmm(gmm.weights(), std::move(comps));
}

/// Cached per-component factorizations for repeated density evaluation.
class GmmDensity {
 public:
  explicit GmmDensity(const Gmm& gmm) : gmm_(&gmm) {
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    for (const auto& c : gmm.components()) {
      const Matrix cov = linalg::regularize_pd(c.cov());
      Eigen::LLT<Matrix> llt(cov);
      if (llt.info() != Eigen::Success) fail(ErrorCode::kSingularComponent, "component covariance is not positive definite");
      const Matrix l = llt.matrixL();
      const double log_det = 2.0 * l.diagonal().array().log().sum();
      if (!std::isfinite(log_det)) fail(ErrorCode::kSingularComponent, "component covariance is singular");
      factors_.push_back(l);
      log_norm_.push_back(-0.5 * (log_det + static_cast<double>(gmm.dim()) * log_2pi));
    }
  }

  /// log p_{mu_k}(x) for every component.
  Vector component_log_densities(const Vector& x) const {
    if (x.size() != gmm_->dim()) fail(ErrorCode::kDimensionMismatch, "density query dimension");
    Vector out(gmm_->size());
    for (Eigen::Index k = 0; k < gmm_->size(); ++k) {
      const Vector z = factors_[static_cast<std::size_t>(k)].triangularView<Eigen::Lower>().solve(x - gmm_->component(k).mean());
      out(k) = log_norm_[static_cast<std::size_t>(k)] - 0.5 * z.squaredNorm();
    }
    return out;
  }

  Vector component_densities(const Vector& x) const { return component_log_densities(x).array().exp().matrix(); }

  double density(const Vector& x) const { return gmm_->weights().dot(component_densities(x)); }

  double log_density(const Vector& x) const {
    const Vector lw = component_log_densities(x) + gmm_->weights().array().log().matrix();
    const double m = lw.maxCoeff();
    return m + std::log((lw.array() - m).exp().sum());
  }

  /// Log-densities of every row of `points` (n x K matrix).
  Matrix log_density_table(const Matrix& points) const {
    Matrix out(points.rows(), gmm_->size());
    for (Eigen::Index k = 0; k < gmm_->size(); ++k) {
      const Matrix centred = (points.rowwise() - gmm_->component(k).mean().transpose()).transpose();
      const Matrix z = factors_[static_cast<std::size_t>(k)].triangularView<Eigen::Lower>().solve(centred);
      out.col(k) = (log_norm_[static_cast<std::size_t>(k)] - 0.5 * z.colwise().squaredNorm().array()).matrix().transpose();
    }
    return out;
  }

 private:
  const Gmm* gmm_;
  std::vector<Matrix> factors_;
  std::vector<double> log_norm_;
};

inline double density(const Gmm& gmm, const Vector& x) { return GmmDensity(gmm).density(x); }

inline Vector component_densities(const Gmm& gmm, const Vector& x) { return GmmDensity(gmm).component_densities(x); }

/// n i.i.d. draws (rows); deterministic for a given seed.
inline Matrix sample(const Gmm& gmm, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) fail(ErrorCode::kInvalidConfig, "sample count must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<double> w(gmm.weights().data(), gmm.weights().data() + gmm.size());
  std::discrete_distribution<Eigen::Index> pick(w.begin(), w.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Matrix> roots;
  for (const auto& c : gmm.components()) roots.push_back(linalg::psd_sqrt(c.cov()));
  Matrix out(n, gmm.dim());
  Vector z(gmm.dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index k = gmm.size() == 1 ? 0 : pick(rng);
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = normal(rng);
    out.row(i) = (gmm.component(k).mean() + roots[static_cast<std::size_t>(k)] * z).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// EM fitting

struct EmConfig {
  int n_components = 1;
  int max_iters = 500;
  double loglik_rel_tol = 1e-10;
  int n_restarts = 1;
  std::optional<double> cov_reg;  // default: 1e-6 * average feature variance
  std::uint64_t seed = 0;
};

struct EmResult {
  Gmm gmm;
  std::vector<double> loglik_history;  // of the retained restart
  int iterations = 0;
};

namespace detail {

inline double log_sum_exp_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double m = row.maxCoeff();
  return m + std::log((row.array() - m).exp().sum());
}

// Rows of `points` in lexicographic order, so that seeding does not depend
// on the order in which points were supplied.
inline std::vector<Eigen::Index> lexicographic_order(const Matrix& points) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
      if (points(i, c) != points(j, c)) return points(i, c) < points(j, c);
    }
    return false;
  });
  return order;
}

inline Matrix kmeanspp_seed(const Matrix& points, const std::vector<Eigen::Index>& order, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  Matrix centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = points.row(order[static_cast<std::size_t>(first(rng))]);
  Vector dist2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i : order) total += dist2(i);
    Eigen::Index chosen = order.back();
    if (total > 0.0) {
      const double target = unif(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i : order) {
        acc += dist2(i);
        if (acc >= target && dist2(i) > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = order[static_cast<std::size_t>(first(rng))];
    }
    centers.row(c) = points.row(chosen);
    dist2 = dist2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

struct EmState {
  Vector weights;
  std::vector<Vector> means;
  std::vector<Matrix> covs;
};

inline void m_step(const Matrix& points, const Matrix& resp, double cov_reg, EmState& state) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  const Eigen::Index k = resp.cols();
  state.weights.resize(k);
  state.means.assign(static_cast<std::size_t>(k), Vector());
  state.covs.assign(static_cast<std::size_t>(k), Matrix());
  for (Eigen::Index c = 0; c < k; ++c) {
    const double nk = resp.col(c).sum();
    if (!(nk > 1e-12 * static_cast<double>(n))) fail(ErrorCode::kDegenerateComponent, "a mixture component lost all its points");
    if (cov_reg == 0.0 && nk < static_cast<double>(d + 1)) {
      fail(ErrorCode::kDegenerateComponent, "a component captures fewer than d+1 effective points and cov_reg = 0");
    }
    const Vector mean = (points.transpose() * resp.col(c)) / nk;
    const Matrix centred = points.rowwise() - mean.transpose();
    Matrix cov = (centred.transpose() * resp.col(c).asDiagonal() * centred) / nk;
    cov = linalg::symmetrize(cov) + cov_reg * Matrix::Identity(d, d);
    state.weights(c) = nk / static_cast<double>(n);
    state.means[static_cast<std::size_t>(c)] = mean;
    state.covs[static_cast<std::size_t>(c)] = cov;
  }
  state.weights /= state.weights.sum();
}

// Returns (log-likelihood, responsibilities).
inline std::pair<double, Matrix> e_step(const Matrix& points, const EmState& state) {
  std::vector<Gaussian> comps;
  for (std::size_t c = 0; c < state.means.size(); ++c) comps.emplace_back(state.means[c], state.covs[c]);
  Gmm gmm(state.weights, comps);
  if (gmm.size() != state.weights.size()) fail(ErrorCode::kDegenerateComponent, "two mixture components coincide");
  Matrix table = GmmDensity(gmm).log_density_table(points);
  table.rowwise() += state.weights.array().log().matrix().transpose();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const double lse = log_sum_exp_row(table.row(i));
    ll += lse;
    table.row(i) = (table.row(i).array() - lse).exp().matrix();
  }
  return {ll, table};
}

}  // namespace detail

/// EM with full covariances. Initialisation: k-means++ seeding over the
/// lexicographically sorted points, one Lloyd pass, then EM iterations until
/// the relative log-likelihood gain drops below the tolerance. Best restart wins.
inline EmResult fit_em_detailed(const Matrix& points, const EmConfig& config) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  if (config.n_components < 1 || config.max_iters < 1 || config.n_restarts < 1) fail(ErrorCode::kInvalidConfig, "em config counts");
  if (config.cov_reg && *config.cov_reg < 0.0) fail(ErrorCode::kInvalidConfig, "cov_reg must be >= 0");
  if (n < config.n_components) fail(ErrorCode::kTooFewPoints, "too few points for the requested number of components");
  if (d < 1 || !points.allFinite()) fail(ErrorCode::kInvalidConfig, "points must be finite with at least one column");

  const int k = config.n_components;
  double cov_reg = 0.0;
  if (config.cov_reg) {
    cov_reg = *config.cov_reg;
  } else {
    const Matrix centred = points.rowwise() - points.colwise().mean();
    cov_reg = 1e-6 * (centred.colwise().squaredNorm().sum() / static_cast<double>(n)) / static_cast<double>(d);
  }
  const auto order = detail::lexicographic_order(points);

  std::optional<EmResult> best;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < config.n_restarts; ++restart) {
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(restart)};
    std::mt19937_64 rng(seq);
    const Matrix centers = detail::kmeanspp_seed(points, order, k, rng);

    // one Lloyd pass: assign, recompute centres
    Matrix resp = Matrix::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&arg);
      resp(i, arg) = 1.0;
    }
    Matrix assignment = resp;
    Matrix updated = centers;
    for (int c = 0; c < k; ++c) {
      const double cnt = assignment.col(c).sum();
      if (cnt > 0.0) updated.row(c) = (assignment.col(c).transpose() * points) / cnt;
    }
    resp.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      (updated.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&arg);
      resp(i, arg) = 1.0;
    }

    detail::EmState state;
    detail::m_step(points, resp, cov_reg, state);
    EmResult result;
    double ll_prev = -std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < config.max_iters; ++it) {
      auto [ll, r] = detail::e_step(points, state);
      result.loglik_history.push_back(ll);
      if (std::isfinite(ll_prev) && ll - ll_prev <= config.loglik_rel_tol * std::abs(ll)) break;
      ll_prev = ll;
      detail::m_step(points, r, cov_reg, state);
    }
    result.iterations = it;
    std::vector<Gaussian> comps;
    for (std::size_t c = 0; c < state.means.size(); ++c) comps.emplace_back(state.means[c], state.covs[c]);
    result.gmm = Gmm(state.weights, std::move(comps));
    const double final_ll = result.loglik_history.back();
    if (!best || final_ll > best_ll) {
      best_ll = final_ll;
      best = std::move(result);
    }
  }
  return std::move(*best);
}

inline Gmm fit_em(const Matrix& points, const EmConfig& config) { return fit_em_detailed(points, config).gmm; }

}  // namespace mixgw
