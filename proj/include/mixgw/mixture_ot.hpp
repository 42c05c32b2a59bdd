#pragma once

#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "mixgw/errors.hpp"
#include "mixgw/gaussian.hpp"
#include "mixgw/gmm.hpp"
#include "mixgw/linalg.hpp"
#include "mixgw/ot.hpp"
#include "mixgw/stiefel.hpp"

namespace mixgw {

/// Output of mw2 / mgw2 / mew2. `omega` always has g0's components as rows.
/// For mew2, `p` embeds the lower-dimensional mixture into the higher one
/// (`swapped` is set when that is g0) and `b` lives in the higher space.
struct DistanceResult {
  std::string metric;
  double squared = 0.0;
  double distance = 0.0;
  Coupling omega;
  std::optional<StiefelMatrix> p;
  std::optional<Vector> b;
  bool swapped = false;
  bool annealed = false;
  int iterations = 0;
  std::vector<double> history;
};

enum class Metric { kMw2, kMgw2, kMew2 };

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::kMw2: return "mw2";
    case Metric::kMgw2: return "mgw2";
    case Metric::kMew2: return "mew2";
  }
  return "unknown";
}

inline Metric parse_metric(const std::string& name) {
  if (name == "mw2") return Metric::kMw2;
  if (name == "mgw2") return Metric::kMgw2;
  if (name == "mew2") return Metric::kMew2;
  fail(ErrorCode::kInvalidConfig, "unknown metric '" + name + "'");
}

inline Matrix component_w2_matrix(const Gmm& g) {
  const Eigen::Index k = g.size();
  Matrix c = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      c(i, j) = w2_gaussian_sq(g.component(i), g.component(j));
      c(j, i) = c(i, j);
    }
  }
  return c;
}

inline Matrix cross_w2_matrix(const Gmm& g0, const Gmm& g1) {
  if (g0.dim() != g1.dim()) fail(ErrorCode::kDimensionMismatch, "mixtures live in different dimensions");
  Matrix c(g0.size(), g1.size());
  for (Eigen::Index k = 0; k < g0.size(); ++k) {
    for (Eigen::Index l = 0; l < g1.size(); ++l) c(k, l) = w2_gaussian_sq(g0.component(k), g1.component(l));
  }
  return c;
}

inline DistanceResult mw2(const Gmm& g0, const Gmm& g1) {
  const Matrix cost = cross_w2_matrix(g0, g1);
  DistanceResult out;
  out.metric = "mw2";
  out.omega = ot::solve_exact_ot(g0.weights(), g1.weights(), cost);
  out.squared = std::max(0.0, cost.cwiseProduct(out.omega.plan).sum());
  out.distance = std::sqrt(out.squared);
  out.iterations = out.omega.iterations;
  return out;
}

namespace detail {

// Annealing stages run on costs rescaled to a unit maximum so that eps0 and
// alpha mean the same thing whatever the units of the data.
inline double unit_scale(const Matrix& c) {
  const double m = c.size() > 0 ? c.maxCoeff() : 0.0;
  return m > 0.0 ? m : 1.0;
}

}  // namespace detail

/// Annealed GW between component-level W2 cost matrices, finished by an
/// unregularised conditional-gradient solve. With anneal_iters == 0 the
/// final solve starts from the product coupling.
inline DistanceResult mgw2(const Gmm& g0, const Gmm& g1, const SolverConfig& config = {}) {
  config.validate();
  const Matrix cx = component_w2_matrix(g0);
  const Matrix cy = component_w2_matrix(g1);
  const Vector& a = g0.weights();
  const Vector& b = g1.weights();
  const double scale = std::max(detail::unit_scale(cx), detail::unit_scale(cy));
  const Matrix nx = cx / scale;
  const Matrix ny = cy / scale;

  DistanceResult out;
  out.metric = "mgw2";
  Coupling omega = ot::product_coupling(a, b);
  double eps = config.anneal_eps0;
  for (int n = 0; n < config.anneal_iters; ++n) {
    omega = ot::solve_entropic_gw(a, b, nx, ny, eps, omega, config);
    out.iterations += omega.iterations;
    eps *= config.anneal_alpha;
  }
  out.annealed = config.anneal_iters > 0;
  out.omega = ot::solve_gw(a, b, cx, cy, omega, config);
  out.iterations += out.omega.iterations;
  out.history = out.omega.history;
  out.squared = ot::gw_objective_direct(out.omega.plan, cx, cy);
  out.distance = std::sqrt(out.squared);
  return out;
}

/// Annealed Stiefel initialisation from (centred) component means: entropic
/// OT between the means and the currently embedded target means, then the
/// projected cross-covariance of the means under that coupling. Starts from
/// `start` when given, otherwise from the truncated identity. Directions the
/// cross-covariance leaves free are kept from the previous iterate.
inline StiefelMatrix annealed_init_P(const Vector& a, const Vector& b, const Matrix& means0, const Matrix& means1,
                                     const SolverConfig& config = {}, const std::optional<StiefelMatrix>& start = std::nullopt) {
  config.validate();
  const Eigen::Index d = means0.cols();
  const Eigen::Index dp = means1.cols();
  if (d < dp) fail(ErrorCode::kDimensionOrder, "annealed_init_P requires d >= d'");
  if (means0.rows() != a.size() || means1.rows() != b.size()) fail(ErrorCode::kDimensionMismatch, "annealed_init_P mean counts");
  if (start && (start->rows() != d || start->cols() != dp)) fail(ErrorCode::kDimensionMismatch, "annealed_init_P start shape");

  StiefelMatrix p = start ? *start : StiefelMatrix::truncated_identity(d, dp);
  double eps = config.anneal_eps0;
  for (int i = 0; i < config.anneal_iters; ++i) {
    const Matrix embedded = means1 * p.matrix().transpose();
    Matrix cost(means0.rows(), means1.rows());
    for (Eigen::Index k = 0; k < means0.rows(); ++k) {
      for (Eigen::Index l = 0; l < means1.rows(); ++l) cost(k, l) = (means0.row(k) - embedded.row(l)).squaredNorm();
    }
    const Coupling omega = ot::sinkhorn(a, b, cost, eps, config);
    p = project_stiefel_toward(means0.transpose() * omega.plan * means1, p.matrix()).p;
    eps *= config.anneal_alpha;
  }
  return p;
}

namespace detail {

inline StiefelMatrix random_stiefel(Eigen::Index d, Eigen::Index dp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(d, dp);
  for (Eigen::Index j = 0; j < dp; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) m(i, j) = normal(rng);
  }
  return project_stiefel(m);
}

struct AlternationResult {
  double objective = std::numeric_limits<double>::infinity();
  Coupling omega;
  StiefelMatrix p;
  int iterations = 0;
  std::vector<double> history;
};

// Alternates exact OT for fixed P with projected gradient descent on P for
// fixed omega, then re-solves the OT once at the final P.
inline AlternationResult alternate_mew(const EmbeddingObjective& objective, const Vector& a, const Vector& b,
                                       StiefelMatrix p, const SolverConfig& config) {
  AlternationResult out;
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < config.max_outer_iters; ++it) {
    out.iterations = it + 1;
    const Matrix cost = objective.cost_matrix(p.matrix());
    out.omega = ot::solve_exact_ot(a, b, cost);
    out.history.push_back(cost.cwiseProduct(out.omega.plan).sum());
    const Matrix& plan = out.omega.plan;
    const PgdResult step = pgd_stiefel([&](const Matrix& m) { return objective.value(m, plan); },
                                       [&](const Matrix& m) { return objective.gradient(m, plan); }, p, config);
    p = step.p;
    out.history.push_back(step.objective);
    const double current = step.objective;
    if (std::isfinite(previous) && previous - current <= config.objective_rel_tol * std::abs(previous)) break;
    previous = current;
  }
  const Matrix cost = objective.cost_matrix(p.matrix());
  out.omega = ot::solve_exact_ot(a, b, cost);
  out.objective = std::max(0.0, cost.cwiseProduct(out.omega.plan).sum());
  out.history.push_back(out.objective);
  out.p = p;
  return out;
}

}  // namespace detail

/// Mixture embedded Wasserstein: both mixtures are centred, the
/// lower-dimensional one is embedded by P, and (omega, P) are optimised
/// alternately. Restart 0 uses the annealed initialisation (or the truncated
/// identity when anneal_iters == 0); further restarts start from seeded
/// random Stiefel points. The lowest objective wins.
inline DistanceResult mew2(const Gmm& g0, const Gmm& g1, const SolverConfig& config = {}) {
  config.validate();
  const bool swapped = g0.dim() < g1.dim();
  const Gmm& hi = swapped ? g1 : g0;
  const Gmm& lo = swapped ? g0 : g1;
  const auto [c0, e0] = center(hi);
  const auto [c1, e1] = center(lo);
  const EmbeddingObjective objective(c0.components(), c1.components());
  const Vector& a = c0.weights();
  const Vector& b = c1.weights();

  std::optional<detail::AlternationResult> best;
  for (int r = 0; r < config.n_restarts; ++r) {
    StiefelMatrix p0;
    if (r == 0) {
      p0 = config.anneal_iters > 0 ? annealed_init_P(a, b, c0.means(), c1.means(), config)
                                   : StiefelMatrix::truncated_identity(hi.dim(), lo.dim());
    } else {
      p0 = detail::random_stiefel(hi.dim(), lo.dim(), config.seed + static_cast<std::uint64_t>(r));
    }
    auto run = detail::alternate_mew(objective, a, b, p0, config);
    if (!best || run.objective < best->objective) best = std::move(run);
  }

  DistanceResult out;
  out.metric = "mew2";
  out.swapped = swapped;
  out.annealed = config.anneal_iters > 0;
  out.squared = best->objective;
  out.distance = std::sqrt(out.squared);
  out.iterations = best->iterations;
  out.history = best->history;
  out.omega = best->omega;
  if (swapped) out.omega.plan.transposeInPlace();
  out.p = best->p;
  out.b = e0 - best->p.matrix() * e1;
  return out;
}

inline DistanceResult compute_distance(Metric metric, const Gmm& g0, const Gmm& g1, const SolverConfig& config = {}) {
  switch (metric) {
    case Metric::kMw2: return mw2(g0, g1);
    case Metric::kMgw2: return mgw2(g0, g1, config);
    case Metric::kMew2: return mew2(g0, g1, config);
  }
  fail(ErrorCode::kInvalidConfig, "unknown metric");
}

/// Global affine registration after an MGW2 solve: P minimises J_omega over
/// the Stiefel manifold, started from the projected cross-covariance of the
/// centred means. Needs dim(g0) >= dim(g1).
struct Registration {
  StiefelMatrix p;
  Vector b;
  double objective = 0.0;
  double initial_objective = 0.0;
};

inline Registration mgw2_registration(const Gmm& g0, const Gmm& g1, const Coupling& omega, const SolverConfig& config = {}) {
  config.validate();
  if (g0.dim() < g1.dim()) fail(ErrorCode::kDimensionOrder, "registration embeds the lower-dimensional mixture into the higher");
  if (omega.plan.rows() != g0.size() || omega.plan.cols() != g1.size()) fail(ErrorCode::kDimensionMismatch, "coupling shape");
  const auto [c0, e0] = center(g0);
  const auto [c1, e1] = center(g1);
  const EmbeddingObjective objective(c0.components(), c1.components());
  const Matrix& plan = omega.plan;
  const Matrix cross = c0.means().transpose() * plan * c1.means();
  const StiefelProjection start = project_stiefel_toward(cross, Matrix::Identity(g0.dim(), g1.dim()));
  auto descend = [&](const StiefelMatrix& p0) {
    return pgd_stiefel([&](const Matrix& m) { return objective.value(m, plan); },
                       [&](const Matrix& m) { return objective.gradient(m, plan); }, p0, config);
  };
  PgdResult step = descend(start.p);
  const double initial = step.history.front();
  if (start.rank_deficient) {
    // The completed direction's sign is arbitrary and gradient steps cannot
    // cross between the two components of O(d'); also try the mirrored one.
    const Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullV);
    const Vector v = svd.matrixV().col(cross.cols() - 1);
    const Matrix mirror = Matrix::Identity(v.size(), v.size()) - 2.0 * v * v.transpose();
    PgdResult other = descend(project_stiefel(start.p.matrix() * mirror));
    if (other.objective < step.objective) step = std::move(other);
  }
  return {step.p, e0 - step.p.matrix() * e1, step.objective, initial};
}

/// Composite plan between two mixtures: omega at the component level, and for
/// every pair (k, l) an affine map R^d -> R^{d'} sending mu_k onto nu_l.
struct MixturePlan {
  Coupling omega;
  std::optional<StiefelMatrix> p_global;
  std::optional<Vector> b_global;
  std::vector<std::vector<AffineMap>> pair_maps;
  Gmm source;
  Gmm target;
};

/// Without a registration the pair maps are plain Gaussian Monge maps (equal
/// dimensions). With (P, b) the map for (k, l) is psi o T where T is the
/// Monge map from the centred mu_k to P applied to the centred nu_l, shifted
/// to raw coordinates, and psi(y) = P^T (y - b).
inline MixturePlan build_plan(const Gmm& g0, const Gmm& g1, const Coupling& omega,
                              const std::optional<StiefelMatrix>& p = std::nullopt,
                              const std::optional<Vector>& b = std::nullopt) {
  if (omega.plan.rows() != g0.size() || omega.plan.cols() != g1.size()) fail(ErrorCode::kDimensionMismatch, "coupling shape");
  if (ot::marginal_error(omega.plan, g0.weights(), g1.weights()) > 1e-8) fail(ErrorCode::kInfeasibleWeights, "coupling marginals");
  if (p.has_value() != b.has_value()) fail(ErrorCode::kInvalidConfig, "P and b must be given together");

  MixturePlan plan{omega, p, b, {}, g0, g1};
  plan.pair_maps.assign(static_cast<std::size_t>(g0.size()), std::vector<AffineMap>(static_cast<std::size_t>(g1.size())));
  if (!p) {
    if (g0.dim() != g1.dim()) fail(ErrorCode::kDimensionMismatch, "plan without registration needs equal dimensions");
    for (Eigen::Index k = 0; k < g0.size(); ++k) {
      for (Eigen::Index l = 0; l < g1.size(); ++l) {
        plan.pair_maps[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] = w2_gaussian_map(g0.component(k), g1.component(l));
      }
    }
    return plan;
  }

  const Matrix& pm = p->matrix();
  if (pm.rows() != g0.dim() || pm.cols() != g1.dim() || b->size() != g0.dim()) fail(ErrorCode::kDimensionMismatch, "registration shape");
  const auto [c0, e0] = center(g0);
  const auto [c1, e1] = center(g1);
  const Eigen::Index d = g0.dim();
  const AffineMap to_centered{Matrix::Identity(d, d), -e0};
  const AffineMap from_centered{Matrix::Identity(d, d), e0};
  const AffineMap psi{pm.transpose(), -pm.transpose() * *b};
  for (Eigen::Index l = 0; l < g1.size(); ++l) {
    const Gaussian& nu = c1.component(l);
    const Gaussian embedded(pm * nu.mean(), linalg::symmetrize(pm * nu.cov() * pm.transpose()));
    for (Eigen::Index k = 0; k < g0.size(); ++k) {
      const AffineMap monge = w2_gaussian_map(c0.component(k), embedded);
      plan.pair_maps[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] =
          psi.compose(from_centered.compose(monge.compose(to_centered)));
    }
  }
  return plan;
}

/// Conditional expectation of Y given X = x under the composite plan. Holds a
/// pointer to the plan, which must outlive the evaluator.
class TMean {
 public:
  explicit TMean(const MixturePlan& plan) : plan_(&plan), density_(plan.source) {
    log_weights_ = plan.source.weights().array().log().matrix();
  }

  /// Throws ZeroDensity when the source density at x is below 1e-300.
  Vector operator()(const Vector& x) const {
    const Vector lp = density_.component_log_densities(x);
    if (ot::detail::log_sum_exp(log_weights_ + lp) < kLogFloor) fail(ErrorCode::kZeroDensity, "source density underflows at query point");
    const double shift = lp.maxCoeff();
    const Eigen::Index nl = plan_->target.size();
    Vector num = Vector::Zero(plan_->target.dim());
    double den = 0.0;
    for (Eigen::Index k = 0; k < lp.size(); ++k) {
      const double r = std::exp(lp(k) - shift);
      if (r == 0.0) continue;
      den += plan_->source.weights()(k) * r;
      for (Eigen::Index l = 0; l < nl; ++l) {
        const double w = plan_->omega.plan(k, l);
        if (w > 0.0) num += (w * r) * map(k, l).apply(x);
      }
    }
    return num / den;
  }

  /// Falls back to the rows of the most responsible component when the
  /// density underflows.
  Vector with_fallback(const Vector& x) const {
    const Vector lp = density_.component_log_densities(x);
    const Vector la = log_weights_ + lp;
    if (ot::detail::log_sum_exp(la) >= kLogFloor) return (*this)(x);
    Eigen::Index k = 0;
    la.maxCoeff(&k);
    Vector num = Vector::Zero(plan_->target.dim());
    double den = 0.0;
    for (Eigen::Index l = 0; l < plan_->target.size(); ++l) {
      const double w = plan_->omega.plan(k, l);
      if (w > 0.0) {
        num += w * map(k, l).apply(x);
        den += w;
      }
    }
    return num / den;
  }

  Matrix apply_rows(const Matrix& xs, bool fallback) const {
    Matrix out(xs.rows(), plan_->target.dim());
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      const Vector x = xs.row(i).transpose();
      out.row(i) = (fallback ? with_fallback(x) : (*this)(x)).transpose();
    }
    return out;
  }

 private:
  static constexpr double kLogFloor = -690.7755278982137;  // log(1e-300)

  const AffineMap& map(Eigen::Index k, Eigen::Index l) const {
    return plan_->pair_maps[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)];
  }

  const MixturePlan* plan_;
  GmmDensity density_;
  Vector log_weights_;
};

inline Vector t_mean(const MixturePlan& plan, const Vector& x) {
  if (x.size() != plan.source.dim()) fail(ErrorCode::kDimensionMismatch, "t_mean query dimension");
  return TMean(plan)(x);
}

inline double distortion_score(const Matrix& mapped, const Matrix& truth) {
  if (mapped.rows() != truth.rows() || mapped.cols() != truth.cols()) fail(ErrorCode::kDimensionMismatch, "distortion inputs differ in shape");
  if (mapped.rows() == 0) return 0.0;
  return (mapped - truth).rowwise().squaredNorm().mean();
}

struct MatchResult {
  std::vector<Eigen::Index> assignment;
  Matrix mapped_points;
  std::optional<double> distortion;
};

/// Nearest target row for every query row (first index wins ties).
inline std::vector<Eigen::Index> nearest_rows(const Matrix& queries, const Matrix& ys) {
  if (ys.rows() == 0) fail(ErrorCode::kTooFewPoints, "no target points to match against");
  if (queries.cols() != ys.cols()) fail(ErrorCode::kDimensionMismatch, "nearest-neighbour dimensions");
  std::vector<Eigen::Index> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < ys.rows(); ++j) {
      const double dist = (ys.row(j) - queries.row(i)).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = j;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

/// Maps every source row with T_mean (underflow fallback enabled), assigns
/// it to the nearest target row and, given ground-truth correspondents of the
/// source rows, scores the assigned target rows against them.
inline MatchResult match_points(const MixturePlan& plan, const Matrix& xs, const Matrix& ys,
                                const std::optional<Matrix>& truth = std::nullopt) {
  if (xs.cols() != plan.source.dim() || ys.cols() != plan.target.dim()) fail(ErrorCode::kDimensionMismatch, "point dimensions");
  MatchResult out;
  out.mapped_points = TMean(plan).apply_rows(xs, true);
  out.assignment = nearest_rows(out.mapped_points, ys);
  if (truth) {
    Matrix assigned(xs.rows(), ys.cols());
    for (Eigen::Index i = 0; i < xs.rows(); ++i) assigned.row(i) = ys.row(out.assignment[static_cast<std::size_t>(i)]);
    out.distortion = distortion_score(assigned, *truth);
  }
  return out;
}

/// Symmetric matrix of pairwise distances (square roots of the squared
/// values). Each unordered pair is solved once with the same config, so the
/// result does not depend on the number of workers.
inline Matrix pairwise_distance_matrix(const std::vector<Gmm>& gmms, Metric metric, const SolverConfig& config = {},
                                       unsigned workers = 1) {
  if (gmms.size() < 2) fail(ErrorCode::kInvalidConfig, "pairwise distances need at least two mixtures");
  const auto n = static_cast<Eigen::Index>(gmms.size());
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  Matrix out = Matrix::Zero(n, n);
  std::vector<std::exception_ptr> errors(pairs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t t = next++; t < pairs.size(); t = next++) {
      const auto [i, j] = pairs[t];
      try {
        out(i, j) = compute_distance(metric, gmms[static_cast<std::size_t>(i)], gmms[static_cast<std::size_t>(j)], config).distance;
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const unsigned count = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(pairs.size())));
  if (count == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < count; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) out(j, i) = out(i, j);
  }
  return out;
}

}  // namespace mixgw
