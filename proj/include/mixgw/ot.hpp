#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mixgw/errors.hpp"
#include "mixgw/linalg.hpp"

namespace mixgw {

/// Tuning knobs shared by the OT, GW and Stiefel solvers.
struct SolverConfig {
  int max_outer_iters = 200;
  double objective_rel_tol = 1e-10;
  double anneal_eps0 = 1.0;
  double anneal_alpha = 0.95;
  int anneal_iters = 10;  // 0 disables annealing
  double step_size_eta = 0.01;
  int inner_pgd_iters = 500;
  std::uint64_t seed = 0;
  int sinkhorn_max_iters = 100000;
  int n_restarts = 1;

  void validate() const {
    if (!(anneal_alpha > 0.0 && anneal_alpha < 1.0)) fail(ErrorCode::kInvalidConfig, "anneal_alpha must lie in (0,1)");
    if (max_outer_iters < 1 || inner_pgd_iters < 1 || sinkhorn_max_iters < 1 || n_restarts < 1) {
      fail(ErrorCode::kInvalidConfig, "iteration counts must be >= 1");
    }
    if (anneal_iters < 0) fail(ErrorCode::kInvalidConfig, "anneal_iters must be >= 0");
    if (!(objective_rel_tol > 0.0) || !(anneal_eps0 > 0.0) || !(step_size_eta > 0.0)) {
      fail(ErrorCode::kInvalidConfig, "tolerances and step sizes must be positive");
    }
  }
};

/// A transport plan together with solver bookkeeping.
struct Coupling {
  Matrix plan;
  double value = 0.0;
  int iterations = 0;
  bool converged = true;
  std::string rounding = "none";
  std::vector<double> history;  // objective after each accepted iterate (GW solvers)
};

namespace ot {

enum class CouplingKind { kExact, kEntropic };

/// Optional callback invoked with every coupling a solver returns; used to
/// audit marginal feasibility. May be called from several threads at once.
using CouplingObserver = std::function<void(const Coupling&, const Vector&, const Vector&, CouplingKind)>;

inline CouplingObserver& coupling_observer() {
  static CouplingObserver observer;
  return observer;
}

namespace detail {

inline Coupling emit(Coupling c, const Vector& a, const Vector& b, CouplingKind kind) {
  if (const auto& observer = coupling_observer()) observer(c, a, b, kind);
  return c;
}

}  // namespace detail

inline void check_weights(const Vector& w, const char* what) {
  if (w.size() == 0) fail(ErrorCode::kInvalidWeights, std::string(what) + ": empty weight vector");
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w(i)) || w(i) < 0.0) fail(ErrorCode::kInvalidWeights, std::string(what) + ": negative or non-finite weight");
  }
  if (std::abs(w.sum() - 1.0) > 1e-9) fail(ErrorCode::kInvalidWeights, std::string(what) + ": weights must sum to 1");
}

/// Max absolute deviation of the plan's row and column sums from (a, b).
inline double marginal_error(const Matrix& plan, const Vector& a, const Vector& b) {
  const double row = (plan.rowwise().sum() - a).cwiseAbs().maxCoeff();
  const double col = (plan.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
  return std::max(row, col);
}

inline void check_problem(const Vector& a, const Vector& b, const Matrix& cost) {
  if (cost.rows() != a.size() || cost.cols() != b.size()) fail(ErrorCode::kDimensionMismatch, "cost matrix shape does not match weights");
  if (!cost.allFinite()) fail(ErrorCode::kInvalidConfig, "cost matrix has non-finite entries");
}

namespace detail {

// Transportation simplex over the spanning-tree basis of the bipartite graph
// rows {0..K-1} / columns {K..K+L-1}. Basis cells are stored with their flow.
class TransportSimplex {
 public:
  TransportSimplex(const Vector& a, const Vector& b, const Matrix& cost)
      : k_(a.size()), l_(b.size()), cost_(cost), flow_(Matrix::Zero(a.size(), b.size())),
        basic_(Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(a.size(), b.size(), false)) {
    northwest_corner(a, b);
    scale_ = 1.0 + cost.cwiseAbs().maxCoeff();
  }

  int solve() {
    const long max_pivots = 200L * (k_ + l_) * (k_ + l_) + 1000;
    int pivots = 0;
    int degenerate_run = 0;
    const double tol = 1e-12 * scale_;
    while (true) {
      compute_potentials();
      const bool bland = degenerate_run > 50;
      Eigen::Index ei = -1, ej = -1;
      double best = -tol;
      for (Eigen::Index i = 0; i < k_ && !(bland && ei >= 0); ++i) {
        for (Eigen::Index j = 0; j < l_; ++j) {
          if (basic_(i, j)) continue;
          const double reduced = cost_(i, j) - u_(i) - v_(j);
          if (reduced < best) {
            best = reduced;
            ei = i;
            ej = j;
            if (bland) break;
          }
        }
      }
      if (ei < 0) break;
      if (++pivots > max_pivots) fail(ErrorCode::kSolverFailure, "transportation simplex exceeded pivot budget");
      const bool degenerate = pivot(ei, ej);
      degenerate_run = degenerate ? degenerate_run + 1 : 0;
    }
    return pivots;
  }

  const Matrix& flow() const { return flow_; }

 private:
  void northwest_corner(const Vector& a, const Vector& b) {
    Vector rem_a = a;
    Vector rem_b = b;
    Eigen::Index i = 0, j = 0;
    while (i < k_ && j < l_) {
      const double x = std::min(rem_a(i), rem_b(j));
      flow_(i, j) = x;
      basic_(i, j) = true;
      cells_.push_back({i, j});
      const bool row_done = rem_a(i) <= rem_b(j);
      rem_a(i) -= x;
      rem_b(j) -= x;
      if (i == k_ - 1) {
        ++j;
      } else if (j == l_ - 1) {
        ++i;
      } else if (row_done) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  void build_adjacency() {
    adjacency_.assign(static_cast<std::size_t>(k_ + l_), {});
    for (std::size_t c = 0; c < cells_.size(); ++c) {
      const auto [i, j] = cells_[c];
      adjacency_[static_cast<std::size_t>(i)].push_back({k_ + j, static_cast<Eigen::Index>(c)});
      adjacency_[static_cast<std::size_t>(k_ + j)].push_back({i, static_cast<Eigen::Index>(c)});
    }
  }

  void compute_potentials() {
    build_adjacency();
    u_ = Vector::Zero(k_);
    v_ = Vector::Zero(l_);
    std::vector<char> seen(static_cast<std::size_t>(k_ + l_), 0);
    std::vector<Eigen::Index> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const Eigen::Index node = stack.back();
      stack.pop_back();
      for (const auto& [next, cell] : adjacency_[static_cast<std::size_t>(node)]) {
        if (seen[static_cast<std::size_t>(next)]) continue;
        seen[static_cast<std::size_t>(next)] = 1;
        const auto [i, j] = cells_[static_cast<std::size_t>(cell)];
        if (next >= k_) {
          v_(j) = cost_(i, j) - u_(i);
        } else {
          u_(i) = cost_(i, j) - v_(j);
        }
        stack.push_back(next);
      }
    }
  }

  // Returns true when the pivot moved zero flow.
  bool pivot(Eigen::Index ei, Eigen::Index ej) {
    // Tree path from column node (k + ej) back to row node ei.
    const std::size_t n = static_cast<std::size_t>(k_ + l_);
    std::vector<Eigen::Index> parent_cell(n, -1), parent_node(n, -1);
    std::vector<char> seen(n, 0);
    std::vector<Eigen::Index> queue{ei};
    seen[static_cast<std::size_t>(ei)] = 1;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const Eigen::Index node = queue[head];
      if (node == k_ + ej) break;
      for (const auto& [next, cell] : adjacency_[static_cast<std::size_t>(node)]) {
        if (seen[static_cast<std::size_t>(next)]) continue;
        seen[static_cast<std::size_t>(next)] = 1;
        parent_cell[static_cast<std::size_t>(next)] = cell;
        parent_node[static_cast<std::size_t>(next)] = node;
        queue.push_back(next);
      }
    }
    std::vector<Eigen::Index> path;  // cells from the column end, alternating -, +, -, ...
    for (Eigen::Index node = k_ + ej; node != ei; node = parent_node[static_cast<std::size_t>(node)]) {
      path.push_back(parent_cell[static_cast<std::size_t>(node)]);
    }

    double theta = std::numeric_limits<double>::infinity();
    Eigen::Index leave = -1;
    for (std::size_t p = 0; p < path.size(); p += 2) {
      const auto cell = cells_[static_cast<std::size_t>(path[p])];
      const double x = flow_(cell[0], cell[1]);
      const bool better = x < theta ||
                          (x == theta && leave >= 0 && cell < cells_[static_cast<std::size_t>(leave)]);
      if (better) {
        theta = x;
        leave = path[p];
      }
    }
    for (std::size_t p = 0; p < path.size(); ++p) {
      const auto cell = cells_[static_cast<std::size_t>(path[p])];
      if (p % 2 == 0) {
        flow_(cell[0], cell[1]) -= theta;
      } else {
        flow_(cell[0], cell[1]) += theta;
      }
    }
    const auto out = cells_[static_cast<std::size_t>(leave)];
    flow_(out[0], out[1]) = 0.0;
    basic_(out[0], out[1]) = false;
    flow_(ei, ej) = theta;
    basic_(ei, ej) = true;
    cells_[static_cast<std::size_t>(leave)] = {ei, ej};
    return theta == 0.0;
  }

  Eigen::Index k_, l_;
  const Matrix& cost_;
  Matrix flow_;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> basic_;
  std::vector<std::array<Eigen::Index, 2>> cells_;
  std::vector<std::vector<std::pair<Eigen::Index, Eigen::Index>>> adjacency_;
  Vector u_, v_;
  double scale_ = 1.0;
};

inline double log_sum_exp(const Vector& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

// Rounds a nearly feasible nonnegative plan onto the transport polytope:
// scale overfull rows and columns down, then add the rank-one correction.
inline Matrix round_to_marginals(Matrix plan, const Vector& a, const Vector& b) {
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    const double r = plan.row(i).sum();
    if (r > a(i) && r > 0.0) plan.row(i) *= a(i) / r;
  }
  for (Eigen::Index j = 0; j < plan.cols(); ++j) {
    const double c = plan.col(j).sum();
    if (c > b(j) && c > 0.0) plan.col(j) *= b(j) / c;
  }
  const Vector err_r = (a - plan.rowwise().sum()).cwiseMax(0.0);
  const Vector err_c = (b - plan.colwise().sum().transpose()).cwiseMax(0.0);
  const double mass = err_r.sum();
  if (mass > 0.0) plan += err_r * err_c.transpose() / mass;
  return plan;
}

}  // namespace detail

/// Exact discrete OT by the transportation simplex (north-west corner start,
/// Dantzig pricing with row-major tie-breaking, Bland fallback on long
/// degenerate runs). Deterministic for a given input.
inline Coupling solve_exact_ot(const Vector& a, const Vector& b, const Matrix& cost) {
  check_problem(a, b, cost);
  check_weights(a, "solve_exact_ot source");
  check_weights(b, "solve_exact_ot target");
  if (std::abs(a.sum() - b.sum()) > 1e-9) fail(ErrorCode::kInfeasibleWeights, "source and target masses differ");

  detail::TransportSimplex simplex(a, b, cost);
  Coupling out;
  out.iterations = simplex.solve();
  out.plan = simplex.flow().cwiseMax(0.0);
  out.value = cost.cwiseProduct(out.plan).sum();
  const double tol = 1e-9 + std::abs(a.sum() - b.sum());
  if (marginal_error(out.plan, a, b) > tol) fail(ErrorCode::kSolverFailure, "exact OT marginals violated");
  return detail::emit(std::move(out), a, b, CouplingKind::kExact);
}

/// Entropic OT: argmin <C, P> + eps * sum P log P over the transport polytope.
/// Runs in the scaling domain unless exp(-C/eps) would underflow, in which
/// case it switches to log-domain potentials. The returned plan is rounded
/// onto the exact marginals (`rounding` records this).
inline Coupling sinkhorn(const Vector& a, const Vector& b, const Matrix& cost, double eps, const SolverConfig& config) {
  check_problem(a, b, cost);
  check_weights(a, "sinkhorn source");
  check_weights(b, "sinkhorn target");
  if (!(eps > 0.0)) fail(ErrorCode::kInvalidConfig, "sinkhorn eps must be positive");
  if ((a.array() <= 0.0).any() || (b.array() <= 0.0).any()) fail(ErrorCode::kInvalidWeights, "sinkhorn requires positive weights");

  const double shift = cost.minCoeff();
  const Matrix shifted = cost.array() - shift;
  const double range = shifted.maxCoeff();
  const double tol = 1e-9;
  const int check_every = 5;

  Coupling out;
  out.converged = false;
  Matrix plan;

  if (range / eps <= 500.0) {
    const Matrix kernel = (-shifted / eps).array().exp().matrix();
    Vector u = Vector::Ones(a.size());
    Vector v = Vector::Ones(b.size());
    int it = 0;
    for (; it < config.sinkhorn_max_iters; ++it) {
      u = a.cwiseQuotient(kernel * v);
      v = b.cwiseQuotient(kernel.transpose() * u);
      if (!u.allFinite() || !v.allFinite()) fail(ErrorCode::kNumericalUnderflow, "sinkhorn scaling overflowed");
      if ((it + 1) % check_every == 0) {
        const double err = (u.cwiseProduct(kernel * v) - a).cwiseAbs().maxCoeff();
        if (err <= tol) {
          out.converged = true;
          ++it;
          break;
        }
      }
    }
    out.iterations = it;
    plan = u.asDiagonal() * kernel * v.asDiagonal();
  } else {
    const Vector log_a = a.array().log().matrix();
    const Vector log_b = b.array().log().matrix();
    Vector f = Vector::Zero(a.size());
    Vector g = Vector::Zero(b.size());
    Vector scratch_row(b.size()), scratch_col(a.size());
    auto update_f = [&] {
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        scratch_row = (g - shifted.row(i).transpose()) / eps;
        f(i) = eps * (log_a(i) - detail::log_sum_exp(scratch_row));
      }
    };
    auto update_g = [&] {
      for (Eigen::Index j = 0; j < b.size(); ++j) {
        scratch_col = (f - shifted.col(j)) / eps;
        g(j) = eps * (log_b(j) - detail::log_sum_exp(scratch_col));
      }
    };
    auto build = [&] {
      Matrix p(a.size(), b.size());
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        for (Eigen::Index j = 0; j < b.size(); ++j) p(i, j) = std::exp((f(i) + g(j) - shifted(i, j)) / eps);
      }
      return p;
    };
    int it = 0;
    for (; it < config.sinkhorn_max_iters; ++it) {
      update_f();
      update_g();
      if (!f.allFinite() || !g.allFinite()) fail(ErrorCode::kNumericalUnderflow, "log-domain sinkhorn produced non-finite potentials");
      if ((it + 1) % check_every == 0) {
        const double err = (build().rowwise().sum() - a).cwiseAbs().maxCoeff();
        if (err <= tol) {
          out.converged = true;
          ++it;
          break;
        }
      }
    }
    out.iterations = it;
    plan = build();
  }

  if (!plan.allFinite()) fail(ErrorCode::kNumericalUnderflow, "sinkhorn plan is not finite");
  if (plan.sum() <= 0.0) fail(ErrorCode::kNumericalUnderflow, "sinkhorn plan underflowed to zero");
  out.plan = detail::round_to_marginals(plan, a, b);
  out.rounding = "row-column-rescale+rank-one";
  out.value = cost.cwiseProduct(out.plan).sum();
  if (marginal_error(out.plan, a, b) > 1e-9) fail(ErrorCode::kSolverFailure, "sinkhorn marginals violated after rounding");
  return detail::emit(std::move(out), a, b, CouplingKind::kEntropic);
}

/// Squared-loss GW objective sum_{ijkl} (Cx_ik - Cy_jl)^2 P_ij P_kl, evaluated
/// as p^T Cx^2 p + q^T Cy^2 q - 2 <Cx P Cy^T, P> with p, q the plan marginals.
inline double gw_objective(const Matrix& plan, const Matrix& cx, const Matrix& cy) {
  if (cx.rows() != cx.cols() || cy.rows() != cy.cols() || plan.rows() != cx.rows() || plan.cols() != cy.rows()) {
    fail(ErrorCode::kDimensionMismatch, "gw_objective shapes");
  }
  const Vector p = plan.rowwise().sum();
  const Vector q = plan.colwise().sum().transpose();
  const double constant = p.dot(cx.cwiseAbs2() * p) + q.dot(cy.cwiseAbs2() * q);
  const double cross = plan.cwiseProduct(cx * plan * cy.transpose()).sum();
  return std::max(0.0, constant - 2.0 * cross);
}

inline double gw_objective(const Coupling& omega, const Matrix& cx, const Matrix& cy) {
  return gw_objective(omega.plan, cx, cy);
}

/// The same objective summed term by term over the nonzero plan entries. No
/// cancellation, so near-zero optima come out near zero rather than at the
/// roundoff level of the decomposition; cost is (nonzeros)^2. Falls back to
/// gw_objective when that exceeds `max_terms`.
inline double gw_objective_direct(const Matrix& plan, const Matrix& cx, const Matrix& cy, double max_terms = 1e8) {
  struct Entry {
    Eigen::Index i, j;
    double w;
  };
  std::vector<Entry> nz;
  for (Eigen::Index j = 0; j < plan.cols(); ++j) {
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
      if (plan(i, j) != 0.0) nz.push_back({i, j, plan(i, j)});
    }
  }
  const double n = static_cast<double>(nz.size());
  if (n * n > max_terms) return gw_objective(plan, cx, cy);
  if (cx.rows() != plan.rows() || cy.rows() != plan.cols()) fail(ErrorCode::kDimensionMismatch, "gw_objective shapes");
  double total = 0.0;
  for (const Entry& e : nz) {
    double inner = 0.0;
    for (const Entry& f : nz) {
      const double diff = cx(e.i, f.i) - cy(e.j, f.j);
      inner += diff * diff * f.w;
    }
    total += e.w * inner;
  }
  return total;
}

namespace detail {

// Gradient of the GW objective with the marginal-only terms dropped; those
// are constant on rows and columns and do not change any OT subproblem.
inline Matrix gw_direction_cost(const Matrix& plan, const Matrix& cx, const Matrix& cy) {
  return -2.0 * (cx * plan * cy.transpose() + cx.transpose() * plan * cy);
}

// f(P + t D) = f(P) + lin * t + quad * t^2 for a direction D with zero marginals.
inline std::pair<double, double> gw_segment_coefficients(const Matrix& plan, const Matrix& dir, const Matrix& cx,
                                                          const Matrix& cy) {
  const Matrix cdc = cx * dir * cy.transpose();
  const double quad = -2.0 * dir.cwiseProduct(cdc).sum();
  const double lin = -2.0 * (plan.cwiseProduct(cdc).sum() + dir.cwiseProduct(cx * plan * cy.transpose()).sum());
  return {lin, quad};
}

inline void check_init(const Coupling& init, const Vector& a, const Vector& b) {
  if (init.plan.rows() != a.size() || init.plan.cols() != b.size()) fail(ErrorCode::kDimensionMismatch, "initial coupling shape");
  if ((init.plan.array() < 0.0).any()) fail(ErrorCode::kInfeasibleWeights, "initial coupling has negative entries");
  if (marginal_error(init.plan, a, b) > 1e-6) fail(ErrorCode::kInfeasibleWeights, "initial coupling violates marginals");
}

inline double neg_entropy(const Matrix& plan) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < plan.cols(); ++j) {
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
      const double x = plan(i, j);
      if (x > 0.0) s += x * std::log(x);
    }
  }
  return s;
}

}  // namespace detail

/// Conditional-gradient (Frank-Wolfe) GW solver: linearise, solve the exact
/// OT subproblem, exact line search on the quadratic segment.
inline Coupling solve_gw(const Vector& a, const Vector& b, const Matrix& cx, const Matrix& cy, const Coupling& init,
                         const SolverConfig& config) {
  config.validate();
  check_weights(a, "solve_gw source");
  check_weights(b, "solve_gw target");
  detail::check_init(init, a, b);
  if (cx.rows() != a.size() || cy.rows() != b.size()) fail(ErrorCode::kDimensionMismatch, "solve_gw cost shapes");

  Coupling out;
  out.plan = init.plan;
  double f = gw_objective(out.plan, cx, cy);
  out.history.push_back(f);
  out.converged = false;
  int it = 0;
  for (; it < config.max_outer_iters; ++it) {
    const Coupling target = solve_exact_ot(a, b, detail::gw_direction_cost(out.plan, cx, cy));
    const Matrix dir = target.plan - out.plan;
    const auto [lin, quad] = detail::gw_segment_coefficients(out.plan, dir, cx, cy);
    const double scale = 1e-14 * (1.0 + std::abs(f));
    // A stationary point with negative curvature along the segment (e.g. the
    // product coupling on symmetric instances) still admits descent at t = 1.
    double t = 0.0;
    if (quad > 0.0) {
      t = std::clamp(-lin / (2.0 * quad), 0.0, 1.0);
    } else if (lin + quad < 0.0) {
      t = 1.0;
    }
    if (t <= 0.0 || lin * t + quad * t * t >= -scale) {
      out.converged = true;
      break;
    }
    const Matrix next = out.plan + t * dir;
    const double f_next = gw_objective(next, cx, cy);
    if (f_next > f) {
      out.converged = true;
      break;
    }
    const double decrease = f - f_next;
    out.plan = next;
    f = f_next;
    out.history.push_back(f);
    if (f <= 0.0 || decrease <= config.objective_rel_tol * std::abs(f + decrease)) {
      out.converged = true;
      ++it;
      break;
    }
  }
  out.iterations = it;
  out.value = f;
  return detail::emit(std::move(out), a, b, CouplingKind::kExact);
}

/// Entropic GW by generalised conditional gradient: the direction is the
/// Sinkhorn solution for the linearised cost, followed by a line search on
/// the regularised objective f(P) + eps * sum P log P. Warm-started from init.
inline Coupling solve_entropic_gw(const Vector& a, const Vector& b, const Matrix& cx, const Matrix& cy, double eps,
                                  const Coupling& init, const SolverConfig& config) {
  config.validate();
  check_weights(a, "solve_entropic_gw source");
  check_weights(b, "solve_entropic_gw target");
  detail::check_init(init, a, b);
  if (!(eps > 0.0)) fail(ErrorCode::kInvalidConfig, "entropic GW eps must be positive");
  if (cx.rows() != a.size() || cy.rows() != b.size()) fail(ErrorCode::kDimensionMismatch, "solve_entropic_gw cost shapes");

  Coupling out;
  out.plan = init.plan;
  out.converged = false;
  auto regularized = [&](const Matrix& p) { return gw_objective(p, cx, cy) + eps * detail::neg_entropy(p); };
  double phi = regularized(out.plan);
  out.history.push_back(gw_objective(out.plan, cx, cy));

  int it = 0;
  for (; it < config.max_outer_iters; ++it) {
    const Coupling target = sinkhorn(a, b, detail::gw_direction_cost(out.plan, cx, cy), eps, config);
    const Matrix dir = target.plan - out.plan;
    auto along = [&](double t) { return regularized(out.plan + t * dir); };

    constexpr int kGrid = 32;
    int best_k = 0;
    double best_val = phi;
    for (int k = 1; k <= kGrid; ++k) {
      const double val = along(static_cast<double>(k) / kGrid);
      if (val < best_val) {
        best_val = val;
        best_k = k;
      }
    }
    // golden-section refinement around the best grid point
    double lo = std::max(0.0, (best_k - 1.0) / kGrid);
    double hi = std::min(1.0, (best_k + 1.0) / kGrid);
    const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - golden * (hi - lo), x2 = lo + golden * (hi - lo);
    double f1 = along(x1), f2 = along(x2);
    for (int g = 0; g < 60 && hi - lo > 1e-12; ++g) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - golden * (hi - lo);
        f1 = along(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + golden * (hi - lo);
        f2 = along(x2);
      }
    }
    double t = static_cast<double>(best_k) / kGrid;
    double val = best_val;
    const double mid = 0.5 * (lo + hi);
    const double mid_val = along(mid);
    if (mid_val < val) {
      t = mid;
      val = mid_val;
    }
    if (!(val < phi)) {
      out.converged = true;
      break;
    }
    const double decrease = phi - val;
    out.plan = out.plan + t * dir;
    phi = val;
    out.history.push_back(gw_objective(out.plan, cx, cy));
    if (decrease <= config.objective_rel_tol * std::max(std::abs(phi), 1e-300)) {
      out.converged = true;
      ++it;
      break;
    }
  }
  out.iterations = it;
  out.value = gw_objective(out.plan, cx, cy);
  return detail::emit(std::move(out), a, b, CouplingKind::kEntropic);
}

/// Product coupling a b^T.
inline Coupling product_coupling(const Vector& a, const Vector& b) {
  Coupling c;
  c.plan = a * b.transpose();
  return c;
}

}  // namespace ot
}  // namespace mixgw
