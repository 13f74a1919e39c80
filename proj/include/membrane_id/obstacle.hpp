#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "membrane_id/error.hpp"
#include "membrane_id/fem.hpp"
#include "membrane_id/grid.hpp"

namespace membrane_id {

/// Membrane pushed against an obstacle: minimize 1/2 u^T A(a) u - f^T u over
/// u >= h nodewise, u = 0 on the boundary.
struct ObstacleProblem {
  Grid grid;
  NodalField a;  // coefficient, strictly positive
  NodalField f;  // load density (nodal)
  NodalField h;  // obstacle (nodal)
  BoundaryCondition bc;

  ObstacleProblem(Grid g, NodalField a_, NodalField f_, NodalField h_)
      : grid(std::move(g)), a(std::move(a_)), f(std::move(f_)), h(std::move(h_)), bc(BoundaryCondition::homogeneous(grid)) {
    check_field(grid, a, "coefficient");
    check_field(grid, f, "load density");
    check_field(grid, h, "obstacle");
    require((a.array() > 0.0).all(), "coefficient must be strictly positive");
    for (int k : bc.nodes) {
      require(h[k] <= 0.0, "obstacle must be <= 0 on the boundary (node " + std::to_string(k) + ")");
    }
  }
};

enum class ForwardMethod { PG, NPG, BARRIER };

inline const char* to_string(ForwardMethod m) {
  switch (m) {
    case ForwardMethod::PG: return "PG";
    case ForwardMethod::NPG: return "NPG";
    case ForwardMethod::BARRIER: return "BM";
  }
  return "?";
}

struct SolverConfig {
  ForwardMethod method = ForwardMethod::NPG;
  /// 0 selects the default: 0.1 / ||A|| for PG/NPG, 0.1 for the barrier method.
  double tau = 0.0;
  double kkt_tol = 1e-8;
  int max_iter = 5000;
  double mu0 = 1e4;
  double theta0 = 1e-2;
  double contact_tol = 1e-10;
  bool record_trace = true;
};

struct TraceRow {
  int iter = 0;
  double kkt_residual = 0.0;
  double energy = 0.0;
  double wall_time_s = 0.0;
};

struct ContactSolution {
  NodalField u;
  NodalField lambda;
  NodeMask contact_mask;
  int iterations = 0;
  bool converged = false;
  std::vector<double> kkt_history;
  std::vector<TraceRow> trace;
  double wall_time = 0.0;
  double tau = 0.0;
  // Barrier parameters after the last outer iteration (barrier method only).
  double mu = 0.0;
  double theta = 0.0;
};

inline NodalField project_obstacle(const NodalField& y, const NodalField& h) {
  require(y.size() == h.size(), "projection: field lengths differ");
  return y.cwiseMax(h);
}

/// Assembled data shared by all solvers: Dirichlet-eliminated stiffness,
/// lumped load with zero boundary entries, and the obstacle.
class DiscreteObstacle {
 public:
  explicit DiscreteObstacle(const ObstacleProblem& p)
      : grid_(p.grid), stiffness_(dirichlet_stiffness(p.grid, p.a)), h_(p.h) {
    load_ = assemble_load(p.grid, p.f);
    for (int k : p.bc.nodes) load_[k] = 0.0;
  }

  const Grid& grid() const { return grid_; }
  const SparseSymOperator& stiffness() const { return stiffness_; }
  const NodalField& load() const { return load_; }
  const NodalField& obstacle() const { return h_; }

  NodalField residual(const NodalField& u) const { return stiffness_.matrix * u - load_; }

  /// 1/2 u^T A u - f^T u given r = A u - f.
  double energy(const NodalField& u, const NodalField& r) const { return 0.5 * u.dot(r) - 0.5 * load_.dot(u); }

  double kkt(const NodalField& u, const NodalField& r) const {
    double dual = 0.0, primal = 0.0, comp = 0.0;
    for (int k : grid_.free_nodes()) {
      const double gap = u[k] - h_[k];
      dual += std::pow(std::min(r[k], 0.0), 2);
      primal += std::pow(std::min(gap, 0.0), 2);
      comp = std::max(comp, std::abs(r[k] * gap));
    }
    return std::sqrt(dual + primal + comp * comp);
  }

  /// Feasible start: max(0, h) on free nodes, 0 on the boundary.
  NodalField feasible_start() const {
    NodalField u = project_obstacle(NodalField::Zero(grid_.num_nodes()), h_);
    for (int k : grid_.boundary_nodes()) u[k] = 0.0;
    return u;
  }

  /// Largest eigenvalue of the eliminated stiffness by power iteration.
  double operator_norm(int steps = 50) const {
    std::mt19937_64 rng(0x5eed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    NodalField v(grid_.num_nodes());
    for (auto& x : v) x = dist(rng);
    v.normalize();
    double lambda = 0.0;
    for (int s = 0; s < steps; ++s) {
      NodalField w = stiffness_.matrix * v;
      lambda = w.norm();
      if (lambda == 0.0) break;
      v = w / lambda;
    }
    return lambda;
  }

 private:
  Grid grid_;
  SparseSymOperator stiffness_;
  NodalField load_;
  NodalField h_;
};

inline double kkt_residual(const ObstacleProblem& p, const NodalField& u) {
  check_field(p.grid, u, "u");
  DiscreteObstacle sys(p);
  return sys.kkt(u, sys.residual(u));
}

inline NodeMask contact_set(const Grid& grid, const NodalField& u, const NodalField& h, double tol) {
  NodeMask mask(static_cast<std::size_t>(grid.num_nodes()), 0);
  for (int k : grid.free_nodes()) mask[k] = (u[k] - h[k]) <= tol * (1.0 + std::abs(h[k]));
  return mask;
}

inline NodeMask contact_set(const ContactSolution& sol, const NodalField& h, double tol) {
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(sol.u.size()))));
  return contact_set(Grid(n), sol.u, h, tol);
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Projected iterations stop early when the energy rises for this many
// consecutive steps while above the starting energy.
inline constexpr int kDivergenceWindow = 50;

class IterationLog {
 public:
  IterationLog(ContactSolution& sol, bool record) : sol_(sol), record_(record), start_(Clock::now()) {}

  void add(int iter, double kkt, double energy) {
    sol_.kkt_history.push_back(kkt);
    if (record_) sol_.trace.push_back({iter, kkt, energy, seconds_since(start_)});
  }

  double elapsed() const { return seconds_since(start_); }

 private:
  ContactSolution& sol_;
  bool record_;
  Clock::time_point start_;
};

inline void finalize(ContactSolution& sol, const DiscreteObstacle& sys, const SolverConfig& cfg) {
  sol.lambda = sys.residual(sol.u);
  for (int k : sys.grid().boundary_nodes()) sol.lambda[k] = 0.0;
  sol.contact_mask = contact_set(sys.grid(), sol.u, sys.obstacle(), cfg.contact_tol);
}

inline double default_gradient_tau(const DiscreteObstacle& sys, const SolverConfig& cfg) {
  if (cfg.tau > 0.0) return cfg.tau;
  require(cfg.tau == 0.0, "stepsize must be positive");
  return 0.1 / sys.operator_norm();
}

class DivergenceGuard {
 public:
  explicit DivergenceGuard(double start_energy) : start_(start_energy), last_(start_energy) {}

  void observe(double energy, int iter) {
    if (!std::isfinite(energy)) throw Error(ErrorCode::StepsizeTooLarge, "energy became non-finite at iteration " + std::to_string(iter));
    rising_ = energy > last_ + 1e-12 * (1.0 + std::abs(last_)) ? rising_ + 1 : 0;
    last_ = energy;
    if (rising_ >= kDivergenceWindow && energy > start_) {
      throw Error(ErrorCode::StepsizeTooLarge, "energy increased for " + std::to_string(kDivergenceWindow) +
                                                   " consecutive steps (iteration " + std::to_string(iter) + ")");
    }
  }

 private:
  double start_;
  double last_;
  int rising_ = 0;
};

}  // namespace detail

/// Projected gradient: u <- P(u - tau (A u - f)) from u0 = P(0).
inline ContactSolution solve_pg(const DiscreteObstacle& sys, const SolverConfig& cfg) {
  ContactSolution sol;
  sol.tau = detail::default_gradient_tau(sys, cfg);
  detail::IterationLog log(sol, cfg.record_trace);
  const auto& h = sys.obstacle();
  NodalField u = sys.feasible_start();
  NodalField r = sys.residual(u);
  detail::DivergenceGuard guard(sys.energy(u, r));
  for (int k = 0;; ++k) {
    const double energy = sys.energy(u, r);
    const double kkt = sys.kkt(u, r);
    log.add(k, kkt, energy);
    if (k > 0) guard.observe(energy, k);
    if (kkt < cfg.kkt_tol) {
      sol.converged = true;
      sol.iterations = k;
      break;
    }
    if (k >= cfg.max_iter) {
      sol.iterations = k;
      break;
    }
    u = project_obstacle(u - sol.tau * r, h);
    r = sys.residual(u);
  }
  sol.u = std::move(u);
  sol.wall_time = log.elapsed();
  detail::finalize(sol, sys, cfg);
  return sol;
}

/// Next momentum weight of the accelerated iteration: (1 + sqrt(1 + 4 t^2)) / 2.
inline double next_momentum(double t) { return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t)); }

/// Nesterov-accelerated projected gradient (FISTA-type momentum, t0 = 1).
inline ContactSolution solve_npg(const DiscreteObstacle& sys, const SolverConfig& cfg) {
  ContactSolution sol;
  sol.tau = detail::default_gradient_tau(sys, cfg);
  detail::IterationLog log(sol, cfg.record_trace);
  const auto& h = sys.obstacle();
  NodalField u = sys.feasible_start();
  NodalField u_prev = u;
  NodalField z = u;
  NodalField r = sys.residual(u);
  double t = 1.0;
  detail::DivergenceGuard guard(sys.energy(u, r));
  for (int k = 0;; ++k) {
    const double energy = sys.energy(u, r);
    const double kkt = sys.kkt(u, r);
    log.add(k, kkt, energy);
    if (k > 0) guard.observe(energy, k);
    if (kkt < cfg.kkt_tol) {
      sol.converged = true;
      sol.iterations = k;
      break;
    }
    if (k >= cfg.max_iter) {
      sol.iterations = k;
      break;
    }
    u_prev = u;
    u = project_obstacle(z - sol.tau * sys.residual(z), h);
    const double t_next = next_momentum(t);
    z = u + ((t - 1.0) / t_next) * (u - u_prev);
    t = t_next;
    r = sys.residual(u);
  }
  sol.u = std::move(u);
  sol.wall_time = log.elapsed();
  detail::finalize(sol, sys, cfg);
  return sol;
}

/// Stiffness plus a diagonal shift on the free nodes, refreshed in place.
/// The sparsity pattern (and hence the Cholesky analysis) never changes.
class ShiftedStiffness {
 public:
  ShiftedStiffness(const Grid& grid, const SparseSymOperator& stiffness)
      : matrix_(stiffness.matrix), free_(grid.free_nodes()) {
    base_.resize(static_cast<Eigen::Index>(free_.size()));
    slots_.reserve(free_.size());
    for (std::size_t i = 0; i < free_.size(); ++i) {
      const int k = free_[i];
      base_[static_cast<Eigen::Index>(i)] = stiffness.matrix.coeff(k, k);
      slots_.push_back(&matrix_.coeffRef(k, k));
    }
  }

  /// diag(free) = base + shift(k).
  template <typename Shift>
  void set_shift(Shift&& shift) {
    for (std::size_t i = 0; i < free_.size(); ++i) *slots_[i] = base_[static_cast<Eigen::Index>(i)] + shift(free_[i]);
    solver_.factorize(matrix_);
  }

  NodalField solve(const NodalField& rhs) const { return solver_.solve(rhs); }
  const SparseMatrix& matrix() const { return matrix_; }

 private:
  SparseMatrix matrix_;
  std::vector<int> free_;
  NodalField base_;
  std::vector<double*> slots_;
  SpdSolver solver_;
};

inline constexpr double kBarrierDecay = 0.9;
inline constexpr double kThetaFloor = 1e-12;
inline constexpr double kBarrierDefaultTau = 0.1;

/// Log-barrier method: one damped projected Newton step per outer iteration on
/// 1/2 u^T A u - f^T u - mu sum log(u - h + theta), then mu <- 0.9 mu,
/// theta <- max(0.9 theta, 1e-12). Stops on the KKT residual of the
/// unsmoothed problem.
inline ContactSolution solve_barrier(const DiscreteObstacle& sys, const SolverConfig& cfg) {
  ContactSolution sol;
  sol.tau = cfg.tau > 0.0 ? cfg.tau : kBarrierDefaultTau;
  require(cfg.mu0 > 0.0 && cfg.theta0 > 0.0, "barrier parameters must be positive");
  detail::IterationLog log(sol, cfg.record_trace);
  const auto& grid = sys.grid();
  const auto& h = sys.obstacle();
  ShiftedStiffness hessian(grid, sys.stiffness());

  NodalField u = sys.feasible_start();
  for (int k : grid.free_nodes()) u[k] += cfg.theta0;
  double mu = cfg.mu0;
  double theta = cfg.theta0;
  NodalField r = sys.residual(u);
  for (int k = 0;; ++k) {
    const double kkt = sys.kkt(u, r);
    log.add(k, kkt, sys.energy(u, r));
    if (kkt < cfg.kkt_tol) {
      sol.converged = true;
      sol.iterations = k;
      break;
    }
    if (k >= cfg.max_iter) {
      sol.iterations = k;
      break;
    }
    NodalField gradient = r;
    for (int node : grid.free_nodes()) {
      const double s = u[node] - h[node] + theta;
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw Error(ErrorCode::InfeasibleIterate, "barrier undefined at node " + std::to_string(node) +
                                                      " (iteration " + std::to_string(k) + ")");
      }
      gradient[node] -= mu / s;
    }
    hessian.set_shift([&](int node) {
      const double s = u[node] - h[node] + theta;
      return mu / (s * s);
    });
    u = project_obstacle(u - sol.tau * hessian.solve(gradient), h);
    if (!u.allFinite()) throw Error(ErrorCode::InfeasibleIterate, "non-finite iterate at iteration " + std::to_string(k));
    mu *= kBarrierDecay;
    theta = std::max(kBarrierDecay * theta, kThetaFloor);
    r = sys.residual(u);
  }
  sol.mu = mu;
  sol.theta = theta;
  sol.u = std::move(u);
  sol.wall_time = log.elapsed();
  detail::finalize(sol, sys, cfg);
  return sol;
}

inline ContactSolution solve(const DiscreteObstacle& sys, const SolverConfig& cfg) {
  switch (cfg.method) {
    case ForwardMethod::PG: return solve_pg(sys, cfg);
    case ForwardMethod::NPG: return solve_npg(sys, cfg);
    case ForwardMethod::BARRIER: return solve_barrier(sys, cfg);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown forward method");
}

inline ContactSolution solve(const ObstacleProblem& p, const SolverConfig& cfg) { return solve(DiscreteObstacle(p), cfg); }

inline ContactSolution solve_pg(const ObstacleProblem& p, const SolverConfig& cfg) { return solve_pg(DiscreteObstacle(p), cfg); }
inline ContactSolution solve_npg(const ObstacleProblem& p, const SolverConfig& cfg) { return solve_npg(DiscreteObstacle(p), cfg); }
inline ContactSolution solve_barrier(const ObstacleProblem& p, const SolverConfig& cfg) {
  return solve_barrier(DiscreteObstacle(p), cfg);
}

}  // namespace membrane_id
