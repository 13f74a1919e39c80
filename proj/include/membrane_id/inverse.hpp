#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "membrane_id/error.hpp"
#include "membrane_id/fem.hpp"
#include "membrane_id/grid.hpp"
#include "membrane_id/obstacle.hpp"

namespace membrane_id {

using DataVector = Eigen::VectorXd;

/// One experiment: load, indenter, observed nodes and (noisy) data there.
struct Measurement {
  NodalField f;
  NodalField h;
  NodeMask mask;           // true = observed
  DataVector data;         // values at observed nodes, increasing node index
  double noise_level = 0;  // relative l2 level used to synthesize the data
  // Absolute ||y - y_delta|| used by the discrepancy principle; negative when unknown.
  double noise_norm = -1.0;
  // Norm of the additive random part alone (synthetic data only).
  double additive_noise_norm = -1.0;

  int observed() const { return count(mask); }
};

inline NodeMask full_mask(const Grid& grid) { return NodeMask(static_cast<std::size_t>(grid.num_nodes()), 1); }

inline DataVector observe(const NodeMask& mask, const NodalField& u) {
  DataVector out(count(mask));
  Eigen::Index j = 0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) out[j++] = u[static_cast<Eigen::Index>(k)];
  }
  return out;
}

inline NodalField embed(const NodeMask& mask, const DataVector& r) {
  require(r.size() == count(mask), "observation vector length does not match the mask");
  NodalField out = NodalField::Zero(static_cast<Eigen::Index>(mask.size()));
  Eigen::Index j = 0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) out[static_cast<Eigen::Index>(k)] = r[j++];
  }
  return out;
}

/// Schedule used to build the smoothed forward operator.
struct BarrierSettings {
  double kkt_tol = 1e-8;
  int max_outer = 400;
  double mu0 = SolverConfig{}.mu0;
  double theta0 = SolverConfig{}.theta0;
  double tau = kBarrierDefaultTau;
};

/// Barrier solution u(a) for one measurement together with a factorization
/// of H = A(a) + mu diag(1 / (u - h + theta)^2) at frozen (mu, theta).
///
/// u(a) is the exact minimizer of the barrier energy at the frozen
/// parameters: the scheduled barrier iteration provides (mu, theta) and a start,
/// then damped Newton steps at fixed (mu, theta) converge it. This makes the
/// map a -> u(a) smooth, and derivative()/adjoint() its exact derivative and
/// Euclidean adjoint.
class BarrierState {
 public:
  BarrierState(const Grid& grid, const NodalField& a, const Measurement& m, const BarrierSettings& settings = {})
      : grid_(grid), a_(a), h_(m.h), mask_(m.mask) {
    ObstacleProblem problem(grid, a, m.f, m.h);
    system_ = std::make_shared<DiscreteObstacle>(problem);
    SolverConfig cfg;
    cfg.method = ForwardMethod::BARRIER;
    cfg.kkt_tol = settings.kkt_tol;
    cfg.max_iter = settings.max_outer;
    cfg.mu0 = settings.mu0;
    cfg.theta0 = settings.theta0;
    cfg.tau = settings.tau;
    cfg.record_trace = false;
    const auto sol = solve_barrier(*system_, cfg);
    mu_ = sol.mu;
    theta_ = sol.theta;
    outer_iterations_ = sol.iterations;
    u_ = sol.u;
    polish();
  }

  /// Frozen-schedule evaluation: same (mu, theta), Newton from `start`.
  BarrierState(const Grid& grid, const NodalField& a, const Measurement& m, double mu, double theta,
               const NodalField& start)
      : grid_(grid), a_(a), h_(m.h), mask_(m.mask), mu_(mu), theta_(theta), u_(start) {
    require(mu > 0.0 && theta > 0.0, "frozen barrier parameters must be positive");
    system_ = std::make_shared<DiscreteObstacle>(ObstacleProblem(grid, a, m.f, m.h));
    for (int k : grid_.free_nodes()) u_[k] = std::max(u_[k], h_[k] - 0.5 * theta_);
    polish();
  }

  const Grid& grid() const { return grid_; }
  const NodalField& coefficient() const { return a_; }
  const NodalField& u() const { return u_; }
  double mu() const { return mu_; }
  double theta() const { return theta_; }
  int outer_iterations() const { return outer_iterations_; }
  int newton_iterations() const { return newton_iterations_; }

  DataVector observe() const { return membrane_id::observe(mask_, u_); }

  /// Directional derivative of the observed barrier solution:
  /// B u'(a) b with u'(a) b = -H^{-1} A(b) u. Boundary entries of b are
  /// ignored (the coefficient is known there).
  DataVector derivative(const NodalField& b) const {
    check_field(grid_, b, "direction");
    NodalField direction = b;
    for (int k : grid_.boundary_nodes()) direction[k] = 0.0;
    NodalField rhs = -apply_stiffness(grid_, direction, u_);
    for (int k : grid_.boundary_nodes()) rhs[k] = 0.0;
    return membrane_id::observe(mask_, hessian_->solve(rhs));
  }

  /// Euclidean adjoint of derivative(): g_k = -u^T A(e_k) w with
  /// w = H^{-1} B^T r, and g = 0 on the boundary.
  NodalField adjoint(const DataVector& r) const {
    NodalField v = embed(mask_, r);
    for (int k : grid_.boundary_nodes()) v[k] = 0.0;
    const NodalField w = hessian_->solve(v);
    NodalField g = -stiffness_coefficient_gradient(grid_, u_, w);
    for (int k : grid_.boundary_nodes()) g[k] = 0.0;
    return g;
  }

 private:
  double barrier_energy(const NodalField& u) const {
    const NodalField r = system_->residual(u);
    double e = system_->energy(u, r);
    for (int k : grid_.free_nodes()) e -= mu_ * std::log(u[k] - h_[k] + theta_);
    return e;
  }

  void polish() {
    hessian_ = std::make_shared<ShiftedStiffness>(grid_, system_->stiffness());
    const auto& free = grid_.free_nodes();
    auto refresh = [&] {
      hessian_->set_shift([&](int k) {
        const double s = u_[k] - h_[k] + theta_;
        return mu_ / (s * s);
      });
    };
    constexpr int kMaxNewton = 60;
    double previous = std::numeric_limits<double>::infinity();
    for (newton_iterations_ = 0; newton_iterations_ < kMaxNewton; ++newton_iterations_) {
      NodalField gradient = system_->residual(u_);
      for (int k : free) gradient[k] -= mu_ / (u_[k] - h_[k] + theta_);
      for (int k : grid_.boundary_nodes()) gradient[k] = 0.0;
      refresh();
      const NodalField step = hessian_->solve(gradient);
      double worst = 0.0;
      for (int k : free) worst = std::max(worst, std::abs(step[k]) / (u_[k] - h_[k] + theta_));
      // Quadratic convergence ends at a roundoff floor; stop once it stalls there.
      if (worst <= 1e-13 || (worst <= 1e-6 && worst >= 0.5 * previous)) break;
      previous = worst;
      // Largest step keeping u - h + theta > 0, then backtracking on the barrier energy.
      double alpha = 1.0;
      for (int k : free) {
        if (step[k] > 0.0) alpha = std::min(alpha, 0.99 * (u_[k] - h_[k] + theta_) / step[k]);
      }
      const double e0 = barrier_energy(u_);
      const double slope = -gradient.dot(step);
      NodalField trial;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        trial = u_ - alpha * step;
        const double e1 = barrier_energy(trial);
        if (std::isfinite(e1) && e1 <= e0 + 1e-4 * alpha * slope + 1e-15 * std::abs(e0)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) break;  // roundoff floor reached
      u_ = std::move(trial);
    }
    if (!u_.allFinite()) throw Error(ErrorCode::NumericalFailure, "barrier Newton produced non-finite values");
    refresh();
  }

  Grid grid_;
  NodalField a_;
  NodalField h_;
  NodeMask mask_;
  double mu_ = 0.0;
  double theta_ = 0.0;
  NodalField u_;
  int outer_iterations_ = 0;
  int newton_iterations_ = 0;
  std::shared_ptr<const DiscreteObstacle> system_;
  std::shared_ptr<ShiftedStiffness> hessian_;
};

enum class ResidualOperator { BARRIER, EXACT };

inline const char* to_string(ResidualOperator r) { return r == ResidualOperator::BARRIER ? "BARRIER" : "EXACT"; }

/// Solver used for EXACT-mode forward evaluations.
inline SolverConfig exact_forward_config() {
  SolverConfig cfg;
  cfg.method = ForwardMethod::NPG;
  cfg.record_trace = false;
  return cfg;
}

/// Observed forward response. BARRIER: smoothed operator; EXACT: obstacle
/// problem solved by accelerated projected gradient.
inline DataVector forward_observe(const Grid& grid, const NodalField& a, const Measurement& m, ResidualOperator mode,
                                  const BarrierSettings& settings = {}) {
  if (count(m.mask) == 0) return DataVector(0);
  if (mode == ResidualOperator::BARRIER) return BarrierState(grid, a, m, settings).observe();
  const auto sol = solve_npg(ObstacleProblem(grid, a, m.f, m.h), exact_forward_config());
  return observe(m.mask, sol.u);
}

inline DataVector derivative_apply(const BarrierState& state, const NodalField& b) { return state.derivative(b); }
inline NodalField adjoint_apply(const BarrierState& state, const DataVector& r) { return state.adjoint(r); }

enum class PreconditionerKind { H01, L2 };

inline const char* to_string(PreconditionerKind p) { return p == PreconditionerKind::H01 ? "H01" : "L2"; }

/// Riesz map of a gradient: H01 solves K_1 z = g with the unit-coefficient
/// Dirichlet stiffness, L2 is the identity.
class Preconditioner {
 public:
  Preconditioner(const Grid& grid, PreconditionerKind kind) : grid_(grid), kind_(kind) {
    if (kind_ == PreconditionerKind::H01) {
      laplacian_ = dirichlet_stiffness(grid, constant_field(grid, 1.0));
      solver_ = std::make_shared<SpdSolver>(laplacian_.matrix);
    }
  }

  PreconditionerKind kind() const { return kind_; }

  NodalField apply(const NodalField& g) const {
    if (kind_ == PreconditionerKind::L2) return g;
    NodalField rhs = g;
    for (int k : grid_.boundary_nodes()) rhs[k] = 0.0;
    return solver_->solve(rhs);
  }

  /// Inner product in which apply() is the gradient: v^T K_1 w or v^T w.
  double inner(const NodalField& v, const NodalField& w) const {
    return kind_ == PreconditionerKind::L2 ? v.dot(w) : v.dot(laplacian_.matrix * w);
  }

 private:
  Grid grid_;
  PreconditionerKind kind_;
  SparseSymOperator laplacian_;
  std::shared_ptr<SpdSolver> solver_;
};

inline NodalField precondition(const Grid& grid, const NodalField& g, PreconditionerKind kind) {
  return Preconditioner(grid, kind).apply(g);
}

struct Metrics {
  double relative_error = std::numeric_limits<double>::quiet_NaN();
  double discrepancy_factor = std::numeric_limits<double>::quiet_NaN();
};

/// relative_error = |a_k - a_true|_{H1} / |a_true - 1|_{H1};
/// discrepancy_factor = residual / noise_norm.
inline Metrics metrics(const Grid& grid, const NodalField& a_k, const NodalField& a_dagger, double residual,
                       double noise_norm) {
  const double denominator = h1_seminorm(grid, a_dagger - NodalField::Ones(a_dagger.size()));
  if (!(denominator > 0.0)) throw Error(ErrorCode::UndefinedMetric, "ground truth has zero H1 distance from 1");
  if (!(noise_norm > 0.0)) throw Error(ErrorCode::UndefinedMetric, "noise norm must be positive");
  return {h1_seminorm(grid, a_k - a_dagger) / denominator, residual / noise_norm};
}

inline double relative_error(const Grid& grid, const NodalField& a_k, const NodalField& a_dagger) {
  const double denominator = h1_seminorm(grid, a_dagger - NodalField::Ones(a_dagger.size()));
  if (!(denominator > 0.0)) throw Error(ErrorCode::UndefinedMetric, "ground truth has zero H1 distance from 1");
  return h1_seminorm(grid, a_k - a_dagger) / denominator;
}

struct NoisyData {
  DataVector y_delta;
  double noise_norm = 0.0;
};

/// Adds seeded uniform noise scaled so that ||y_delta - y|| = delta_rel ||y||.
inline NoisyData add_noise(const DataVector& y, double delta_rel, std::uint64_t seed) {
  require(delta_rel >= 0.0, "noise level must be non-negative");
  if (delta_rel == 0.0) return {y, 0.0};
  const double ynorm = y.norm();
  if (!(ynorm > 0.0)) throw Error(ErrorCode::InvalidArgument, "cannot add relative noise to zero data");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DataVector e(y.size());
  for (auto& v : e) v = dist(rng);
  const double target = delta_rel * ynorm;
  return {y + (target / e.norm()) * e, target};
}

enum class InversionMethod { LANDWEBER, NESTEROV };

inline const char* to_string(InversionMethod m) { return m == InversionMethod::LANDWEBER ? "LANDWEBER" : "NESTEROV"; }

struct InversionConfig {
  InversionMethod method = InversionMethod::NESTEROV;
  /// 0 selects 1 / L with L a 10-step power estimate of the preconditioned
  /// normal operator at a0.
  double tau = 0.0;
  int max_iter = 3000;
  double discrepancy_factor = 1.01;
  double clip_lo = 0.1;
  double clip_hi = 10.0;
  /// Known trace of the coefficient; defaults to a0 on the boundary.
  std::optional<NodalField> boundary_values;
  ResidualOperator residual_operator = ResidualOperator::BARRIER;
  PreconditionerKind preconditioner = PreconditionerKind::H01;
  /// If false the run continues to max_iter and only records k_disc.
  bool stop_at_discrepancy = true;
  /// Keep every snapshot_every-th iterate (0 = none); the final, optimal and
  /// discrepancy iterates are always kept.
  int snapshot_every = 0;
  BarrierSettings barrier;
  int step_estimate_iterations = 10;
};

enum class StopReason { Discrepancy, MaxIterations, ForwardFailure, NonFinite };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::Discrepancy: return "discrepancy";
    case StopReason::MaxIterations: return "max_iter";
    case StopReason::ForwardFailure: return "forward_failure";
    case StopReason::NonFinite: return "non_finite";
  }
  return "?";
}

struct InversionRun {
  std::vector<std::pair<int, NodalField>> snapshots;
  std::vector<double> residual_norm;
  std::vector<double> discrepancy_factor;  // NaN without a known noise norm
  std::vector<double> relative_error;      // NaN without ground truth
  StopReason reason = StopReason::MaxIterations;
  std::string message;
  int k_stop = 0;
  std::optional<int> k_disc;
  std::optional<int> k_opt;
  NodalField final_iterate;
  NodalField optimal_iterate;  // iterate at k_opt (empty without ground truth)
  NodalField discrepancy_iterate;  // iterate at k_disc (empty if never reached)
  double tau = 0.0;
  double noise_norm = -1.0;
  double wall_time = 0.0;

  int iterations() const { return static_cast<int>(residual_norm.size()) - 1; }
};

namespace detail {

inline DataVector stack(const std::vector<DataVector>& parts) {
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.size();
  DataVector out(total);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.segment(offset, p.size()) = p;
    offset += p.size();
  }
  return out;
}

struct Linearization {
  std::vector<BarrierState> states;
  std::vector<DataVector> residuals;  // F(a) - y per measurement

  double norm() const {
    double s = 0.0;
    for (const auto& r : residuals) s += r.squaredNorm();
    return std::sqrt(s);
  }
};

inline Linearization linearize(const Grid& grid, const NodalField& a, const std::vector<Measurement>& ms,
                               const InversionConfig& cfg) {
  Linearization lin;
  lin.states.reserve(ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    try {
      lin.states.emplace_back(grid, a, ms[i], cfg.barrier);
      const DataVector predicted = cfg.residual_operator == ResidualOperator::BARRIER
                                       ? lin.states.back().observe()
                                       : forward_observe(grid, a, ms[i], ResidualOperator::EXACT);
      lin.residuals.push_back(predicted - ms[i].data);
    } catch (const Error& e) {
      throw Error(ErrorCode::ForwardFailure, "measurement " + std::to_string(i) + ": " + e.what());
    }
  }
  return lin;
}

inline NodalField misfit_gradient(const Linearization& lin) {
  NodalField g = lin.states.front().adjoint(lin.residuals.front());
  for (std::size_t i = 1; i < lin.states.size(); ++i) g += lin.states[i].adjoint(lin.residuals[i]);
  return g;
}

inline double estimate_step_bound(const Linearization& lin, const Preconditioner& pre, const Grid& grid, int steps) {
  NodalField v = NodalField::Zero(grid.num_nodes());
  for (int k : grid.free_nodes()) v[k] = 1.0;
  double norm_v = std::sqrt(pre.inner(v, v));
  double bound = 0.0;
  for (int s = 0; s < steps && norm_v > 0.0; ++s) {
    v /= norm_v;
    NodalField g = NodalField::Zero(grid.num_nodes());
    for (const auto& st : lin.states) g += st.adjoint(st.derivative(v));
    NodalField w = pre.apply(g);
    const double norm_w = std::sqrt(pre.inner(w, w));
    bound = norm_w;
    v = std::move(w);
    norm_v = norm_w;
  }
  return bound;
}

}  // namespace detail

/// Landweber / Nesterov-accelerated Landweber reconstruction of the coefficient
/// from one or several measurements, with clipping to [clip_lo, clip_hi],
/// boundary pinning and discrepancy-principle stopping.
inline InversionRun reconstruct(const Grid& grid, const NodalField& a0, const std::vector<Measurement>& measurements,
                                const InversionConfig& cfg, const std::optional<NodalField>& ground_truth = {}) {
  check_field(grid, a0, "initial coefficient");
  require(!measurements.empty(), "at least one measurement is required");
  require(cfg.clip_lo < cfg.clip_hi && cfg.clip_lo > 0.0, "clip bounds must satisfy 0 < c1 < c2");
  require(cfg.tau >= 0.0, "stepsize must be positive (or 0 for automatic)");
  require(cfg.max_iter >= 0, "max_iter must be non-negative");
  for (const auto& m : measurements) {
    check_field(grid, m.f, "measurement load");
    check_field(grid, m.h, "measurement obstacle");
    require(m.mask.size() == static_cast<std::size_t>(grid.num_nodes()), "measurement mask has wrong length");
    require(m.data.size() == m.observed(), "measurement data length does not match its mask");
  }
  if (ground_truth) check_field(grid, *ground_truth, "ground truth");
  const NodalField boundary = cfg.boundary_values ? *cfg.boundary_values : a0;
  check_field(grid, boundary, "boundary values");
  require((a0.array() >= cfg.clip_lo).all() && (a0.array() <= cfg.clip_hi).all(), "a0 outside clip bounds");

  // Joint noise norm over the stacked data; negative when any part is unknown.
  double noise_sq = 0.0;
  bool noise_known = true;
  for (const auto& m : measurements) {
    if (m.noise_norm < 0.0) noise_known = false;
    noise_sq += m.noise_norm * m.noise_norm;
  }

  InversionRun run;
  run.noise_norm = noise_known ? std::sqrt(noise_sq) : -1.0;
  const auto start = detail::Clock::now();
  const Preconditioner pre(grid, cfg.preconditioner);

  auto pin = [&](NodalField a) {
    for (int k : grid.boundary_nodes()) a[k] = boundary[k];
    return a;
  };
  const double truth_scale =
      ground_truth ? h1_seminorm(grid, *ground_truth - NodalField::Ones(grid.num_nodes())) : 0.0;
  if (ground_truth && !(truth_scale > 0.0)) {
    throw Error(ErrorCode::UndefinedMetric, "ground truth has zero H1 distance from 1");
  }
  double best_error = std::numeric_limits<double>::infinity();

  NodalField a = pin(a0);
  NodalField a_prev = a;
  auto record = [&](int k, const NodalField& iterate, double residual) {
    run.residual_norm.push_back(residual);
    run.discrepancy_factor.push_back(run.noise_norm > 0.0 ? residual / run.noise_norm
                                                          : std::numeric_limits<double>::quiet_NaN());
    double rel = std::numeric_limits<double>::quiet_NaN();
    if (ground_truth) {
      rel = h1_seminorm(grid, iterate - *ground_truth) / truth_scale;
      if (rel < best_error) {
        best_error = rel;
        run.k_opt = k;
        run.optimal_iterate = iterate;
      }
    }
    run.relative_error.push_back(rel);
    if (cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0) run.snapshots.emplace_back(k, iterate);
  };

  std::optional<detail::Linearization> at_a;
  for (int k = 0;; ++k) {
    run.k_stop = k;
    try {
      at_a = detail::linearize(grid, a, measurements, cfg);
    } catch (const Error& e) {
      run.reason = StopReason::ForwardFailure;
      run.message = e.what();
      run.k_stop = k - 1;
      break;
    }
    const double residual = at_a->norm();
    if (!std::isfinite(residual)) {
      run.reason = StopReason::NonFinite;
      run.k_stop = k - 1;
      break;
    }
    record(k, a, residual);
    run.final_iterate = a;

    if (noise_known && !run.k_disc && residual <= cfg.discrepancy_factor * run.noise_norm) {
      run.k_disc = k;
      run.discrepancy_iterate = a;
      if (cfg.stop_at_discrepancy) {
        run.reason = StopReason::Discrepancy;
        break;
      }
    }
    if (k >= cfg.max_iter) {
      run.reason = StopReason::MaxIterations;
      break;
    }

    if (k == 0) {
      run.tau = cfg.tau > 0.0
                    ? cfg.tau
                    : 1.0 / detail::estimate_step_bound(*at_a, pre, grid, cfg.step_estimate_iterations);
      if (!std::isfinite(run.tau) || !(run.tau > 0.0)) {
        run.reason = StopReason::NonFinite;
        run.message = "step size estimate failed";
        break;
      }
    }

    // Momentum point; b == a for Landweber and for k <= 1.
    const double beta = cfg.method == InversionMethod::NESTEROV ? static_cast<double>(k - 1) / (k + 2) : 0.0;
    const bool extrapolate = beta != 0.0 && (a - a_prev).cwiseAbs().maxCoeff() > 0.0;
    NodalField b = extrapolate ? pin((a + beta * (a - a_prev)).cwiseMax(cfg.clip_lo).cwiseMin(cfg.clip_hi)) : a;

    NodalField gradient;
    try {
      gradient = extrapolate ? detail::misfit_gradient(detail::linearize(grid, b, measurements, cfg))
                             : detail::misfit_gradient(*at_a);
    } catch (const Error& e) {
      run.reason = StopReason::ForwardFailure;
      run.message = e.what();
      break;
    }
    NodalField next = pin((b - run.tau * pre.apply(gradient)).cwiseMax(cfg.clip_lo).cwiseMin(cfg.clip_hi));
    if (!next.allFinite()) {
      run.reason = StopReason::NonFinite;
      break;
    }
    a_prev = std::move(a);
    a = std::move(next);
  }
  run.wall_time = detail::seconds_since(start);
  return run;
}

}  // namespace membrane_id
