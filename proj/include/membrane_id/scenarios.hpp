#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "membrane_id/error.hpp"
#include "membrane_id/fem.hpp"
#include "membrane_id/grid.hpp"
#include "membrane_id/inverse.hpp"
#include "membrane_id/obstacle.hpp"

namespace membrane_id {

using PointFunction = std::function<double(double, double)>;

/// Obstacle level outside an indenter and on the clamped boundary.
inline constexpr double kOffIndenter = -1e-3;

namespace formulas {

inline constexpr double kPi = std::numbers::pi;

inline double gaussian(double x, double y, double cx, double cy, double width) {
  return std::exp(-width * ((x - cx) * (x - cx) + (y - cy) * (y - cy)));
}

// The printed single-parenthesis exponents are read as -w((x - cx)^2 + (y - cy)^2).
inline double testcase2_coefficient(double x, double y) {
  return 1.0 + 0.5 * gaussian(x, y, 0.4, 0.5, 20.0) * std::sin(2.0 * kPi * x);
}

inline double testcase2_load(double x, double y) { return -10.0 * std::sin(kPi * x) * std::sin(2.0 * kPi * y); }

inline double experiment1_coefficient(double x, double y) { return testcase2_coefficient(x, y); }

/// Both Gaussian terms as printed (identical, centered at (0.25, 0.5)).
inline double experiment2_coefficient_printed(double x, double y) {
  return 1.0 + 0.5 * gaussian(x, y, 0.25, 0.5, 20.0) + 0.5 * gaussian(x, y, 0.25, 0.5, 20.0);
}

/// Opposite-sign pair mirrored about x1 = 0.5.
inline double experiment2_coefficient_opposite(double x, double y) {
  return 1.0 + 0.5 * gaussian(x, y, 0.25, 0.5, 20.0) - 0.5 * gaussian(x, y, 0.75, 0.5, 20.0);
}

inline double experiment23_load(double x, double y) { return 6.0 * (x * (1.0 - x) + y * (1.0 - y)); }

inline constexpr std::array<std::array<double, 2>, 3> kExperiment3Centers{{{0.25, 0.5}, {0.75, 0.2}, {0.75, 0.8}}};

inline double experiment3_coefficient(double x, double y) {
  double a = 1.0;
  for (const auto& c : kExperiment3Centers) a += 0.5 * gaussian(x, y, c[0], c[1], 50.0);
  return a;
}

}  // namespace formulas

/// Closed-region membership with a small slack so grid nodes on the edge count as inside.
inline bool in_box(double x, double y, double x0, double x1, double y0, double y1) {
  constexpr double eps = 1e-12;
  return x >= x0 - eps && x <= x1 + eps && y >= y0 - eps && y <= y1 + eps;
}

inline bool in_disk(double x, double y, double cx, double cy, double r) {
  return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r + 1e-12;
}

/// Indenter field: height(x) on nodes in the region, kOffIndenter elsewhere.
/// Boundary nodes are clamped to at most kOffIndenter (u = 0 there).
template <typename Inside, typename Height>
NodalField indenter_obstacle(const Grid& grid, Inside&& inside, Height&& height) {
  NodalField h = interpolate(grid, [&](double x, double y) { return inside(x, y) ? height(x, y) : kOffIndenter; });
  for (int k : grid.boundary_nodes()) h[k] = std::min(h[k], kOffIndenter);
  return h;
}

template <typename Inside>
NodalField indenter_obstacle(const Grid& grid, Inside&& inside) {
  return indenter_obstacle(grid, std::forward<Inside>(inside), [](double, double) { return 1.0; });
}

template <typename Inside>
NodeMask region_mask(const Grid& grid, Inside&& inside) {
  NodeMask mask(static_cast<std::size_t>(grid.num_nodes()), 0);
  for (int k = 0; k < grid.num_nodes(); ++k) mask[k] = inside(grid.x(k), grid.y(k)) ? 1 : 0;
  return mask;
}

inline ObstacleProblem make_testcase1(int n) {
  Grid g(n);
  auto h = indenter_obstacle(g, [](double x, double y) { return in_box(x, y, 0.35, 0.65, 0.35, 0.65); });
  return ObstacleProblem(g, constant_field(g, 1.0), constant_field(g, 0.0), std::move(h));
}

inline NodalField testcase2_obstacle(const Grid& g) {
  return indenter_obstacle(
      g, [](double x, double y) { return in_disk(x, y, 0.5, 0.5, 0.25); },
      [](double x, double) { return std::min(1.0, x); });
}

inline ObstacleProblem make_testcase2(int n) {
  Grid g(n);
  return ObstacleProblem(g, interpolate(g, formulas::testcase2_coefficient), interpolate(g, formulas::testcase2_load),
                         testcase2_obstacle(g));
}

/// Fine-grid size for a reference solve: 4 (n - 1) + 1 at desk scale; at paper
/// scale the smallest nested grid with at least 500 nodes per axis.
inline int default_reference_n(int grid_n, bool paper_scale = false) {
  require(grid_n >= 2, "grid_n must be >= 2");
  const int cells = grid_n - 1;
  if (!paper_scale) return 4 * cells + 1;
  const int factor = (499 + cells - 1) / cells;
  return cells * factor + 1;
}

inline void check_nesting(int grid_n, int reference_n) {
  if (reference_n < grid_n || (reference_n - 1) % (grid_n - 1) != 0) {
    throw Error(ErrorCode::InvalidArgument, "reference_n - 1 = " + std::to_string(reference_n - 1) +
                                                " is not a multiple of grid_n - 1 = " + std::to_string(grid_n - 1));
  }
}

struct ReferenceSettings {
  ForwardMethod method = ForwardMethod::NPG;
  double kkt_tol = 1e-9;
  int max_iter = 20000;
};

/// Continuous description of one forward problem: a and f as formulas, the
/// obstacle as the coarse-grid P1 field seen by the inversion model.
struct ForwardModel {
  PointFunction a;
  PointFunction f;
  NodalField h_coarse;
};

/// Fine-grid solution restricted to the coarse grid. The fine problem samples
/// a and f from their formulas and uses the P1 prolongation of the coarse
/// obstacle, so both grids see the same piecewise-linear indenter.
inline NodalField reference_solution(const Grid& coarse, int reference_n, const ForwardModel& model,
                                     const ReferenceSettings& settings = {}) {
  check_nesting(coarse.n(), reference_n);
  check_field(coarse, model.h_coarse, "coarse obstacle");
  const Grid fine(reference_n);
  NodalField h = reference_n == coarse.n() ? model.h_coarse : prolongate(model.h_coarse, coarse, fine);
  ObstacleProblem p(fine, interpolate(fine, model.a), interpolate(fine, model.f), std::move(h));
  SolverConfig cfg;
  cfg.method = settings.method;
  cfg.kkt_tol = settings.kkt_tol;
  cfg.max_iter = settings.max_iter;
  cfg.record_trace = false;
  const auto sol = solve(p, cfg);
  return reference_n == coarse.n() ? sol.u : restrict_field(sol.u, fine, coarse);
}

/// Noise-free observed reference data.
inline DataVector reference_data(const Grid& coarse, int reference_n, const ForwardModel& model, const NodeMask& mask,
                                 const ReferenceSettings& settings = {}) {
  return observe(mask, reference_solution(coarse, reference_n, model, settings));
}

enum class ScenarioName { TESTCASE1, TESTCASE2, EXP1, EXP2, EXP3, CUSTOM };

inline const char* to_string(ScenarioName s) {
  switch (s) {
    case ScenarioName::TESTCASE1: return "TESTCASE1";
    case ScenarioName::TESTCASE2: return "TESTCASE2";
    case ScenarioName::EXP1: return "EXP1";
    case ScenarioName::EXP2: return "EXP2";
    case ScenarioName::EXP3: return "EXP3";
    case ScenarioName::CUSTOM: return "CUSTOM";
  }
  return "?";
}

enum class ObservationRegion { LEFT, RIGHT, FULL };

inline const char* to_string(ObservationRegion r) {
  switch (r) {
    case ObservationRegion::LEFT: return "LEFT";
    case ObservationRegion::RIGHT: return "RIGHT";
    case ObservationRegion::FULL: return "FULL";
  }
  return "?";
}

enum class Experiment2Truth { PRINTED, OPPOSITE };

/// What ||y - y_delta|| measures for synthetic data. TOTAL compares against
/// the calculation-grid response at the ground truth, so discretization error
/// of the reference data counts as noise; ADDITIVE counts the random part only.
enum class NoiseAccounting { TOTAL, ADDITIVE };

inline const char* to_string(NoiseAccounting n) { return n == NoiseAccounting::TOTAL ? "TOTAL" : "ADDITIVE"; }

struct SynthesisOptions {
  int reference_n = 0;  // 0 = default_reference_n(grid_n)
  NoiseAccounting noise = NoiseAccounting::TOTAL;
  ReferenceSettings reference;
};

inline const char* to_string(Experiment2Truth t) { return t == Experiment2Truth::PRINTED ? "PRINTED" : "OPPOSITE"; }

struct ScenarioSpec {
  ScenarioName name = ScenarioName::EXP1;
  int grid_n = 30;
  int reference_n = 0;  // 0 = default_reference_n(grid_n)
  double radius = 0.1;
  double noise_level = 1e-3;
  ObservationRegion region = ObservationRegion::FULL;
  Experiment2Truth exp2_truth = Experiment2Truth::PRINTED;
  NoiseAccounting noise = NoiseAccounting::TOTAL;
  std::uint64_t seed = 0;

  int resolved_reference_n() const { return reference_n > 0 ? reference_n : default_reference_n(grid_n); }
};

/// Synthetic inverse problem: ground truth, noisy measurements and the
/// indenter footprints (for output).
struct InverseScenario {
  std::string label;
  Grid grid;
  NodalField a_dagger;
  std::vector<Measurement> measurements;
  std::vector<NodeMask> indenters;
  int reference_n = 0;

  /// a0 = 1 in the interior, a_dagger on the boundary.
  NodalField initial_guess() const {
    NodalField a0 = constant_field(grid, 1.0);
    for (int k : grid.boundary_nodes()) a0[k] = a_dagger[k];
    return a0;
  }
};

namespace detail {

inline int resolve_reference_n(int grid_n, const SynthesisOptions& options) {
  const int ref = options.reference_n > 0 ? options.reference_n : default_reference_n(grid_n);
  check_nesting(grid_n, ref);
  return ref;
}

inline Measurement synthesize(const Grid& grid, const ForwardModel& model, NodeMask mask, double noise_level,
                              std::uint64_t seed, const SynthesisOptions& options) {
  Measurement m;
  m.f = interpolate(grid, model.f);
  m.h = model.h_coarse;
  m.mask = std::move(mask);
  m.noise_level = noise_level;
  const DataVector y = reference_data(grid, resolve_reference_n(grid.n(), options), model, m.mask, options.reference);
  auto noisy = add_noise(y, noise_level, seed);
  m.data = std::move(noisy.y_delta);
  m.additive_noise_norm = noisy.noise_norm;
  if (options.noise == NoiseAccounting::ADDITIVE) {
    m.noise_norm = noisy.noise_norm;
  } else {
    const DataVector exact = BarrierState(grid, interpolate(grid, model.a), m).observe();
    m.noise_norm = (exact - m.data).norm();
  }
  return m;
}

inline NodeMask indenter_footprint(const NodalField& h) {
  NodeMask mask(static_cast<std::size_t>(h.size()), 0);
  for (Eigen::Index k = 0; k < h.size(); ++k) mask[static_cast<std::size_t>(k)] = h[k] > kOffIndenter;
  return mask;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

inline NodalField experiment1_obstacle(const Grid& g, double radius) {
  return indenter_obstacle(g, [&](double x, double y) { return in_disk(x, y, 0.5, 0.5, radius); });
}

inline InverseScenario make_experiment1(int n, double radius, double delta_rel, std::uint64_t seed,
                                        const SynthesisOptions& options = {}) {
  require(radius > 0.0, "indenter radius must be positive");
  Grid g(n);
  const int ref = detail::resolve_reference_n(n, options);
  ForwardModel model{formulas::experiment1_coefficient, [](double, double) { return 0.0; },
                     experiment1_obstacle(g, radius)};
  InverseScenario s{"EXP1 r=" + detail::format_number(radius) + " delta=" + detail::format_number(delta_rel), g,
                    interpolate(g, formulas::experiment1_coefficient), {}, {}, ref};
  s.measurements.push_back(detail::synthesize(g, model, full_mask(g), delta_rel, seed, options));
  s.indenters.push_back(detail::indenter_footprint(model.h_coarse));
  return s;
}

inline NodeMask observation_mask(const Grid& g, ObservationRegion region) {
  switch (region) {
    case ObservationRegion::LEFT: return region_mask(g, [](double x, double) { return x <= 0.5 + 1e-12; });
    case ObservationRegion::RIGHT: return region_mask(g, [](double x, double) { return x >= 0.5 - 1e-12; });
    case ObservationRegion::FULL: return full_mask(g);
  }
  return full_mask(g);
}

inline NodalField experiment2_obstacle(const Grid& g) {
  return indenter_obstacle(g, [](double x, double y) { return in_box(x, y, 0.45, 0.55, 0.1, 0.9); });
}

inline PointFunction experiment2_coefficient(Experiment2Truth truth) {
  return truth == Experiment2Truth::PRINTED ? PointFunction(formulas::experiment2_coefficient_printed)
                                            : PointFunction(formulas::experiment2_coefficient_opposite);
}

inline InverseScenario make_experiment2(int n, ObservationRegion region, double delta_rel, std::uint64_t seed,
                                        Experiment2Truth truth = Experiment2Truth::PRINTED,
                                        const SynthesisOptions& options = {}) {
  Grid g(n);
  const int ref = detail::resolve_reference_n(n, options);
  const auto a = experiment2_coefficient(truth);
  ForwardModel model{a, formulas::experiment23_load, experiment2_obstacle(g)};
  InverseScenario s{std::string("EXP2 ") + to_string(region) + " " + to_string(truth), g, interpolate(g, a), {}, {},
                    ref};
  s.measurements.push_back(detail::synthesize(g, model, observation_mask(g, region), delta_rel, seed, options));
  s.indenters.push_back(detail::indenter_footprint(model.h_coarse));
  return s;
}

inline NodalField experiment3_obstacle(const Grid& g, int which) {
  require(which >= 0 && which < 3, "experiment 3 has indenters 0, 1, 2");
  const auto c = formulas::kExperiment3Centers[static_cast<std::size_t>(which)];
  return indenter_obstacle(g, [&](double x, double y) { return in_disk(x, y, c[0], c[1], 0.25); });
}

/// Three measurements, each with one of the three indenters. `which` limits
/// the set (e.g. {0} for a single-measurement run).
inline InverseScenario make_experiment3(int n, double delta_rel, std::uint64_t seed,
                                        const SynthesisOptions& options = {}, const std::vector<int>& which = {0, 1, 2}) {
  require(!which.empty(), "at least one indenter is required");
  Grid g(n);
  const int ref = detail::resolve_reference_n(n, options);
  InverseScenario s{"EXP3", g, interpolate(g, formulas::experiment3_coefficient), {}, {}, ref};
  for (int i : which) {
    ForwardModel model{formulas::experiment3_coefficient, formulas::experiment23_load, experiment3_obstacle(g, i)};
    s.measurements.push_back(
        detail::synthesize(g, model, full_mask(g), delta_rel, seed + static_cast<std::uint64_t>(i), options));
    s.indenters.push_back(detail::indenter_footprint(model.h_coarse));
  }
  if (which.size() != 3) {
    s.label += " indenters";
    for (int i : which) s.label += " " + std::to_string(i);
  }
  return s;
}

inline InverseScenario make_scenario(const ScenarioSpec& spec) {
  SynthesisOptions options;
  options.reference_n = spec.resolved_reference_n();
  options.noise = spec.noise;
  switch (spec.name) {
    case ScenarioName::EXP1: return make_experiment1(spec.grid_n, spec.radius, spec.noise_level, spec.seed, options);
    case ScenarioName::EXP2:
      return make_experiment2(spec.grid_n, spec.region, spec.noise_level, spec.seed, spec.exp2_truth, options);
    case ScenarioName::EXP3: return make_experiment3(spec.grid_n, spec.noise_level, spec.seed, options);
    default: break;
  }
  throw Error(ErrorCode::InvalidArgument, std::string("scenario ") + to_string(spec.name) + " is not an inversion");
}

// ---------------------------------------------------------------------------
// Forward comparison table

struct ForwardRow {
  std::string testcase;
  int n = 0;
  std::string method;
  double log10_err_inf = std::numeric_limits<double>::quiet_NaN();
  double log10_err_l2 = std::numeric_limits<double>::quiet_NaN();
  /// h-weighted l2 error, a discrete L2(Omega) norm.
  double log10_err_l2_scaled = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  double cpu_seconds = 0.0;
  std::string error;
};

struct Table1Settings {
  int max_iter = 5000;
  double kkt_tol = 1e-8;
  /// Compare against a fine-grid reference (skipped when false).
  bool with_reference = true;
  bool paper_scale = false;
  ReferenceSettings reference;
};

inline ForwardModel forward_model(ScenarioName testcase, const Grid& g) {
  if (testcase == ScenarioName::TESTCASE1) {
    return {[](double, double) { return 1.0; }, [](double, double) { return 0.0; }, make_testcase1(g.n()).h};
  }
  if (testcase == ScenarioName::TESTCASE2) {
    return {formulas::testcase2_coefficient, formulas::testcase2_load, testcase2_obstacle(g)};
  }
  throw Error(ErrorCode::InvalidArgument, std::string(to_string(testcase)) + " is not a forward test case");
}

/// One row per (n, method) with method in {BM, NPG, PG}.
inline std::vector<ForwardRow> run_table1(const std::vector<int>& n_list, ScenarioName testcase,
                                          const Table1Settings& settings = {}) {
  std::vector<ForwardRow> rows;
  for (int n : n_list) {
    const Grid g(n);
    const ForwardModel model = forward_model(testcase, g);
    std::optional<NodalField> reference;
    std::string reference_error;
    if (settings.with_reference) {
      try {
        reference = reference_solution(g, default_reference_n(n, settings.paper_scale), model, settings.reference);
      } catch (const Error& e) {
        reference_error = e.what();
      }
    }
    const ObstacleProblem p(g, interpolate(g, model.a), interpolate(g, model.f), model.h_coarse);
    const DiscreteObstacle sys(p);
    for (ForwardMethod method : {ForwardMethod::BARRIER, ForwardMethod::NPG, ForwardMethod::PG}) {
      ForwardRow row;
      row.testcase = to_string(testcase);
      row.n = n;
      row.method = to_string(method);
      row.error = reference_error;
      try {
        SolverConfig cfg;
        cfg.method = method;
        cfg.max_iter = settings.max_iter;
        cfg.kkt_tol = settings.kkt_tol;
        cfg.record_trace = false;
        const auto sol = solve(sys, cfg);
        row.iterations = sol.iterations;
        row.converged = sol.converged;
        row.cpu_seconds = sol.wall_time;
        if (reference) {
          const NodalField diff = sol.u - *reference;
          row.log10_err_inf = std::log10(diff.cwiseAbs().maxCoeff());
          row.log10_err_l2 = std::log10(diff.norm());
          row.log10_err_l2_scaled = std::log10(g.spacing() * diff.norm());
        }
      } catch (const Error& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Inversion experiments

struct InversionRow {
  std::string setup;
  std::string method;
  double relative_error_opt = std::numeric_limits<double>::quiet_NaN();
  double relative_error_disc = std::numeric_limits<double>::quiet_NaN();
  double discrepancy_at_opt = std::numeric_limits<double>::quiet_NaN();
  std::optional<int> k_opt;
  std::optional<int> k_disc;
  int iterations = 0;
  std::string stop_reason;
  double tau = 0.0;
  double cpu_seconds = 0.0;
};

inline InversionRow summarize(const std::string& setup, const InversionRun& run, InversionMethod method) {
  InversionRow row;
  row.setup = setup;
  row.method = to_string(method);
  row.k_opt = run.k_opt;
  row.k_disc = run.k_disc;
  if (run.k_opt) {
    row.relative_error_opt = run.relative_error[static_cast<std::size_t>(*run.k_opt)];
    row.discrepancy_at_opt = run.discrepancy_factor[static_cast<std::size_t>(*run.k_opt)];
  }
  if (run.k_disc) row.relative_error_disc = run.relative_error[static_cast<std::size_t>(*run.k_disc)];
  row.iterations = run.iterations();
  row.stop_reason = to_string(run.reason);
  row.tau = run.tau;
  row.cpu_seconds = run.wall_time;
  return row;
}

struct ExperimentRun {
  InversionMethod method;
  InversionRun run;
  InversionRow row;
};

/// Runs the scenario with both NESTEROV and LANDWEBER (in that order).
inline std::vector<ExperimentRun> run_inversion_experiment(const InverseScenario& scenario, InversionConfig cfg) {
  std::vector<ExperimentRun> out;
  if (!cfg.boundary_values) cfg.boundary_values = scenario.a_dagger;
  for (InversionMethod method : {InversionMethod::NESTEROV, InversionMethod::LANDWEBER}) {
    cfg.method = method;
    auto run = reconstruct(scenario.grid, scenario.initial_guess(), scenario.measurements, cfg, scenario.a_dagger);
    auto row = summarize(scenario.label, run, method);
    out.push_back({method, std::move(run), std::move(row)});
  }
  return out;
}

inline std::vector<ExperimentRun> run_inversion_experiment(const ScenarioSpec& spec, const InversionConfig& cfg) {
  return run_inversion_experiment(make_scenario(spec), cfg);
}

/// H1 relative error restricted to triangles whose centroid satisfies keep(x, y).
template <typename Keep>
double restricted_relative_error(const Grid& grid, const NodalField& a, const NodalField& a_dagger, Keep&& keep) {
  auto by_centroid = [&](int t) {
    const auto& tri = grid.triangles()[static_cast<std::size_t>(t)];
    const double cx = (grid.x(tri[0]) + grid.x(tri[1]) + grid.x(tri[2])) / 3.0;
    const double cy = (grid.y(tri[0]) + grid.y(tri[1]) + grid.y(tri[2])) / 3.0;
    return keep(cx, cy);
  };
  const double den = h1_seminorm_squared_where(grid, a_dagger - NodalField::Ones(a_dagger.size()), by_centroid);
  if (!(den > 0.0)) throw Error(ErrorCode::UndefinedMetric, "ground truth is flat on the selected region");
  return std::sqrt(h1_seminorm_squared_where(grid, a - a_dagger, by_centroid) / den);
}

// ---------------------------------------------------------------------------
// Non-uniqueness demonstrations

enum class NonuniquenessKind { CONTACT_PERTURB, COMPONENT_SCALE };

inline const char* to_string(NonuniquenessKind k) {
  return k == NonuniquenessKind::CONTACT_PERTURB ? "CONTACT_PERTURB" : "COMPONENT_SCALE";
}

struct Perturbation {
  /// CONTACT_PERTURB: additive change of a.
  NodalField delta_a;
  /// COMPONENT_SCALE: any node of the non-contact component to scale, and the factor.
  int component_node = -1;
  double factor = 1.0;
  /// When false the CONTACT_PERTURB support check is skipped (control runs).
  bool enforce_support = true;
};

struct NonuniquenessResult {
  double u_diff_linf = 0.0;
  NodalField a_perturbed;
  NodeMask contact;
  int affected_nodes = 0;
};

inline constexpr double kPlateauContactTol = 1e-8;

// Projected iterations land exactly on the obstacle, so the contact set is
// sharp; barrier iterates stay strictly above it on zero-multiplier nodes.
inline SolverConfig contact_config() {
  SolverConfig cfg;
  cfg.method = ForwardMethod::NPG;
  cfg.max_iter = 50000;
  cfg.record_trace = false;
  return cfg;
}

/// Contact set minus every node with a non-contact neighbour.
inline NodeMask erode(const Grid& grid, const NodeMask& mask) {
  NodeMask out = mask;
  for (const auto& t : grid.triangles()) {
    if (!(mask[t[0]] && mask[t[1]] && mask[t[2]])) {
      for (int k : t) out[k] = 0;
    }
  }
  for (int k : grid.boundary_nodes()) out[k] = 0;
  return out;
}

/// Nodes of the connected non-contact region containing `seed`, with
/// connectivity along triangle edges.
inline NodeMask non_contact_component(const Grid& grid, const NodeMask& contact, int seed) {
  require(seed >= 0 && seed < grid.num_nodes(), "component seed node out of range");
  if (contact[seed]) throw Error(ErrorCode::InvalidPerturbation, "component seed lies in the contact set");
  std::vector<std::vector<int>> neighbours(static_cast<std::size_t>(grid.num_nodes()));
  for (const auto& t : grid.triangles()) {
    for (int i = 0; i < 3; ++i) neighbours[t[i]].push_back(t[(i + 1) % 3]), neighbours[t[(i + 1) % 3]].push_back(t[i]);
  }
  NodeMask in(static_cast<std::size_t>(grid.num_nodes()), 0);
  std::vector<int> stack{seed};
  in[seed] = 1;
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    for (int m : neighbours[k]) {
      if (!in[m] && !contact[m]) {
        in[m] = 1;
        stack.push_back(m);
      }
    }
  }
  return in;
}

/// Re-solves with a perturbed coefficient and reports the change in u.
///
/// CONTACT_PERTURB adds delta_a, whose support must lie in the eroded contact
/// set. COMPONENT_SCALE multiplies a by `factor` on one non-contact component
/// and on the contact nodes adjacent to it, so every element touching the
/// component is scaled uniformly; this needs f = 0 on the component.
inline NonuniquenessResult nonuniqueness_check(NonuniquenessKind kind, const ObstacleProblem& problem,
                                               const Perturbation& perturbation,
                                               SolverConfig cfg = contact_config()) {
  const Grid& g = problem.grid;
  cfg.record_trace = false;
  const auto base = solve(problem, cfg);
  if (!base.converged) throw Error(ErrorCode::NumericalFailure, "base forward solve did not converge");
  NonuniquenessResult out;
  out.contact = contact_set(g, base.u, problem.h, kPlateauContactTol);
  out.a_perturbed = problem.a;

  if (kind == NonuniquenessKind::CONTACT_PERTURB) {
    check_field(g, perturbation.delta_a, "perturbation");
    const NodeMask interior = erode(g, out.contact);
    for (int k = 0; k < g.num_nodes(); ++k) {
      if (perturbation.delta_a[k] == 0.0) continue;
      ++out.affected_nodes;
      if (perturbation.enforce_support && !interior[k]) {
        throw Error(ErrorCode::InvalidPerturbation,
                    "perturbation is non-zero at node " + std::to_string(k) + " outside the contact interior");
      }
    }
    out.a_perturbed += perturbation.delta_a;
  } else {
    require(perturbation.factor > 0.0, "scaling factor must be positive");
    const NodeMask component = non_contact_component(g, out.contact, perturbation.component_node);
    NodeMask scaled = component;
    for (const auto& t : g.triangles()) {
      if (component[t[0]] || component[t[1]] || component[t[2]]) {
        for (int k : t) scaled[k] = 1;
      }
    }
    for (int k = 0; k < g.num_nodes(); ++k) {
      if (!scaled[k]) continue;
      if (component[k] && problem.f[k] != 0.0) {
        throw Error(ErrorCode::InvalidPerturbation, "component scaling needs f = 0 on the component");
      }
      out.a_perturbed[k] *= perturbation.factor;
      ++out.affected_nodes;
    }
  }
  if (!((out.a_perturbed.array() > 0.0).all())) {
    throw Error(ErrorCode::InvalidPerturbation, "perturbed coefficient is not strictly positive");
  }
  const ObstacleProblem perturbed(g, out.a_perturbed, problem.f, problem.h);
  const auto sol = solve(perturbed, cfg);
  if (!sol.converged) throw Error(ErrorCode::NumericalFailure, "perturbed forward solve did not converge");
  out.u_diff_linf = (sol.u - base.u).cwiseAbs().maxCoeff();
  return out;
}

// ---------------------------------------------------------------------------
// CSV output

namespace detail {

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string csv_index(const std::optional<int>& v) { return v ? std::to_string(*v) : ""; }

}  // namespace detail

inline void write_forward_rows(std::ostream& out, const std::vector<ForwardRow>& rows) {
  out << "testcase,n,method,log10_err_inf,log10_err_l2,log10_err_l2_scaled,iterations,converged,cpu_seconds,error\n";
  for (const auto& r : rows) {
    out << r.testcase << ',' << r.n << ',' << r.method << ',' << detail::csv_number(r.log10_err_inf) << ','
        << detail::csv_number(r.log10_err_l2) << ',' << detail::csv_number(r.log10_err_l2_scaled) << ','
        << r.iterations << ',' << (r.converged ? 1 : 0) << ',' << detail::csv_number(r.cpu_seconds) << ",\""
        << r.error << "\"\n";
  }
}

inline void write_inversion_rows(std::ostream& out, const std::vector<InversionRow>& rows) {
  out << "setup,method,relative_error_opt,relative_error_disc,discrepancy_at_opt,k_opt,k_disc,iterations,"
         "stop_reason,tau,cpu_seconds\n";
  for (const auto& r : rows) {
    out << '"' << r.setup << "\"," << r.method << ',' << detail::csv_number(r.relative_error_opt) << ','
        << detail::csv_number(r.relative_error_disc) << ',' << detail::csv_number(r.discrepancy_at_opt) << ','
        << detail::csv_index(r.k_opt) << ',' << detail::csv_index(r.k_disc) << ',' << r.iterations << ','
        << r.stop_reason << ',' << detail::csv_number(r.tau) << ',' << detail::csv_number(r.cpu_seconds) << '\n';
  }
}

/// iter,residual_norm,discrepancy_factor,relative_error
inline void write_inversion_trace(std::ostream& out, const InversionRun& run) {
  out << "iter,residual_norm,discrepancy_factor,relative_error\n";
  char buf[48];
  for (std::size_t k = 0; k < run.residual_norm.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", run.residual_norm[k]);
    out << k << ',' << buf << ',';
    if (!std::isnan(run.discrepancy_factor[k])) {
      std::snprintf(buf, sizeof buf, "%.17g", run.discrepancy_factor[k]);
      out << buf;
    }
    out << ',';
    if (!std::isnan(run.relative_error[k])) {
      std::snprintf(buf, sizeof buf, "%.17g", run.relative_error[k]);
      out << buf;
    }
    out << '\n';
  }
}

/// iter,kkt_residual,energy,wall_time_s
inline void write_forward_trace(std::ostream& out, const ContactSolution& sol) {
  out << "iter,kkt_residual,energy,wall_time_s\n";
  char buf[128];
  for (const auto& row : sol.trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.6f\n", row.iter, row.kkt_residual, row.energy, row.wall_time_s);
    out << buf;
  }
}

}  // namespace membrane_id
