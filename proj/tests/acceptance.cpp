// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "membrane_id/cli.hpp"
#include "membrane_id/scenarios.hpp"

using namespace membrane_id;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr int kDeskGrid = 30;

// 1. All three forward solvers agree on both test cases.
Outcome forward_cross_validation() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  bool converged = true;
  for (const auto& p : {make_testcase1(20), make_testcase2(20)}) {
    const DiscreteObstacle sys(p);
    std::vector<NodalField> solutions;
    for (auto m : {ForwardMethod::PG, ForwardMethod::NPG, ForwardMethod::BARRIER}) {
      SolverConfig cfg;
      cfg.method = m;
      cfg.max_iter = 100000;
      cfg.record_trace = false;
      const auto sol = solve(sys, cfg);
      converged = converged && sol.converged;
      solutions.push_back(sol.u);
    }
    for (std::size_t i = 0; i < solutions.size(); ++i)
      for (std::size_t j = i + 1; j < solutions.size(); ++j)
        worst = std::max(worst, (solutions[i] - solutions[j]).cwiseAbs().maxCoeff());
  }
  const double t = seconds_since(t0);
  return {converged && worst <= 1e-5 && t < 30.0,
          fmt("all converged=%s, max pairwise l_inf %.2e (<= 1e-5), %.1f s (< 30 s)", converged ? "yes" : "no", worst, t)};
}

// 2. Iteration counts against the forward comparison table.
Outcome table1_iterations() {
  const auto t0 = std::chrono::steady_clock::now();
  Table1Settings settings;
  settings.with_reference = false;
  const std::vector<int> ns{20, 40, 80};
  const std::vector<double> target_bm{323, 347, 347};
  const auto rows = run_table1(ns, ScenarioName::TESTCASE1, settings);
  bool pass = true;
  std::string detail = "BM";
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const auto& bm = rows[3 * i];
    const bool ok = bm.converged && std::abs(bm.iterations - target_bm[i]) <= 0.25 * target_bm[i];
    pass = pass && ok;
    detail += fmt(" n=%d:%d(%g)", ns[i], bm.iterations, target_bm[i]);
  }
  detail += "; PG/NPG";
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const auto& npg = rows[3 * i + 1];
    const auto& pg = rows[3 * i + 2];
    // The table reports finite counts at n=20 and the budget from n=40 on.
    for (const auto* row : {&npg, &pg}) pass = pass && row->converged == (ns[i] < 40);
    detail += fmt(" n=%d:%d%s/%d%s", ns[i], pg.iterations, pg.converged ? "" : "+", npg.iterations,
                  npg.converged ? "" : "+");
  }
  const double t = seconds_since(t0);
  pass = pass && t < 180.0;
  return {pass, detail + fmt(", %.1f s (< 180 s)", t)};
}

// 3. Error magnitudes against a 4(n-1)+1 reference.
Outcome table1_errors() {
  const std::vector<int> ns{20, 40};
  const std::vector<double> target{-2.35, -2.69};
  const auto rows = run_table1(ns, ScenarioName::TESTCASE1);
  bool pass = true;
  std::string detail = "BM log10 err_inf";
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double e = rows[3 * i].log10_err_inf;
    pass = pass && std::abs(e - target[i]) <= 0.4;
    detail += fmt(" n=%d: %.2f (target %.2f +- 0.4)", ns[i], e, target[i]);
  }
  return {pass, detail};
}

// Mixed contact / free test configuration for derivative checks.
struct Linearized {
  Grid grid;
  NodalField a;
  Measurement m;
};

Linearized linearized_setup(int n, bool partial) {
  const Grid g(n);
  Linearized s{g, interpolate(g, formulas::testcase2_coefficient), {}};
  s.m.f = constant_field(g, -2.0);
  s.m.h = make_testcase1(n).h;
  s.m.mask = partial ? region_mask(g, [](double x, double) { return x <= 0.6; }) : full_mask(g);
  s.m.data = DataVector::Zero(s.m.observed());
  return s;
}

// 4. Exact discrete adjoint.
Outcome adjoint_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  double worst = 0.0;
  for (int n : {6, 10}) {
    const auto s = linearized_setup(n, true);
    const BarrierState state(s.grid, s.a, s.m);
    for (int pair = 0; pair < 20; ++pair) {
      NodalField b(s.grid.num_nodes());
      for (auto& v : b) v = dist(rng);
      DataVector r(s.m.observed());
      for (auto& v : r) v = dist(rng);
      const double lhs = derivative_apply(state, b).dot(r);
      const double rhs = b.dot(adjoint_apply(state, r));
      worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-11 && t < 10.0, fmt("40 pairs, max relative defect %.2e (<= 1e-11), %.2f s (< 10 s)", worst, t)};
}

// 5. Derivative against frozen-schedule central differences.
Outcome derivative_fd() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = linearized_setup(20, false);
  const BarrierState state(s.grid, s.a, s.m);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  NodalField b = NodalField::Zero(s.grid.num_nodes());
  for (int k : s.grid.free_nodes()) b[k] = dist(rng);
  const DataVector d = state.derivative(b);
  std::vector<double> errors;
  std::string curve;
  for (int e = 3; e <= 9; ++e) {
    const double eps = std::pow(10.0, -e);
    const BarrierState plus(s.grid, s.a + eps * b, s.m, state.mu(), state.theta(), state.u());
    const BarrierState minus(s.grid, s.a - eps * b, s.m, state.mu(), state.theta(), state.u());
    errors.push_back(((plus.observe() - minus.observe()) / (2.0 * eps) - d).norm() / d.norm());
    curve += fmt(" %.1e", errors.back());
  }
  const auto best = std::min_element(errors.begin(), errors.end()) - errors.begin();
  bool v_shape = best > 0 && best + 1 < static_cast<long>(errors.size());
  for (long i = 0; i < best; ++i) v_shape = v_shape && errors[i] > errors[i + 1];
  for (long i = best; i + 1 < static_cast<long>(errors.size()); ++i) v_shape = v_shape && errors[i] < errors[i + 1];
  const double at_1e5 = errors[2];
  const double t = seconds_since(t0);
  return {at_1e5 <= 1e-3 && v_shape && t < 30.0,
          fmt("error at eps=1e-5 %.2e (<= 1e-3), V-shape=%s over eps=1e-3..1e-9:", at_1e5, v_shape ? "yes" : "no") +
              curve + fmt(", %.1f s (< 30 s)", t)};
}

NodalField compact_bump(const Grid& g, double cx, double cy, double radius, double amplitude) {
  return interpolate(g, [=](double x, double y) {
    const double q = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (radius * radius);
    return q < 1.0 ? amplitude * (1.0 - q) * (1.0 - q) : 0.0;
  });
}

// 6. Coefficient changes invisible to the solution, and a visible control.
Outcome invariance() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto tc1 = make_testcase1(20);
  const double interior =
      nonuniqueness_check(NonuniquenessKind::CONTACT_PERTURB, tc1, {compact_bump(tc1.grid, 0.5, 0.5, 0.08, 0.1)})
          .u_diff_linf;
  Perturbation control{compact_bump(tc1.grid, 0.2, 0.5, 0.12, 0.1)};
  control.enforce_support = false;
  const double outside = nonuniqueness_check(NonuniquenessKind::CONTACT_PERTURB, tc1, control).u_diff_linf;

  const Grid g(31);
  const ObstacleProblem annulus(g, constant_field(g, 1.0), constant_field(g, 0.0), indenter_obstacle(g, [](double x, double y) {
                                  const double r = std::hypot(x - 0.5, y - 0.5);
                                  return r >= 0.15 - 1e-12 && r <= 0.35 + 1e-12;
                                }));
  double scaled = 0.0;
  for (int seed : {g.index(15, 15), g.index(2, 2)}) {
    Perturbation p;
    p.component_node = seed;
    p.factor = 3.0;
    scaled = std::max(scaled, nonuniqueness_check(NonuniquenessKind::COMPONENT_SCALE, annulus, p).u_diff_linf);
  }
  const double t = seconds_since(t0);
  return {interior <= 1e-6 && scaled <= 1e-6 && outside > 1e-4 && t < 60.0,
          fmt("contact-interior bump %.1e, component scaling %.1e (<= 1e-6); outside control %.1e (> 1e-4), %.1f s",
              interior, scaled, outside, t)};
}

InversionRun nesterov_run(const InverseScenario& s, int max_iter, bool stop_at_discrepancy) {
  InversionConfig cfg;
  cfg.method = InversionMethod::NESTEROV;
  cfg.max_iter = max_iter;
  cfg.stop_at_discrepancy = stop_at_discrepancy;
  cfg.boundary_values = s.a_dagger;
  return reconstruct(s.grid, s.initial_guess(), s.measurements, cfg, s.a_dagger);
}

// 7. Identifiability ordering over indenter radii.
Outcome identifiability_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> errors;
  std::string detail;
  for (double r : {0.1, 0.25, 0.5}) {
    const auto run = nesterov_run(make_experiment1(kDeskGrid, r, 1e-3, 1), 200, false);
    errors.push_back(run.relative_error[static_cast<std::size_t>(*run.k_opt)]);
    detail += fmt(" r=%.2f: %.3f (k_opt %d, k_disc %s)", r, errors.back(), *run.k_opt,
                  run.k_disc ? std::to_string(*run.k_disc).c_str() : "-");
  }
  const double t = seconds_since(t0);
  const bool pass = errors[0] < 0.35 && errors[2] > 0.6 && errors[0] < errors[1] && errors[1] < errors[2] && t < 900.0;
  return {pass, "n=30 delta=0.1% best relative error" + detail + fmt(", %.0f s (< 900 s)", t)};
}

// 8. Immediate semiconvergence at 10% noise.
Outcome heavy_noise() {
  bool pass = true;
  std::string detail = "n=30 delta=10% k_opt";
  for (double r : {0.1, 0.25, 0.5}) {
    const auto run = nesterov_run(make_experiment1(kDeskGrid, r, 0.1, 1), 30, false);
    pass = pass && *run.k_opt <= 5;
    detail += fmt(" r=%.2f: %d", r, *run.k_opt);
  }
  return {pass, detail + " (<= 5)"};
}

// 9. Accelerated vs plain Landweber stopping index.
Outcome acceleration() {
  const auto s = make_experiment3(kDeskGrid, 1e-3, 1);
  InversionConfig cfg;
  cfg.boundary_values = s.a_dagger;
  cfg.method = InversionMethod::NESTEROV;
  const auto nesterov = reconstruct(s.grid, s.initial_guess(), s.measurements, cfg);
  if (!nesterov.k_disc) return {false, "NESTEROV never reached the discrepancy threshold"};
  const int k_n = *nesterov.k_disc;
  // Landweber only has to be followed until 2 k_N - 1 to decide k_N <= 0.5 k_L.
  cfg.method = InversionMethod::LANDWEBER;
  cfg.max_iter = std::max(2 * k_n - 1, 0);
  const auto landweber = reconstruct(s.grid, s.initial_guess(), s.measurements, cfg);
  const bool pass = !landweber.k_disc;
  const std::string k_l = landweber.k_disc ? std::to_string(*landweber.k_disc) : ">= " + std::to_string(2 * k_n);
  return {pass, fmt("n=30 discrepancy index NESTEROV %d, LANDWEBER %s (need >= 2x)", k_n, k_l.c_str())};
}

// 10. Observation region and the indenter barrier.
Outcome barrier_effect() {
  struct Errors {
    double left, right, global;
  };
  auto measure = [](ObservationRegion region) {
    const auto s = make_experiment2(kDeskGrid, region, 1e-3, 1, Experiment2Truth::OPPOSITE);
    const auto run = nesterov_run(s, 300, false);
    const NodalField& a = run.optimal_iterate;
    return Errors{restricted_relative_error(s.grid, a, s.a_dagger, [](double x, double) { return x < 0.5; }),
                  restricted_relative_error(s.grid, a, s.a_dagger, [](double x, double) { return x > 0.5; }),
                  run.relative_error[static_cast<std::size_t>(*run.k_opt)]};
  };
  const Errors left = measure(ObservationRegion::LEFT);
  const Errors right = measure(ObservationRegion::RIGHT);
  const Errors full = measure(ObservationRegion::FULL);
  const bool pass = left.right > 0.8 && left.left < 0.6 && right.left > 0.8 && right.right < 0.6 &&
                    full.global < left.global && full.global < right.global;
  return {pass, fmt("LEFT obs: left %.3f (< 0.6) right %.3f (> 0.8); RIGHT obs: right %.3f (< 0.6) left %.3f (> 0.8); "
                    "global LEFT %.3f RIGHT %.3f FULL %.3f",
                    left.left, left.right, right.right, right.left, left.global, right.global, full.global)};
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// 11. Re-running from the echoed config reproduces the results.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "membrane_id_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << R"({"grid": {"n": 16}, "problem": {"scenario": "EXP2", "regions": ["LEFT", "FULL"]},
    "inversion": {"max_iter": 25}})";
  auto run = [&](const fs::path& config, const fs::path& out) {
    const std::string cmd = std::string(MEMBRANE_ID_EXE) + " experiment --config " + config.string() + " --out " +
                            out.string() + " --seed 42 >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  if (run(dir / "config.json", dir / "first") != 0) return {false, "first run failed"};
  if (run(dir / "first" / "config.echo.json", dir / "second") != 0) return {false, "re-run from echo failed"};
  auto without_time = [](std::vector<std::string> rows) {
    for (auto& r : rows) r = r.substr(0, r.rfind(','));  // cpu_seconds is the last column
    return rows;
  };
  const bool results = without_time(read_lines(dir / "first/results.csv")) ==
                       without_time(read_lines(dir / "second/results.csv"));
  int identical = 0, compared = 0;
  for (const auto& entry : fs::directory_iterator(dir / "first")) {
    const auto name = entry.path().filename();
    if (name == "results.csv" || name == "config.echo.json") continue;
    ++compared;
    identical += read_all(entry.path()) == read_all(dir / "second" / name);
  }
  fs::remove_all(dir);
  return {results && identical == compared && compared > 0,
          fmt("results.csv equal except cpu_seconds: %s; %d/%d traces and fields bitwise equal", results ? "yes" : "no",
              identical, compared)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"forward cross-validation", forward_cross_validation},
      {"iteration counts", table1_iterations},
      {"error magnitudes", table1_errors},
      {"adjoint identity", adjoint_identity},
      {"derivative finite differences", derivative_fd},
      {"coefficient invariance", invariance},
      {"identifiability ordering", identifiability_ordering},
      {"semiconvergence at heavy noise", heavy_noise},
      {"Nesterov acceleration", acceleration},
      {"observation barrier effect", barrier_effect},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %-32s %s  %s [%.1f s]\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d passed, %d failed\n", criteria.size(), static_cast<int>(criteria.size()) - failed, failed);
  return failed == 0 ? 0 : 1;
}
