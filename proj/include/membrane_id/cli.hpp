#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "membrane_id/error.hpp"
#include "membrane_id/field_io.hpp"
#include "membrane_id/inverse.hpp"
#include "membrane_id/obstacle.hpp"
#include "membrane_id/scenarios.hpp"

namespace membrane_id::cli {

using json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitBudget = 2;

/// Field files for CUSTOM problems (mesh CSV format). Empty = not given.
struct FieldFiles {
  std::string a;       // forward coefficient
  std::string f;       // load
  std::string h;       // obstacle
  std::string a0;      // inversion start (default 1 inside, a_true or a0 trace on the boundary)
  std::string a_true;  // ground truth for error tracking
  std::string data;    // observed displacement, full nodal field; only masked entries are used
  std::string mask;    // observation mask as a 0/1 field (default: all nodes)
};

/// Fully materialized run configuration. Every member has a default and
/// to_json() writes all of them back out.
struct RunConfig {
  int grid_n = 30;
  int reference_n = 0;  // 0 = 4 (n - 1) + 1, or the paper-scale grid
  bool paper_scale = false;

  std::string scenario = "TESTCASE1";
  double radius = 0.1;
  double noise_level = 1e-3;
  ObservationRegion region = ObservationRegion::FULL;
  Experiment2Truth exp2_truth = Experiment2Truth::PRINTED;
  NoiseAccounting noise_accounting = NoiseAccounting::TOTAL;
  std::vector<double> radii{0.1, 0.25, 0.5};
  std::vector<double> noise_levels{1e-3, 1e-2, 1e-1};
  std::vector<ObservationRegion> regions{ObservationRegion::LEFT, ObservationRegion::RIGHT, ObservationRegion::FULL};
  std::vector<int> n_list{20, 40, 80};
  std::vector<ScenarioName> testcases{ScenarioName::TESTCASE1, ScenarioName::TESTCASE2};
  bool table1_reference = true;
  FieldFiles fields;
  double noise_norm = -1.0;  // CUSTOM inversion: ||y - y_delta|| if known

  SolverConfig solver = [] {
    SolverConfig s;
    s.method = ForwardMethod::BARRIER;
    return s;
  }();
  InversionConfig inversion;

  std::string out_dir = "membrane-id-out";
  int snapshot_every = 0;
  bool images = true;

  std::uint64_t seed = 0;

  int resolved_reference_n(int n) const {
    return reference_n > 0 ? reference_n : default_reference_n(n, paper_scale);
  }
};

namespace detail {

inline Error config_error(const std::string& msg) { return Error(ErrorCode::Config, msg); }

template <typename Enum>
Enum parse_enum(const std::string& key, const std::string& value, std::initializer_list<std::pair<const char*, Enum>> options) {
  std::string allowed;
  for (const auto& [name, e] : options) {
    if (value == name) return e;
    allowed += allowed.empty() ? name : std::string("|") + name;
  }
  throw config_error("key '" + key + "': unknown value '" + value + "' (expected " + allowed + ")");
}

inline ForwardMethod parse_forward_method(const std::string& key, const std::string& v) {
  return parse_enum<ForwardMethod>(
      key, v, {{"BM", ForwardMethod::BARRIER}, {"NPG", ForwardMethod::NPG}, {"PG", ForwardMethod::PG}});
}

inline ObservationRegion parse_region(const std::string& key, const std::string& v) {
  return parse_enum<ObservationRegion>(
      key, v, {{"LEFT", ObservationRegion::LEFT}, {"RIGHT", ObservationRegion::RIGHT}, {"FULL", ObservationRegion::FULL}});
}

inline ScenarioName parse_testcase(const std::string& key, const std::string& v) {
  return parse_enum<ScenarioName>(key, v, {{"TESTCASE1", ScenarioName::TESTCASE1}, {"TESTCASE2", ScenarioName::TESTCASE2}});
}

/// Reads one section, rejecting keys it does not know.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    node_ = &root.at(name);
    if (!node_->is_object()) throw config_error("section '" + name + "' must be an object");
  }

  /// Nested object given directly, `name` being its dotted path.
  Section(const json* node, const std::string& name) : name_(name), node_(node) {
    if (!node_->is_object()) throw config_error("section '" + name + "' must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& target) {
    known_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    try {
      target = node_->at(key).template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw config_error("key '" + path(key) + "': " + e.what());
    }
  }

  std::optional<std::string> text(const std::string& key) {
    std::optional<std::string> out;
    if (node_ && node_->contains(key)) {
      std::string v;
      read(key, v);
      out = v;
    } else {
      known_.insert(key);
    }
    return out;
  }

  const json* child(const std::string& key) {
    known_.insert(key);
    return node_ && node_->contains(key) ? &node_->at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  void finish() const {
    if (!node_) return;
    for (const auto& item : node_->items()) {
      if (!known_.count(item.key())) throw config_error("unknown key '" + path(item.key()) + "'");
    }
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> known_;
};

}  // namespace detail

inline RunConfig parse_config(const json& root) {
  if (!root.is_object()) throw detail::config_error("config must be a JSON object");
  static const std::set<std::string> sections{"grid", "problem", "solver", "inversion", "output", "seed"};
  for (const auto& item : root.items()) {
    if (!sections.count(item.key())) throw detail::config_error("unknown key '" + item.key() + "'");
  }
  RunConfig c;
  {
    detail::Section s(root, "grid");
    s.read("n", c.grid_n);
    s.read("reference_n", c.reference_n);
    s.read("paper_scale", c.paper_scale);
    s.finish();
  }
  {
    detail::Section s(root, "problem");
    s.read("scenario", c.scenario);
    s.read("radius", c.radius);
    s.read("noise_level", c.noise_level);
    if (auto v = s.text("region")) c.region = detail::parse_region(s.path("region"), *v);
    if (auto v = s.text("exp2_truth")) {
      c.exp2_truth = detail::parse_enum<Experiment2Truth>(
          s.path("exp2_truth"), *v, {{"PRINTED", Experiment2Truth::PRINTED}, {"OPPOSITE", Experiment2Truth::OPPOSITE}});
    }
    if (auto v = s.text("noise_accounting")) {
      c.noise_accounting = detail::parse_enum<NoiseAccounting>(
          s.path("noise_accounting"), *v, {{"TOTAL", NoiseAccounting::TOTAL}, {"ADDITIVE", NoiseAccounting::ADDITIVE}});
    }
    s.read("radii", c.radii);
    s.read("noise_levels", c.noise_levels);
    if (const json* regions = s.child("regions")) {
      c.regions.clear();
      for (const auto& v : *regions) c.regions.push_back(detail::parse_region(s.path("regions"), v.get<std::string>()));
    }
    s.read("n_list", c.n_list);
    if (const json* cases = s.child("testcases")) {
      c.testcases.clear();
      for (const auto& v : *cases) c.testcases.push_back(detail::parse_testcase(s.path("testcases"), v.get<std::string>()));
    }
    s.read("table1_reference", c.table1_reference);
    s.read("noise_norm", c.noise_norm);
    if (const json* files = s.child("fields")) {
      detail::Section fs(files, s.path("fields"));
      fs.read("a", c.fields.a);
      fs.read("f", c.fields.f);
      fs.read("h", c.fields.h);
      fs.read("a0", c.fields.a0);
      fs.read("a_true", c.fields.a_true);
      fs.read("data", c.fields.data);
      fs.read("mask", c.fields.mask);
      fs.finish();
    }
    s.finish();
  }
  {
    detail::Section s(root, "solver");
    if (auto v = s.text("method")) c.solver.method = detail::parse_forward_method(s.path("method"), *v);
    s.read("tau", c.solver.tau);
    s.read("kkt_tol", c.solver.kkt_tol);
    s.read("max_iter", c.solver.max_iter);
    s.read("mu0", c.solver.mu0);
    s.read("theta0", c.solver.theta0);
    s.read("contact_tol", c.solver.contact_tol);
    s.finish();
  }
  {
    detail::Section s(root, "inversion");
    auto& inv = c.inversion;
    if (auto v = s.text("method")) {
      inv.method = detail::parse_enum<InversionMethod>(
          s.path("method"), *v, {{"NESTEROV", InversionMethod::NESTEROV}, {"LANDWEBER", InversionMethod::LANDWEBER}});
    }
    s.read("tau", inv.tau);
    s.read("max_iter", inv.max_iter);
    s.read("discrepancy_factor", inv.discrepancy_factor);
    std::vector<double> clip{inv.clip_lo, inv.clip_hi};
    s.read("clip_bounds", clip);
    if (clip.size() != 2) throw detail::config_error("key 'inversion.clip_bounds' must have two entries");
    inv.clip_lo = clip[0];
    inv.clip_hi = clip[1];
    if (auto v = s.text("residual_operator")) {
      inv.residual_operator = detail::parse_enum<ResidualOperator>(
          s.path("residual_operator"), *v, {{"BARRIER", ResidualOperator::BARRIER}, {"EXACT", ResidualOperator::EXACT}});
    }
    if (auto v = s.text("preconditioner")) {
      inv.preconditioner = detail::parse_enum<PreconditionerKind>(
          s.path("preconditioner"), *v, {{"H01", PreconditionerKind::H01}, {"L2", PreconditionerKind::L2}});
    }
    s.read("stop_at_discrepancy", inv.stop_at_discrepancy);
    s.read("barrier_kkt_tol", inv.barrier.kkt_tol);
    s.read("barrier_max_outer", inv.barrier.max_outer);
    s.read("barrier_mu0", inv.barrier.mu0);
    s.read("barrier_theta0", inv.barrier.theta0);
    s.finish();
  }
  {
    detail::Section s(root, "output");
    s.read("dir", c.out_dir);
    s.read("snapshot_every", c.snapshot_every);
    s.read("images", c.images);
    s.finish();
  }
  if (root.contains("seed")) {
    try {
      c.seed = root.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw detail::config_error(std::string("key 'seed': ") + e.what());
    }
  }
  return c;
}

inline RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>") {
  json root;
  try {
    root = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // nlohmann reports "line L, column C" in what().
    throw detail::config_error(source + ": " + e.what());
  }
  return parse_config(root);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

inline json to_json(const RunConfig& c) {
  json regions = json::array();
  for (auto r : c.regions) regions.push_back(to_string(r));
  json cases = json::array();
  for (auto t : c.testcases) cases.push_back(to_string(t));
  const auto& inv = c.inversion;
  return json{
      {"grid", {{"n", c.grid_n}, {"reference_n", c.reference_n}, {"paper_scale", c.paper_scale}}},
      {"problem",
       {{"scenario", c.scenario},
        {"radius", c.radius},
        {"noise_level", c.noise_level},
        {"region", to_string(c.region)},
        {"exp2_truth", to_string(c.exp2_truth)},
        {"noise_accounting", to_string(c.noise_accounting)},
        {"radii", c.radii},
        {"noise_levels", c.noise_levels},
        {"regions", regions},
        {"n_list", c.n_list},
        {"testcases", cases},
        {"table1_reference", c.table1_reference},
        {"noise_norm", c.noise_norm},
        {"fields",
         {{"a", c.fields.a},
          {"f", c.fields.f},
          {"h", c.fields.h},
          {"a0", c.fields.a0},
          {"a_true", c.fields.a_true},
          {"data", c.fields.data},
          {"mask", c.fields.mask}}}}},
      {"solver",
       {{"method", to_string(c.solver.method)},
        {"tau", c.solver.tau},
        {"kkt_tol", c.solver.kkt_tol},
        {"max_iter", c.solver.max_iter},
        {"mu0", c.solver.mu0},
        {"theta0", c.solver.theta0},
        {"contact_tol", c.solver.contact_tol}}},
      {"inversion",
       {{"method", to_string(inv.method)},
        {"tau", inv.tau},
        {"max_iter", inv.max_iter},
        {"discrepancy_factor", inv.discrepancy_factor},
        {"clip_bounds", {inv.clip_lo, inv.clip_hi}},
        {"residual_operator", to_string(inv.residual_operator)},
        {"preconditioner", to_string(inv.preconditioner)},
        {"stop_at_discrepancy", inv.stop_at_discrepancy},
        {"barrier_kkt_tol", inv.barrier.kkt_tol},
        {"barrier_max_outer", inv.barrier.max_outer},
        {"barrier_mu0", inv.barrier.mu0},
        {"barrier_theta0", inv.barrier.theta0}}},
      {"output", {{"dir", c.out_dir}, {"snapshot_every", c.snapshot_every}, {"images", c.images}}},
      {"seed", c.seed}};
}

// ---------------------------------------------------------------------------

class OutputDir {
 public:
  OutputDir(const RunConfig& c) : root_(c.out_dir), images_(c.images) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create output directory " + root_.string() + ": " + ec.message());
  }

  std::string path(const std::string& name) const { return (root_ / name).string(); }

  std::ofstream open(const std::string& name) const {
    std::ofstream out(path(name));
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path(name) + " for writing");
    return out;
  }

  void field(const std::string& name, const Grid& grid, const NodalField& values) const {
    write_field_csv(path(name + ".csv"), grid, values);
    if (images_) write_field_pgm(path(name + ".pgm"), grid, values);
  }

  void echo(const RunConfig& c) const { open("config.echo.json") << to_json(c).dump(2) << '\n'; }

 private:
  std::filesystem::path root_;
  bool images_;
};

namespace detail {

inline ObstacleProblem forward_problem(const RunConfig& c) {
  if (c.scenario == "TESTCASE1") return make_testcase1(c.grid_n);
  if (c.scenario == "TESTCASE2") return make_testcase2(c.grid_n);
  if (c.scenario == "CUSTOM") {
    const Grid g(c.grid_n);
    if (c.fields.h.empty()) throw config_error("CUSTOM forward problem needs problem.fields.h");
    NodalField a = c.fields.a.empty() ? constant_field(g, 1.0) : read_field_csv(c.fields.a, g);
    NodalField f = c.fields.f.empty() ? constant_field(g, 0.0) : read_field_csv(c.fields.f, g);
    return ObstacleProblem(g, std::move(a), std::move(f), read_field_csv(c.fields.h, g));
  }
  throw config_error("forward needs scenario TESTCASE1, TESTCASE2 or CUSTOM, got '" + c.scenario + "'");
}

inline SynthesisOptions synthesis(const RunConfig& c, int n) {
  SynthesisOptions o;
  o.reference_n = c.resolved_reference_n(n);
  o.noise = c.noise_accounting;
  return o;
}

inline std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

inline InverseScenario custom_inversion(const RunConfig& c) {
  const Grid g(c.grid_n);
  if (c.fields.h.empty() || c.fields.data.empty()) {
    throw config_error("CUSTOM inversion needs problem.fields.h and problem.fields.data");
  }
  Measurement m;
  m.h = read_field_csv(c.fields.h, g);
  m.f = c.fields.f.empty() ? constant_field(g, 0.0) : read_field_csv(c.fields.f, g);
  m.mask = full_mask(g);
  if (!c.fields.mask.empty()) {
    const NodalField mask = read_field_csv(c.fields.mask, g);
    for (int k = 0; k < g.num_nodes(); ++k) m.mask[static_cast<std::size_t>(k)] = mask[k] != 0.0;
  }
  m.data = observe(m.mask, read_field_csv(c.fields.data, g));
  m.noise_norm = c.noise_norm;
  InverseScenario s{"CUSTOM", g, NodalField(), {std::move(m)}, {}, 0};
  s.indenters.push_back(membrane_id::detail::indenter_footprint(s.measurements.front().h));
  if (!c.fields.a_true.empty()) s.a_dagger = read_field_csv(c.fields.a_true, g);
  return s;
}

inline InverseScenario inversion_scenario(const RunConfig& c) {
  if (c.scenario == "CUSTOM") return custom_inversion(c);
  const auto o = synthesis(c, c.grid_n);
  if (c.scenario == "EXP1") return make_experiment1(c.grid_n, c.radius, c.noise_level, c.seed, o);
  if (c.scenario == "EXP2") return make_experiment2(c.grid_n, c.region, c.noise_level, c.seed, c.exp2_truth, o);
  if (c.scenario == "EXP3") return make_experiment3(c.grid_n, c.noise_level, c.seed, o);
  throw config_error("invert needs scenario EXP1, EXP2, EXP3 or CUSTOM, got '" + c.scenario + "'");
}

inline NodalField union_field(const Grid& g, const std::vector<NodeMask>& masks) {
  NodalField out = constant_field(g, 0.0);
  for (const auto& m : masks) out += mask_to_field(m);
  return out.cwiseMin(1.0);
}

}  // namespace detail

/// Forward solve. Writes u, lambda, contact, trace.csv and results.csv.
inline int cmd_forward(RunConfig c, std::ostream& log = std::cerr) {
  const ObstacleProblem p = detail::forward_problem(c);
  OutputDir out(c);
  out.echo(c);
  c.solver.record_trace = true;
  const auto sol = solve(p, c.solver);
  out.field("u", p.grid, sol.u);
  out.field("lambda", p.grid, sol.lambda);
  out.field("contact", p.grid, mask_to_field(sol.contact_mask));
  {
    auto trace = out.open("trace.csv");
    write_forward_trace(trace, sol);
  }
  {
    auto results = out.open("results.csv");
    results << "scenario,n,method,iterations,converged,kkt_residual,contact_nodes,cpu_seconds\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%d,%s,%d,%d,%.10g,%d,%.6f\n", c.scenario.c_str(), p.grid.n(),
                  to_string(c.solver.method), sol.iterations, sol.converged ? 1 : 0,
                  sol.kkt_history.empty() ? 0.0 : sol.kkt_history.back(), count(sol.contact_mask), sol.wall_time);
    results << buf;
  }
  log << to_string(c.solver.method) << ": " << sol.iterations << " iterations, "
      << (sol.converged ? "converged" : "iteration budget exhausted") << '\n';
  return sol.converged ? kExitOk : kExitBudget;
}

/// Single inversion run with cfg.inversion.method.
inline int cmd_invert(RunConfig c, std::ostream& log = std::cerr) {
  InverseScenario s = detail::inversion_scenario(c);
  if (c.inversion.stop_at_discrepancy) {
    for (const auto& m : s.measurements) {
      if (!(m.noise_norm > 0.0)) {
        throw detail::config_error("discrepancy stopping requested but the noise norm is unknown (problem.noise_norm)");
      }
    }
  }
  OutputDir out(c);
  out.echo(c);
  const bool have_truth = s.a_dagger.size() == s.grid.num_nodes();
  NodalField a0;
  if (!c.fields.a0.empty()) {
    a0 = read_field_csv(c.fields.a0, s.grid);
  } else {
    a0 = constant_field(s.grid, 1.0);
    if (have_truth) {
      for (int k : s.grid.boundary_nodes()) a0[k] = s.a_dagger[k];
    }
  }
  InversionConfig cfg = c.inversion;
  cfg.boundary_values = a0;
  cfg.snapshot_every = c.snapshot_every;
  const auto run =
      reconstruct(s.grid, a0, s.measurements, cfg, have_truth ? std::optional<NodalField>(s.a_dagger) : std::nullopt);

  {
    auto trace = out.open("trace.csv");
    write_inversion_trace(trace, run);
  }
  {
    auto results = out.open("results.csv");
    write_inversion_rows(results, {summarize(s.label, run, cfg.method)});
  }
  out.field("a_final", s.grid, run.final_iterate);
  if (have_truth) {
    out.field("a_true", s.grid, s.a_dagger);
    out.field("a_opt", s.grid, run.optimal_iterate);
  }
  if (run.k_disc) out.field("a_disc", s.grid, run.discrepancy_iterate);
  for (const auto& [k, a] : run.snapshots) out.field("a_" + std::to_string(k), s.grid, a);

  log << to_string(cfg.method) << ": stopped after " << run.iterations() << " iterations (" << to_string(run.reason)
      << ")" << (run.message.empty() ? "" : ": " + run.message) << '\n';
  switch (run.reason) {
    case StopReason::Discrepancy: return kExitOk;
    case StopReason::MaxIterations: return kExitBudget;
    default: return kExitError;
  }
}

/// Batch experiments: TABLE1, EXP1 (radii x noise levels), EXP2 (regions), EXP3.
inline int cmd_experiment(RunConfig c, std::ostream& log = std::cerr) {
  OutputDir out(c);
  if (c.scenario == "TABLE1") {
    out.echo(c);
    Table1Settings settings;
    settings.max_iter = c.solver.max_iter;
    settings.kkt_tol = c.solver.kkt_tol;
    settings.with_reference = c.table1_reference;
    settings.paper_scale = c.paper_scale;
    std::vector<ForwardRow> rows;
    for (ScenarioName tc : c.testcases) {
      auto part = run_table1(c.n_list, tc, settings);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    auto results = out.open("results.csv");
    write_forward_rows(results, rows);
    log << rows.size() << " rows\n";
    return kExitOk;
  }

  std::vector<InverseScenario> scenarios;
  if (c.scenario == "EXP1") {
    for (double r : c.radii) {
      for (double d : c.noise_levels) {
        scenarios.push_back(make_experiment1(c.grid_n, r, d, c.seed, detail::synthesis(c, c.grid_n)));
      }
    }
  } else if (c.scenario == "EXP2") {
    for (auto region : c.regions) {
      scenarios.push_back(
          make_experiment2(c.grid_n, region, c.noise_level, c.seed, c.exp2_truth, detail::synthesis(c, c.grid_n)));
    }
  } else if (c.scenario == "EXP3") {
    scenarios.push_back(make_experiment3(c.grid_n, c.noise_level, c.seed, detail::synthesis(c, c.grid_n)));
  } else {
    throw detail::config_error("experiment needs scenario TABLE1, EXP1, EXP2 or EXP3, got '" + c.scenario + "'");
  }
  out.echo(c);

  std::vector<InversionRow> rows;
  InversionConfig cfg = c.inversion;
  cfg.snapshot_every = 0;
  const bool single = scenarios.size() == 1;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& s = scenarios[i];
    const std::string prefix = single ? "" : "s" + std::to_string(i) + "_";
    cfg.boundary_values.reset();
    const auto runs = run_inversion_experiment(s, cfg);
    out.field(prefix + "a_true", s.grid, s.a_dagger);
    out.field(prefix + "indenters", s.grid, detail::union_field(s.grid, s.indenters));
    for (const auto& r : runs) {
      rows.push_back(r.row);
      const std::string name = prefix + detail::lower(to_string(r.method));
      auto trace = out.open("trace_" + name + ".csv");
      write_inversion_trace(trace, r.run);
      if (r.run.k_opt) out.field(name + "_opt", s.grid, r.run.optimal_iterate);
      if (r.method == InversionMethod::NESTEROV && r.run.k_disc) {
        out.field(name + "_disc", s.grid, r.run.discrepancy_iterate);
      }
      log << s.label << " " << to_string(r.method) << ": k_opt "
          << (r.run.k_opt ? std::to_string(*r.run.k_opt) : "-") << ", k_disc "
          << (r.run.k_disc ? std::to_string(*r.run.k_disc) : "-") << '\n';
    }
  }
  auto results = out.open("results.csv");
  write_inversion_rows(results, rows);
  return kExitOk;
}

/// Runs `command` with exit-code mapping; every error becomes exit 1.
inline int run_command(const std::string& command, const RunConfig& c, std::ostream& log = std::cerr) {
  try {
    if (command == "forward") return cmd_forward(c, log);
    if (command == "invert") return cmd_invert(c, log);
    if (command == "experiment") return cmd_experiment(c, log);
    log << "error: unknown command '" << command << "'\n";
  } catch (const Error& e) {
    log << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
  }
  return kExitError;
}

}  // namespace membrane_id::cli
