#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "membrane_id/cli.hpp"

using namespace membrane_id;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("membrane_id_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  std::string out(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(MEMBRANE_ID_EXE) + " " + args + " >" + out("stdout.txt") + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  static std::vector<std::string> lines(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
  }

  fs::path dir_;
};

double last_column_value(const std::string& line, int column) {
  std::stringstream ss(line);
  std::string cell;
  for (int i = 0; i <= column; ++i) std::getline(ss, cell, ',');
  return std::stod(cell);
}

}  // namespace

TEST(Config, DefaultsAndEcho) {
  const auto c = cli::parse_config_text("{}");
  EXPECT_EQ(c.grid_n, 30);
  EXPECT_EQ(c.solver.method, ForwardMethod::BARRIER);
  EXPECT_EQ(c.solver.kkt_tol, 1e-8);
  EXPECT_EQ(c.inversion.max_iter, 3000);
  EXPECT_EQ(c.inversion.discrepancy_factor, 1.01);
  EXPECT_EQ(c.inversion.clip_lo, 0.1);
  EXPECT_EQ(c.inversion.clip_hi, 10.0);
  const auto echoed = cli::to_json(c);
  for (const char* section : {"grid", "problem", "solver", "inversion", "output", "seed"}) {
    EXPECT_TRUE(echoed.contains(section)) << section;
  }
}

TEST(Config, EchoRoundTripIsStable) {
  const auto c = cli::parse_config_text(R"({"grid": {"n": 17}, "problem": {"scenario": "EXP2", "region": "LEFT",
      "regions": ["RIGHT"], "noise_levels": [0.05]}, "solver": {"method": "PG", "max_iter": 12},
      "inversion": {"method": "LANDWEBER", "clip_bounds": [0.2, 5], "preconditioner": "L2"}, "seed": 99})");
  EXPECT_EQ(c.grid_n, 17);
  EXPECT_EQ(c.region, ObservationRegion::LEFT);
  EXPECT_EQ(c.solver.method, ForwardMethod::PG);
  EXPECT_EQ(c.inversion.clip_lo, 0.2);
  EXPECT_EQ(c.seed, 99u);
  const std::string once = cli::to_json(c).dump();
  EXPECT_EQ(cli::to_json(cli::parse_config(cli::to_json(c))).dump(), once);
}

TEST(Config, UnknownKeysAreRejectedWithTheirPath) {
  auto message = [](const std::string& text) {
    try {
      cli::parse_config_text(text);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::Config);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message(R"({"grdi": {}})").find("unknown key 'grdi'"), std::string::npos);
  EXPECT_NE(message(R"({"solver": {"mehtod": "PG"}})").find("solver.mehtod"), std::string::npos);
  EXPECT_NE(message(R"({"problem": {"fields": {"hh": "x"}}})").find("problem.fields.hh"), std::string::npos);
  EXPECT_NE(message(R"({"solver": {"method": "CG"}})").find("BM|NPG|PG"), std::string::npos);
  EXPECT_NE(message(R"({"grid": {"n": "ten"}})").find("grid.n"), std::string::npos);
  EXPECT_NE(message(R"({"inversion": {"clip_bounds": [1]}})").find("clip_bounds"), std::string::npos);
}

TEST(Config, MalformedJsonReportsLine) {
  try {
    cli::parse_config_text("{\n  \"grid\": {\n    \"n\": 20,\n  }\n}", "bad.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
    EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
}

TEST_F(CliTest, ForwardBarrierConverges) {
  const auto cfg = write("f.json", R"({"grid": {"n": 20}, "problem": {"scenario": "TESTCASE1"}, "solver": {"method": "BM"}})");
  ASSERT_EQ(run("forward --config " + cfg + " --out " + out("o")), 0) << slurp(out("stdout.txt"));
  for (const char* f : {"config.echo.json", "trace.csv", "results.csv", "u.csv", "u.pgm", "lambda.csv", "contact.csv"}) {
    EXPECT_TRUE(fs::exists(out("o/") + f)) << f;
  }
  const auto trace = lines(out("o/trace.csv"));
  EXPECT_EQ(trace.front(), "iter,kkt_residual,energy,wall_time_s");
  EXPECT_LT(last_column_value(trace.back(), 1), 1e-8);
  EXPECT_EQ(cli::parse_config(cli::json::parse(slurp(out("o/config.echo.json")))).grid_n, 20);
}

TEST_F(CliTest, ForwardBudgetExhausted) {
  const auto cfg = write("f.json", R"({"grid": {"n": 12}, "solver": {"method": "PG", "max_iter": 1}})");
  EXPECT_EQ(run("forward --config " + cfg + " --out " + out("o")), 2);
}

TEST_F(CliTest, ForwardFieldRoundTripIsBitwise) {
  const auto cfg = write("f.json", R"({"grid": {"n": 14}, "problem": {"scenario": "TESTCASE2"}, "solver": {"method": "NPG"}})");
  ASSERT_EQ(run("forward --config " + cfg + " --out " + out("o")), 0);
  SolverConfig sc;
  sc.method = ForwardMethod::NPG;
  const auto sol = solve(make_testcase2(14), sc);
  const NodalField loaded = read_field_csv(out("o/u.csv"), Grid(14));
  EXPECT_EQ(loaded, sol.u);
}

TEST_F(CliTest, BadInputsExitWithOne) {
  EXPECT_EQ(run("forward --config " + write("bad.json", "{ \"grid\": ")), 1);
  EXPECT_NE(slurp(out("stdout.txt")).find("line"), std::string::npos);
  EXPECT_EQ(run("forward --config " + write("unknown.json", R"({"solver": {"speed": 1}})")), 1);
  EXPECT_EQ(run("forward --config " + out("missing.json")), 1);
  EXPECT_EQ(run("forward"), 1);  // --config is required
  EXPECT_EQ(run("forward --config " + write("exp.json", R"({"problem": {"scenario": "EXP1"}})")), 1);
}

TEST_F(CliTest, CustomInversionIngest) {
  const Grid g(12);
  const auto p = make_testcase1(12);
  write_field_csv(out("h.csv"), g, p.h);
  write_field_csv(out("data.csv"), g, constant_field(g, 0.5));
  write_field_csv(out("h_wrong.csv"), Grid(10), constant_field(Grid(10), -1.0));
  const std::string base = R"({"grid": {"n": 12}, "problem": {"scenario": "CUSTOM", "fields": {"h": ")";
  // Mismatched grid header.
  EXPECT_EQ(run("invert --config " + write("c1.json", base + out("h_wrong.csv") + R"(", "data": ")" +
                                                          out("data.csv") + R"("}}})")),
            1);
  EXPECT_NE(slurp(out("stdout.txt")).find("does not match"), std::string::npos);
  // Discrepancy stopping without a noise norm.
  EXPECT_EQ(run("invert --config " + write("c2.json", base + out("h.csv") + R"(", "data": ")" + out("data.csv") +
                                                          R"("}}})")),
            1);
  EXPECT_NE(slurp(out("stdout.txt")).find("noise norm"), std::string::npos);
  // Budget-limited run without ground truth.
  EXPECT_EQ(run("invert --config " + write("c3.json", base + out("h.csv") + R"(", "data": ")" + out("data.csv") +
                                                          R"("}}, "inversion": {"max_iter": 3, "stop_at_discrepancy": false}})") +
                " --out " + out("o")),
            2);
  EXPECT_EQ(lines(out("o/trace.csv")).size(), 5u);
  EXPECT_TRUE(fs::exists(out("o/a_final.pgm")));
}

TEST_F(CliTest, InvertReachesDiscrepancyAtHeavyNoise) {
  const auto cfg = write("i.json", R"({"grid": {"n": 20}, "problem": {"scenario": "EXP1", "radius": 0.5,
      "noise_level": 0.1}, "inversion": {"max_iter": 50}})");
  ASSERT_EQ(run("invert --config " + cfg + " --out " + out("o")), 0) << slurp(out("stdout.txt"));
  const auto results = lines(out("o/results.csv"));
  ASSERT_EQ(results.size(), 2u);
  const auto trace = lines(out("o/trace.csv"));
  EXPECT_LE(trace.size(), 4u);  // k_disc <= 2
  EXPECT_TRUE(fs::exists(out("o/a_disc.csv")));
  EXPECT_TRUE(fs::exists(out("o/a_opt.csv")));
}

TEST_F(CliTest, Table1RowCount) {
  const auto cfg = write("t.json", R"({"problem": {"scenario": "TABLE1", "n_list": [20, 40], "table1_reference": false}})");
  ASSERT_EQ(run("experiment --config " + cfg + " --out " + out("o")), 0) << slurp(out("stdout.txt"));
  EXPECT_EQ(lines(out("o/results.csv")).size(), 13u);
}

TEST_F(CliTest, Experiment1SweepRowCount) {
  const auto cfg = write("e.json", R"({"grid": {"n": 11}, "problem": {"scenario": "EXP1"},
      "inversion": {"max_iter": 2}, "output": {"images": false}})");
  ASSERT_EQ(run("experiment --config " + cfg + " --out " + out("o")), 0) << slurp(out("stdout.txt"));
  EXPECT_EQ(lines(out("o/results.csv")).size(), 19u);
  EXPECT_TRUE(fs::exists(out("o/s8_a_true.csv")));
  EXPECT_FALSE(fs::exists(out("o/s8_a_true.pgm")));
}

TEST_F(CliTest, Experiment3SnapshotsAndSeededRerun) {
  const auto cfg = write("e.json", R"({"grid": {"n": 10}, "problem": {"scenario": "EXP3", "noise_level": 0.01},
      "inversion": {"max_iter": 40}})");
  ASSERT_EQ(run("experiment --config " + cfg + " --out " + out("a") + " --seed 5"), 0) << slurp(out("stdout.txt"));
  EXPECT_EQ(lines(out("a/results.csv")).size(), 3u);
  int fields = 0;
  for (const auto& entry : fs::directory_iterator(out("a"))) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() == ".csv" && name.rfind("trace", 0) != 0 && name != "results.csv") ++fields;
  }
  EXPECT_EQ(fields, 5);
  ASSERT_EQ(cli::load_config(out("a/config.echo.json")).seed, 5u);
  ASSERT_EQ(run("experiment --config " + out("a/config.echo.json") + " --out " + out("b")), 0);
  auto strip_time = [](std::vector<std::string> rows) {
    for (auto& r : rows) r = r.substr(0, r.rfind(','));  // cpu_seconds is the last column
    return rows;
  };
  EXPECT_EQ(strip_time(lines(out("a/results.csv"))), strip_time(lines(out("b/results.csv"))));
  EXPECT_EQ(slurp(out("a/trace_nesterov.csv")), slurp(out("b/trace_nesterov.csv")));
}
