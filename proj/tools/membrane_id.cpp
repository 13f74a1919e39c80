#include <iostream>
#include <string>
#include <utility>

#include <CLI11.hpp>

#include "membrane_id/cli.hpp"

int main(int argc, char** argv) {
  namespace mc = membrane_id::cli;
  CLI::App app{"Obstacle-constrained membrane: forward solves and coefficient identification"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  bool paper_scale = false;
  const std::pair<const char*, const char*> commands[] = {
      {"forward", "solve one obstacle problem"},
      {"invert", "reconstruct the coefficient from contact data"},
      {"experiment", "run a table or experiment sweep"},
  };
  for (const auto& [name, description] : commands) {
    auto* sub = app.add_subcommand(name, description);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "noise seed (overrides seed)")->check(CLI::NonNegativeNumber);
    sub->add_flag("--paper-scale", paper_scale, "reference grid with >= 500 nodes per axis");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? mc::kExitOk : mc::kExitError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  mc::RunConfig config;
  try {
    config = mc::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mc::kExitError;
  }
  if (!out_dir.empty()) config.out_dir = out_dir;
  if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
  if (paper_scale) config.paper_scale = true;
  return mc::run_command(command, config);
}
