#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "uavmec/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Energy-minimal UAV trajectory and offloading planner"};
  app.require_subcommand(1);

  uavmec::RunConfig cfg;
  std::string schemes = "all";
  std::string sweep;
  double xi = 0.0;
  double xi1 = 0.0;

  CLI::App* run = app.add_subcommand("run", "Plan one scenario for the chosen schemes");
  run->add_option("--scenario", cfg.scenario_path, "Scenario config file")->required();
  run->add_option("--schemes", schemes, "Comma list of proposed, straight-line, semi-circle, or all")
      ->capture_default_str();
  run->add_option("--sweep-T", sweep, "Comma list of mission durations (s)");
  run->add_option("--out", cfg.output_dir, "Output directory")->capture_default_str();
  CLI::Option* xi_opt = run->add_option("--xi", xi, "Trajectory tolerance override");
  CLI::Option* xi1_opt = run->add_option("--xi1", xi1, "Outer energy tolerance override");
  run->add_option("--seed", cfg.seed, "Seed recorded with the results");
  run->add_option("--threads", cfg.threads, "Worker threads (0 = all cores)");
  run->add_flag("--verbose", cfg.verbose, "Print outer-iteration traces");

  std::string show_path;
  CLI::App* show = app.add_subcommand("show", "Print a scenario in normalised SI form");
  show->add_option("scenario", show_path, "Scenario config file")->required();

  CLI11_PARSE(app, argc, argv);

  if (*show) {
    try {
      std::cout << uavmec::write_scenario(uavmec::load_scenario(show_path));
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
  }

  try {
    cfg.schemes = uavmec::parse_schemes(schemes);
    cfg.T_sweep = uavmec::parse_T_list(sweep);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  if (*xi_opt) cfg.xi = xi;
  if (*xi1_opt) cfg.xi1 = xi1;
  return uavmec::run(cfg, std::cout, std::cerr);
}
