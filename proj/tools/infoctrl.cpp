#include "infoctrl/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace infoctrl;
  CLI::App app{"Information-constrained control solvers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kVersion);

  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string grid;
  std::optional<double> tol;

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"drf", "distortion-rate curve of a distortion document"},
      {"icbe", "average-cost frontier over a grid of s (log-spaced)"},
      {"lqg", "closed-form LQG design over a rate grid"},
      {"discounted", "quasistationary policy under a per-stage budget"},
      {"simulate", "Monte Carlo validation of an mdp or lqg document"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "model document (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seed, "simulation seed");
    sub->add_option("--grid", grid, "start:stop:n");
    sub->add_option("--tol", tol, "solver tolerance override");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    infoctrl::io::json err = {{"error", "usage"}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return 2;
  }

  cli::RunConfig cfg;
  cfg.command = *cli::parse_command(app.get_subcommands().front()->get_name());
  cfg.input_path = config;
  cfg.output_dir = out_dir;
  cfg.seed = seed;
  cfg.tol = tol;
  if (!grid.empty()) {
    try {
      cfg.grid = cli::parse_grid(grid);
    } catch (const io::SchemaError& e) {
      infoctrl::io::json err = {{"error", "schema"}, {"message", e.what()}, {"fields", e.fields}};
      std::cerr << err.dump() << '\n';
      return 2;
    }
  }
  return cli::run(cfg, std::cerr);
}
