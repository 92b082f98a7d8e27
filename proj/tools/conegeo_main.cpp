// conegeo: geodesics on chart metrics with isolated singular points.
//
//   conegeo run <config.json> --out <dir> [--seed-filter k] [--quiet]
//   conegeo validate <config.json> [--quiet]
//
// CONE_GEO_THREADS caps the number of concurrently solved seeds.

#include "conegeo/cli.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"discrete geodesics on conical chart metrics"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  bool quiet = false;
  int seed_filter = std::numeric_limits<int>::min();

  auto* run_cmd = app.add_subcommand("run", "solve the configured scenario");
  run_cmd->add_option("config", config_path, "config JSON")->required();
  run_cmd->add_option("--out", out_dir, "output directory");
  run_cmd->add_option("--seed-filter", seed_filter, "solve only this winding seed");
  run_cmd->add_flag("--quiet", quiet, "suppress progress output");

  auto* validate_cmd = app.add_subcommand("validate", "check a config without solving");
  validate_cmd->add_option("config", config_path, "config JSON")->required();
  validate_cmd->add_flag("--quiet", quiet, "suppress output");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("validate")) return conegeo::cli::validate(config_path, quiet);

  std::optional<int> filter;
  if (seed_filter != std::numeric_limits<int>::min()) filter = seed_filter;
  return conegeo::cli::run(config_path, out_dir, filter, quiet).exit_code;
}
