#include <iostream>

#include <CLI11.hpp>

#include "fedobd_cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace fedobd::cli;

  CLI::App app{"FedOBD federated-learning simulator"};
  app.require_subcommand(1);

  RunOptions run_opts;
  std::uint64_t seed = 0;
  std::string out_dir;
  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config,-c", run_opts.config_path, "Experiment config (YAML)")->required();
    cmd->add_option("--seed", seed, "Root seed, overrides the config");
    cmd->add_option("--out,-o", out_dir, "Output directory, overrides the config");
    cmd->add_option("--set", run_opts.overrides, "Override a config key: --set key=value (repeatable)");
  };

  auto* run = app.add_subcommand("run", "Run one experiment and write its report");
  add_run_flags(run);
  auto* compare = app.add_subcommand("compare", "Run every variant of a config and tabulate overhead");
  add_run_flags(compare);

  std::string report_path;
  std::size_t top_k = 5;
  auto* inspect = app.add_subcommand("inspect", "Summarize a report.json and its contribution log");
  inspect->add_option("report", report_path, "Path to report.json")->required();
  inspect->add_option("--top,-k", top_k, "Number of blocks in the contribution view");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  auto finalize = [&](CLI::App* cmd) {
    if (cmd->count("--seed")) run_opts.seed = seed;
    if (cmd->count("--out")) run_opts.out_dir = out_dir;
  };

  if (*run) {
    finalize(run);
    return cmd_run(run_opts, std::cout, std::cerr);
  }
  if (*compare) {
    finalize(compare);
    return cmd_compare(run_opts, std::cout, std::cerr);
  }
  return cmd_inspect(report_path, top_k, std::cout, std::cerr);
}
