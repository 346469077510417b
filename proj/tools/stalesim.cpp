#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "stalesim/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"stalesim: data-parallel training under controlled staleness"};
  app.require_subcommand(1);

  std::string config;
  std::string outdir;
  int jobs = 1;

  auto* run = app.add_subcommand("run", "Run one simulation per configured seed");
  run->add_option("config", config, "Experiment config file")->required();

  auto* sweep = app.add_subcommand("sweep", "Run the Cartesian product of the sweep axes");
  sweep->add_option("config", config, "Experiment config file")->required();
  sweep->add_option("--jobs,-j", jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify-theorem", "Check the staleness convergence bound on a probed run");
  verify->add_option("config", config, "Experiment config file")->required();

  auto* probe = app.add_subcommand("probe", "Record gradient coherence during training");
  probe->add_option("config", config, "Experiment config file")->required();

  auto* report = app.add_subcommand("report", "Aggregate summary.csv in an output directory");
  report->add_option("outdir", outdir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : stalesim::kExitConfig;
  }

  try {
    if (*run) return stalesim::cmd_run(config, std::cout, std::cerr);
    if (*sweep) return stalesim::cmd_sweep(config, jobs, std::cout, std::cerr);
    if (*verify) return stalesim::cmd_verify_theorem(config, std::cout, std::cerr);
    if (*probe) return stalesim::cmd_probe(config, std::cout, std::cerr);
    if (*report) return stalesim::cmd_report(outdir, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return stalesim::kExitConfig;
}
