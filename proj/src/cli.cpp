#include "polycoord/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polycoord/exports.hpp"
#include "polycoord/scenario.hpp"

namespace polycoord {

namespace {

void print_timing_summary(const SimulationLog& log) {
  const int R = static_cast<int>(log.robot_ids.size());
  std::printf("timing summary over %d steps\n", log.completed_steps);
  if (log.mode == RunMode::Centralized) {
    double sum = 0.0, max = 0.0;
    for (double v : log.central_seconds) {
      sum += v;
      max = std::max(max, v);
    }
    const int n = static_cast<int>(log.central_seconds.size());
    std::printf("  central joint solve  avg %.6f s  max %.6f s\n", n ? sum / n : 0.0, max);
    return;
  }
  double total_avg = 0.0;
  for (int r = 0; r < R; ++r) {
    double nmpc_sum = 0.0, nmpc_max = 0.0, ca_sum = 0.0, ca_max = 0.0;
    for (int t = 0; t < log.completed_steps; ++t) {
      nmpc_sum += log.steps[t][r].nmpc_seconds;
      nmpc_max = std::max(nmpc_max, log.steps[t][r].nmpc_seconds);
      ca_sum += log.steps[t][r].ca_seconds;
      ca_max = std::max(ca_max, log.steps[t][r].ca_seconds);
    }
    const double n = std::max(1, log.completed_steps);
    std::printf("  robot %d  nmpc avg %.6f s max %.6f s | ca avg %.6f s max %.6f s\n",
                log.robot_ids[r], nmpc_sum / n, nmpc_max, ca_sum / n, ca_max);
    total_avg += (nmpc_sum + ca_sum) / n;
  }
  if (R > 0) std::printf("  per-robot total avg %.6f s\n", total_avg / R);
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"distributed polytope-safe multi-robot trajectory coordination"};
  app.get_formatter()->column_width(32);

  std::string scenario;
  app.add_option("--scenario", scenario, "builtin scenario name or path to a config file")
      ->required();
  std::string mode;
  app.add_option("--mode", mode, "override run mode")
      ->check(CLI::IsMember({"distributed", "centralized"}));
  int steps = -1;
  app.add_option("--steps", steps, "override number of simulation steps")
      ->check(CLI::NonNegativeNumber);
  std::string out_dir;
  app.add_option("--out", out_dir, "directory for CSV exports");
  int delay = -1;
  app.add_option("--delay", delay, "override communication delay in rounds")
      ->check(CLI::NonNegativeNumber);
  bool trace = false;
  app.add_flag("--trace-error-bound", trace, "record the distance-prediction error trace");
  bool timing = false;
  app.add_flag("--timing", timing, "print a timing summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  SimulationLog log;
  try {
    ScenarioConfig config = std::filesystem::exists(scenario) ? load_scenario(scenario)
                                                              : builtin_scenario(scenario);
    if (!mode.empty())
      config.mode = mode == "centralized" ? RunMode::Centralized : RunMode::Distributed;
    if (steps >= 0) config.steps = steps;
    if (delay >= 0) config.settings.bus_delay = delay;
    if (trace) config.settings.trace_error_bound = true;

    std::printf("scenario %s | mode %s | %d robots | %d obstacles | %d steps\n",
                config.name.c_str(),
                config.mode == RunMode::Centralized ? "centralized" : "distributed",
                static_cast<int>(config.robots.size()),
                static_cast<int>(config.obstacles.size()), config.steps);
    log = run_scenario(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  std::printf("completed %d steps%s\n", log.completed_steps,
              log.aborted ? " (aborted)" : "");
  if (timing) print_timing_summary(log);

  if (!out_dir.empty()) {
    try {
      for (const std::string& name : export_outputs(log, out_dir))
        std::printf("wrote %s\n", (std::filesystem::path(out_dir) / name).string().c_str());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
  }

  if (log.aborted) {
    std::cerr << "aborted: " << log.abort_reason << '\n';
    return 3;
  }
  return 0;
}

}  // namespace polycoord
