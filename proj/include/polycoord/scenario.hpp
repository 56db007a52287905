#pragma once

#include <string>
#include <vector>

#include "polycoord/coordinator.hpp"

namespace polycoord {

// Complete, serializable description of one simulation: the robots with
// their planner parameters, static obstacles, coordination settings, run
// length and mode.
struct ScenarioConfig {
  int schema_version = 1;
  std::string name;
  RunMode mode = RunMode::Distributed;
  int steps = 200;
  unsigned rng_seed = 0;  // consumed only by randomized test harnesses
  std::vector<RobotSpec> robots;
  std::vector<ObstacleSpec> obstacles;
  CoordinationSettings settings;
};

// Platoon formation on a three-lane road: n vehicles (2..4) merge into the
// first lane and hold a common cruise speed.
ScenarioConfig builtin_platoon(int n_vehicles);

// Six differently shaped unicycle robots on a circle swap positions with the
// robot on the opposite end of their diameter.
ScenarioConfig builtin_hetero_swap();

// Two-car overtake on adjacent lanes: the faster car merges into the slower
// car's lane; distance-prediction tracing is enabled.
ScenarioConfig builtin_overtake();

// Case-sensitive builtin lookup: platoon2, platoon3, platoon4, hetero,
// overtake.  Throws std::invalid_argument for unknown names.
ScenarioConfig builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();

// JSON text form.  parse_scenario validates the document and reports every
// violation with the path of the offending field; serialize_scenario is
// deterministic, and parse(serialize(c)) == c for any valid config.
std::string serialize_scenario(const ScenarioConfig& config);
ScenarioConfig parse_scenario(const std::string& text);

ScenarioConfig load_scenario(const std::string& path);
void save_scenario(const ScenarioConfig& config, const std::string& path);

bool operator==(const ScenarioConfig& a, const ScenarioConfig& b);

// Runs the configured simulation end to end.
SimulationLog run_scenario(const ScenarioConfig& config);

}  // namespace polycoord
