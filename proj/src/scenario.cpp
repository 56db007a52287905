#include "polycoord/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace polycoord {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("scenario: " + path + ": " + what);
}

const json& require_field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "missing required field");
  return *it;
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

Eigen::VectorXd as_vector(const json& j, const std::string& path, int expected = -1) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  Eigen::VectorXd v(j.size());
  for (std::size_t k = 0; k < j.size(); ++k)
    v(k) = as_number(j[k], path + "[" + std::to_string(k) + "]");
  if (expected >= 0 && v.size() != expected)
    fail(path, "expected " + std::to_string(expected) + " entries, got " +
                   std::to_string(v.size()));
  return v;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

json polytope_to_json(const Polytope& P) {
  json A = json::array();
  for (int r = 0; r < P.num_halfspaces(); ++r) {
    json row = json::array();
    for (int c = 0; c < P.dim(); ++c) row.push_back(P.A(r, c));
    A.push_back(std::move(row));
  }
  return json{{"A", std::move(A)}, {"b", vector_to_json(P.b)}};
}

Polytope polytope_from_json(const json& j, const std::string& path) {
  const json& A = require_field(j, "A", path);
  if (!A.is_array() || A.empty()) fail(path + ".A", "expected a non-empty array of rows");
  Polytope P;
  P.A = Eigen::MatrixXd(A.size(), 2);
  for (std::size_t r = 0; r < A.size(); ++r) {
    const Eigen::VectorXd row =
        as_vector(A[r], path + ".A[" + std::to_string(r) + "]", 2);
    P.A.row(r) = row.transpose();
  }
  P.b = as_vector(require_field(j, "b", path), path + ".b",
                  static_cast<int>(A.size()));
  return P;
}

json robot_to_json(const RobotSpec& r) {
  json j;
  j["id"] = r.id;
  j["model"] = r.model.kind == ModelKind::Bicycle ? "bicycle" : "unicycle";
  j["params"] = json{{"lf", r.model.params.lf},
                     {"lr", r.model.params.lr},
                     {"h", r.model.params.h},
                     {"w", r.model.params.w}};
  j["initial_state"] = vector_to_json(r.initial_state);
  j["reference"] = vector_to_json(r.z_ref);
  j["base_polytope"] = polytope_to_json(r.base_polytope);
  j["weight_state"] = vector_to_json(r.weight_state);
  j["weight_input"] = vector_to_json(r.weight_input);
  j["weight_rate"] = vector_to_json(r.weight_rate);
  j["u_min"] = vector_to_json(r.u_min);
  j["u_max"] = vector_to_json(r.u_max);
  j["du_rate"] = vector_to_json(r.du_rate);
  j["reach_per_step"] = vector_to_json(r.reach_per_step);
  return j;
}

RobotSpec robot_from_json(const json& j, const std::string& path) {
  RobotSpec r;
  r.id = as_int(require_field(j, "id", path), path + ".id");
  const std::string kind = as_string(require_field(j, "model", path), path + ".model");
  if (kind == "bicycle") {
    r.model.kind = ModelKind::Bicycle;
  } else if (kind == "unicycle") {
    r.model.kind = ModelKind::Unicycle;
  } else {
    fail(path + ".model", "expected \"bicycle\" or \"unicycle\", got \"" + kind + "\"");
  }
  if (j.contains("params")) {
    const json& p = j["params"];
    const std::string ppath = path + ".params";
    r.model.params.lf = as_number(require_field(p, "lf", ppath), ppath + ".lf");
    r.model.params.lr = as_number(require_field(p, "lr", ppath), ppath + ".lr");
    r.model.params.h = as_number(require_field(p, "h", ppath), ppath + ".h");
    r.model.params.w = as_number(require_field(p, "w", ppath), ppath + ".w");
  }
  const int nx = r.model.nx(), nu = r.model.nu();
  r.initial_state =
      as_vector(require_field(j, "initial_state", path), path + ".initial_state", nx);
  r.z_ref = as_vector(require_field(j, "reference", path), path + ".reference", nx);
  r.base_polytope =
      polytope_from_json(require_field(j, "base_polytope", path), path + ".base_polytope");
  r.weight_state =
      as_vector(require_field(j, "weight_state", path), path + ".weight_state", nx);
  r.weight_input =
      as_vector(require_field(j, "weight_input", path), path + ".weight_input", nu);
  r.weight_rate = as_vector(require_field(j, "weight_rate", path), path + ".weight_rate", nu);
  r.u_min = as_vector(require_field(j, "u_min", path), path + ".u_min", nu);
  r.u_max = as_vector(require_field(j, "u_max", path), path + ".u_max", nu);
  r.du_rate = as_vector(require_field(j, "du_rate", path), path + ".du_rate", nu);
  r.reach_per_step =
      as_vector(require_field(j, "reach_per_step", path), path + ".reach_per_step", 3);
  return r;
}

// ---- builtin shape + robot builders ---------------------------------------

Polytope regular_polygon(int sides, double circumradius, double first_vertex_angle) {
  std::vector<Eigen::Vector2d> verts;
  for (int k = 0; k < sides; ++k) {
    const double a = first_vertex_angle + 2.0 * std::numbers::pi * k / sides;
    verts.emplace_back(circumradius * std::cos(a), circumradius * std::sin(a));
  }
  return polytope_from_ccw_vertices(verts);
}

RobotSpec platoon_vehicle(int id, double x0, double y0) {
  RobotSpec r;
  r.id = id;
  r.model = Model{ModelKind::Bicycle, VehicleParams{1.125, 1.125, 4.5, 1.8}};
  r.base_polytope = vehicle_polytope(Pose2{}, 4.5, 1.8);
  r.initial_state = Eigen::Vector4d(x0, y0, 0.0, 15.0);
  r.z_ref = Eigen::Vector4d(0.0, 1.85, 0.0, 15.0);
  r.weight_state = Eigen::Vector4d(0.0, 0.5, 50.0, 0.5);
  r.weight_input = Eigen::Vector2d(0.2, 2.0);
  r.weight_rate = Eigen::Vector2d(1.0, 10.0);
  r.u_min = Eigen::Vector2d(-4.0, -0.3);
  r.u_max = Eigen::Vector2d(4.0, 0.3);
  r.du_rate = Eigen::Vector2d(1.0, 0.2);
  r.reach_per_step = Eigen::Vector3d(1.0, 1.0, 0.14);
  return r;
}

}  // namespace

ScenarioConfig builtin_platoon(int n_vehicles) {
  if (n_vehicles < 2 || n_vehicles > 4)
    throw std::invalid_argument("builtin_platoon: supported sizes are 2, 3 and 4");
  // The target-lane gap (vehicle 2 to vehicle 0) fits the merging vehicle 1
  // with about 2.5 m of bumper slack on each side: three 4.5 m bodies plus
  // two 0.5 m safety gaps need 14.5 m of the 15 m span.  A tighter span
  // leaves less slack than one round of plan drift and the merge stalls in
  // transient infeasibility.
  const double x0[4] = {13.5, 5.5, -1.5, 22.0};
  const double y0[4] = {1.85, 5.55, 1.85, 9.25};
  ScenarioConfig c;
  c.name = "platoon" + std::to_string(n_vehicles);
  c.mode = RunMode::Distributed;
  c.steps = 200;
  for (int i = 0; i < n_vehicles; ++i) c.robots.push_back(platoon_vehicle(i, x0[i], y0[i]));
  c.settings.horizon = 15;
  c.settings.dt = 0.05;
  c.settings.d_min = 0.5;
  c.settings.safety_margin = 0.02;
  return c;
}

ScenarioConfig builtin_hetero_swap() {
  constexpr double radius = 5.0;  // circle radius; the source experiment leaves it open
  const std::vector<Polytope> shapes = {
      vehicle_polytope(Pose2{}, 1.0, 1.0),                      // square
      regular_polygon(6, 0.6, 0.0),                             // hexagon
      regular_polygon(6, 0.7, std::numbers::pi / 6.0),          // larger rotated hexagon
      polytope_from_ccw_vertices({{0.7, 0.0},
                                  {0.2, 0.55},
                                  {-0.5, 0.35},
                                  {-0.55, -0.25},
                                  {0.15, -0.6}}),               // irregular pentagon
      polytope_from_ccw_vertices({{0.65, 0.0}, {-0.4, 0.5}, {-0.4, -0.5}}),  // triangle
      regular_polygon(5, 0.6, std::numbers::pi / 2.0),          // pentagon
  };

  ScenarioConfig c;
  c.name = "hetero";
  c.mode = RunMode::Distributed;
  c.steps = 400;
  for (int k = 0; k < 6; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / 6.0;
    RobotSpec r;
    r.id = k;
    r.model = Model{ModelKind::Unicycle, VehicleParams{}};
    r.base_polytope = shapes[k];
    // Start each robot with a small common counterclockwise heading bias.
    // The swap geometry is mirror-symmetric about every diameter, and a
    // deterministic planner started exactly on the symmetry axis never
    // produces a lateral move; the bias acts as a shared pass-on-one-side
    // convention that tips every head-on encounter the same way.
    const double heading = wrap_angle(theta + std::numbers::pi + 0.15);
    r.initial_state =
        Eigen::Vector3d(radius * std::cos(theta), radius * std::sin(theta), heading);
    // Swap with the robot on the other end of the diameter.
    r.z_ref = Eigen::Vector3d(-radius * std::cos(theta), -radius * std::sin(theta),
                              wrap_angle(theta + std::numbers::pi));
    // Distinct position weights form a priority ladder.  All six robots
    // reach the center simultaneously (equal distance, equal speed cap), and
    // with identical weights no robot has a reason to yield first, which
    // ends in a standstill ring.  Graded urgency makes the crossing order
    // unambiguous: higher-weight robots push through, lower-weight robots
    // give way and follow.
    const double urgency = 1.0 + 0.4 * (5 - k);
    r.weight_state = Eigen::Vector3d(urgency, urgency, 0.1);
    r.weight_input = Eigen::Vector2d(0.1, 0.05);
    r.weight_rate = Eigen::Vector2d(0.02, 0.02);
    r.u_min = Eigen::Vector2d(-4.0, -2.0);
    r.u_max = Eigen::Vector2d(4.0, 2.0);
    r.du_rate = Eigen::Vector2d(10.0, 10.0);  // 0.5 per 0.05 s step
    r.reach_per_step = Eigen::Vector3d(0.2, 0.2, 0.1);
    c.robots.push_back(std::move(r));
  }
  // A longer horizon than the road scenarios: the center crossing needs
  // enough lookahead to negotiate curved detours instead of stopping.
  c.settings.horizon = 25;
  c.settings.dt = 0.05;
  c.settings.d_min = 0.1;
  // The margin absorbs the one-round staleness of neighbor predictions: a
  // body's halfspace offsets move v * dt between publications, which is
  // 0.2 m at the 4 m/s speed cap, so planning to d_min alone would let a
  // fresh plan and a stale one disagree right past the safety distance.
  c.settings.safety_margin = 0.25;
  return c;
}

ScenarioConfig builtin_overtake() {
  ScenarioConfig c;
  c.name = "overtake";
  c.mode = RunMode::Distributed;
  c.steps = 200;

  // The overtaking car has already pulled past in the adjacent lane and now
  // merges in front; x is not penalized, so the merge is driven purely by the
  // lane reference while the separation constraint shapes the cut-in.
  RobotSpec fast = platoon_vehicle(0, 10.0, 5.55);
  fast.initial_state(3) = 15.0;
  fast.z_ref = Eigen::Vector4d(0.0, 1.85, 0.0, 15.0);  // merge into the slow car's lane

  RobotSpec slow = platoon_vehicle(1, 0.0, 1.85);
  slow.initial_state(3) = 13.0;
  slow.z_ref = Eigen::Vector4d(0.0, 1.85, 0.0, 13.0);

  c.robots = {fast, slow};
  c.settings.horizon = 15;
  c.settings.dt = 0.05;
  c.settings.d_min = 0.5;
  c.settings.safety_margin = 0.02;
  c.settings.trace_error_bound = true;
  return c;
}

ScenarioConfig builtin_scenario(const std::string& name) {
  if (name == "platoon2") return builtin_platoon(2);
  if (name == "platoon3") return builtin_platoon(3);
  if (name == "platoon4") return builtin_platoon(4);
  if (name == "hetero") return builtin_hetero_swap();
  if (name == "overtake") return builtin_overtake();
  throw std::invalid_argument("unknown builtin scenario \"" + name + "\"");
}

std::vector<std::string> builtin_scenario_names() {
  return {"platoon2", "platoon3", "platoon4", "hetero", "overtake"};
}

std::string serialize_scenario(const ScenarioConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["name"] = c.name;
  j["mode"] = c.mode == RunMode::Distributed ? "distributed" : "centralized";
  j["steps"] = c.steps;
  j["rng_seed"] = c.rng_seed;
  j["dt"] = c.settings.dt;
  j["horizon"] = c.settings.horizon;
  j["d_min"] = c.settings.d_min;
  j["safety_margin"] = c.settings.safety_margin;
  if (std::isinf(c.settings.communication_radius)) {
    j["communication_radius"] = nullptr;  // null means unlimited range
  } else {
    j["communication_radius"] = c.settings.communication_radius;
  }
  j["bus_delay"] = c.settings.bus_delay;
  j["separation_weight_init"] = c.settings.separation_weight_init;
  j["consistency_weight"] = c.settings.consistency_weight;
  j["trace_error_bound"] = c.settings.trace_error_bound;
  j["accepted_error"] = vector_to_json(c.settings.accepted_error);
  j["robots"] = json::array();
  for (const RobotSpec& r : c.robots) j["robots"].push_back(robot_to_json(r));
  j["obstacles"] = json::array();
  for (const ObstacleSpec& o : c.obstacles) j["obstacles"].push_back(polytope_to_json(o.shape));
  return j.dump(2) + "\n";
}

ScenarioConfig parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario: invalid JSON: ") + e.what());
  }
  const std::string root = "$";
  ScenarioConfig c;
  c.schema_version = as_int(require_field(j, "schema_version", root), "$.schema_version");
  if (c.schema_version != 1) fail("$.schema_version", "unsupported version");
  c.name = as_string(require_field(j, "name", root), "$.name");
  const std::string mode = as_string(require_field(j, "mode", root), "$.mode");
  if (mode == "distributed") {
    c.mode = RunMode::Distributed;
  } else if (mode == "centralized") {
    c.mode = RunMode::Centralized;
  } else {
    fail("$.mode", "expected \"distributed\" or \"centralized\", got \"" + mode + "\"");
  }
  c.steps = as_int(require_field(j, "steps", root), "$.steps");
  if (c.steps < 0) fail("$.steps", "must be >= 0");
  c.rng_seed = static_cast<unsigned>(as_int(require_field(j, "rng_seed", root), "$.rng_seed"));

  c.settings.dt = as_number(require_field(j, "dt", root), "$.dt");
  if (!(c.settings.dt > 0.0)) fail("$.dt", "must be positive");
  c.settings.horizon = as_int(require_field(j, "horizon", root), "$.horizon");
  if (c.settings.horizon < 1) fail("$.horizon", "must be >= 1");
  c.settings.d_min = as_number(require_field(j, "d_min", root), "$.d_min");
  if (c.settings.d_min < 0.0) fail("$.d_min", "must be >= 0");
  c.settings.safety_margin =
      as_number(require_field(j, "safety_margin", root), "$.safety_margin");
  const json& radius = require_field(j, "communication_radius", root);
  if (radius.is_null()) {
    c.settings.communication_radius = std::numeric_limits<double>::infinity();
  } else {
    c.settings.communication_radius = as_number(radius, "$.communication_radius");
    if (!(c.settings.communication_radius > 0.0))
      fail("$.communication_radius", "must be positive (or null for unlimited)");
  }
  c.settings.bus_delay = as_int(require_field(j, "bus_delay", root), "$.bus_delay");
  c.settings.separation_weight_init =
      as_number(require_field(j, "separation_weight_init", root), "$.separation_weight_init");
  c.settings.consistency_weight =
      as_number(require_field(j, "consistency_weight", root), "$.consistency_weight");
  c.settings.trace_error_bound =
      as_bool(require_field(j, "trace_error_bound", root), "$.trace_error_bound");
  c.settings.accepted_error =
      as_vector(require_field(j, "accepted_error", root), "$.accepted_error", 3);

  const json& robots = require_field(j, "robots", root);
  if (!robots.is_array() || robots.empty()) fail("$.robots", "expected a non-empty array");
  std::set<int> seen;
  for (std::size_t k = 0; k < robots.size(); ++k) {
    const std::string path = "$.robots[" + std::to_string(k) + "]";
    c.robots.push_back(robot_from_json(robots[k], path));
    if (!seen.insert(c.robots.back().id).second) fail(path + ".id", "duplicate robot id");
  }
  if (j.contains("obstacles")) {
    const json& obstacles = j["obstacles"];
    if (!obstacles.is_array()) fail("$.obstacles", "expected an array");
    for (std::size_t k = 0; k < obstacles.size(); ++k) {
      const std::string path = "$.obstacles[" + std::to_string(k) + "]";
      c.obstacles.push_back(ObstacleSpec{polytope_from_json(obstacles[k], path)});
      if (!is_bounded_2d(c.obstacles.back().shape)) fail(path, "polytope is unbounded");
    }
  }
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("scenario: cannot open \"" + path + "\"");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str());
}

void save_scenario(const ScenarioConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("scenario: cannot write \"" + path + "\"");
  out << serialize_scenario(config);
}

bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
  return serialize_scenario(a) == serialize_scenario(b);
}

SimulationLog run_scenario(const ScenarioConfig& config) {
  return run_coordination(config.robots, config.obstacles, config.settings, config.steps,
                          config.mode);
}

}  // namespace polycoord
