#pragma once

#include <Eigen/Dense>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "polycoord/ca_solver.hpp"
#include "polycoord/dynamics.hpp"
#include "polycoord/geometry.hpp"
#include "polycoord/nmpc.hpp"

namespace polycoord {

enum class RunMode { Distributed, Centralized };

// Everything one robot brings to the coordination loop: its dynamics, body
// shape, initial state, tracking target and local planner weights/limits.
struct RobotSpec {
  int id = 0;
  Model model;
  Polytope base_polytope;  // body shape at identity pose
  Eigen::VectorXd initial_state;
  Eigen::VectorXd z_ref;
  Eigen::VectorXd weight_state, weight_input, weight_rate;
  Eigen::VectorXd u_min, u_max, du_rate;
  // Largest per-round pose displacement (|dx|, |dy|, |dpsi|) the robot can
  // realize; feeds the worst-case (naive) error bound in the trace.
  Eigen::Vector3d reach_per_step = Eigen::Vector3d(1.0, 1.0, 0.15);
};

// Static world-frame polytopic obstacle.  Obstacles participate in collision
// constraints exactly like robots with constant predictions; in logs they
// carry ids above every robot id.
struct ObstacleSpec {
  Polytope shape;
};

struct CoordinationSettings {
  int horizon = 15;
  double dt = 0.05;
  double d_min = 0.5;
  double safety_margin = 0.0;  // internal tightening on top of d_min
  double communication_radius = std::numeric_limits<double>::infinity();
  int bus_delay = 0;  // rounds of staleness injected on every mailbox read
  double separation_weight_init = 1e3;
  double consistency_weight = 50.0;
  bool trace_error_bound = false;
  // Acceptable pose-error magnitudes (|e_x|, |e_y|, |e_psi|) that define the
  // normalization constant in the error trace.
  Eigen::Vector3d accepted_error = Eigen::Vector3d(1.0, 0.5, 0.2);
};

// Pairwise neighbor relation: j is a neighbor of i iff their reference points
// are within `radius`.  Always symmetric; never contains self-loops.
std::map<int, std::vector<int>> neighbor_sets(const std::vector<int>& ids,
                                              const std::vector<Eigen::Vector2d>& positions,
                                              double radius);
std::map<int, std::vector<int>> neighbor_sets(const std::vector<RobotSpec>& robots, double radius);

struct RobotStepLog {
  Eigen::VectorXd state;  // realized state at the start of the round
  Eigen::VectorXd input;  // input applied this round
  NmpcStatus nmpc_status = NmpcStatus::Converged;
  bool fallback = false;  // true when the shifted previous plan was applied
  double nmpc_seconds = 0.0;
  double ca_seconds = 0.0;  // pair solves owned by this robot this round
  double stage_cost_value = 0.0;
  double min_neighbor_distance = std::numeric_limits<double>::infinity();
};

struct PairStepLog {
  bool constrained = false;      // pair was within communication range
  double oracle_distance = 0.0;  // exact body distance at the start of the round
  double ca_seconds = 0.0;
  double dual_min_distance = 0.0;  // smallest certified distance over the horizon
};

// One pair evaluation of the distance-prediction disagreement and its bounds,
// taken at the first constrained horizon step of round t.
struct ErrorTraceRow {
  int t = 0;
  int i = 0;
  int j = 0;
  double dist_pi = 0.0;
  double dist_pj = 0.0;
  double true_dist = 0.0;   // oracle distance between the two fresh predictions
  double e_predict = 0.0;   // |dist_pi - dist_pj|
  double bound = 0.0;       // with the direct per-shape constants
  double bound_conservative = 0.0;  // with the sqrt(2)-inflated constants
  double trivial_bound = 0.0;       // worst case over the per-round reach boxes
  double alpha_i = 0.0;
  double alpha_j = 0.0;
  std::optional<double> ratio_i;  // |b_i - b_i_prev| / alpha_i, absent if alpha_i = 0
  std::optional<double> ratio_j;
};

struct SimulationLog {
  double dt = 0.0;
  RunMode mode = RunMode::Distributed;
  std::vector<int> robot_ids;
  std::vector<int> obstacle_ids;
  // steps[t][r] for round t and robot index r (same order as robot_ids).
  std::vector<std::vector<RobotStepLog>> steps;
  // Keyed by (lower id, higher id); the higher id may be an obstacle.
  std::map<std::pair<int, int>, std::vector<PairStepLog>> pair_steps;
  std::vector<double> central_seconds;  // joint solve time per round (Centralized)
  std::vector<ErrorTraceRow> error_trace;
  std::vector<Eigen::VectorXd> final_states;  // one per robot, after the last round
  int completed_steps = 0;
  bool aborted = false;
  std::string abort_reason;
};

// Synchronous lockstep world.  Each step() runs one full coordination round:
// every robot plans against the duals and neighbor predictions published at
// the end of the previous round, first inputs are applied, fresh shifted
// plans are published, and pair owners (lower id) refresh the duals on them.
class CoordinationWorld {
 public:
  CoordinationWorld(std::vector<RobotSpec> robots, std::vector<ObstacleSpec> obstacles,
                    CoordinationSettings settings, RunMode mode);
  ~CoordinationWorld();
  CoordinationWorld(const CoordinationWorld&) = delete;
  CoordinationWorld& operator=(const CoordinationWorld&) = delete;

  // Runs one round and returns the inputs applied, in robot_ids order.
  // Returns an empty vector when the world has already aborted.
  std::vector<Eigen::VectorXd> step();

  int time() const;
  bool aborted() const;
  const std::vector<Eigen::VectorXd>& states() const;
  // Snapshot of the log accumulated so far; finalizes final_states.
  SimulationLog log() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Runs T rounds (fewer if the world aborts on more than five consecutive
// infeasible rounds of one robot) and returns the complete log.
SimulationLog run_coordination(const std::vector<RobotSpec>& robots,
                               const std::vector<ObstacleSpec>& obstacles,
                               const CoordinationSettings& settings, int T, RunMode mode);

}  // namespace polycoord
