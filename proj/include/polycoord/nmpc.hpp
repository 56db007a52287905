#pragma once

#include <Eigen/Dense>
#include <map>
#include <utility>
#include <vector>

#include "polycoord/ca_solver.hpp"
#include "polycoord/dynamics.hpp"
#include "polycoord/geometry.hpp"

namespace polycoord {

// Collision constraint against one neighbour, with the multipliers and the
// separating directions held fixed for the whole solve.  All offset terms are
// expressed in a pair-local frame centred at `center` so that the certificate
// arithmetic involves only body-scale magnitudes.
//
// Entry k (0-based) constrains predicted step k+1; the initial state is
// already realized and is not constrained.
struct FixedPairConstraint {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> w;    // base-frame normal combination A_base^T lambda_ego
  std::vector<double> const_term;    // -b_base^T lambda_ego - b_other_local^T lambda_other
  std::vector<Eigen::Vector2d> s;    // separating direction, sign-adjusted for the ego side
  std::vector<bool> active;          // false for degenerate (zero-information) entries

  int length() const { return static_cast<int>(w.size()); }

  // Separation value at ego pose (t, psi): const_term - (t - center)^T R(psi) w.
  // By weak duality this lower-bounds the distance between the bodies whenever
  // the consistency residual R(psi) w + s is zero.
  double separation(int k, const Eigen::Vector2d& t, double psi) const;
  Eigen::Vector2d consistency(int k, double psi) const;
};

// Builds the fixed constraint data for one robot of a pair.  `other_world`
// holds the neighbour's published polytopes for predicted steps 1..N (world
// frame); `ego_is_first` selects which side of the dual trajectory belongs to
// the ego robot.  `center` is the pair-local frame origin in world coordinates.
FixedPairConstraint make_pair_constraint(const Polytope& ego_base,
                                         const std::vector<Polytope>& other_world,
                                         const DualPairTrajectory& duals, bool ego_is_first,
                                         const Eigen::Vector2d& center);

struct LocalNmpcProblem {
  Model model;
  Polytope base_polytope;  // body shape at identity pose
  Eigen::VectorXd z0;

  int horizon = 15;
  double dt = 0.05;

  Eigen::VectorXd weight_state;  // diagonal tracking weights, size nx
  Eigen::VectorXd weight_input;  // diagonal input weights, size nu
  Eigen::VectorXd weight_rate;   // diagonal successive-difference weights, size nu
  Eigen::VectorXd z_ref;         // tracking target, size nx

  Eigen::VectorXd u_min, u_max;  // input box, size nu
  Eigen::VectorXd du_rate;       // max input change per second, size nu
  Eigen::VectorXd u_prev;        // last applied input (anchors the rate limit)

  double d_min = 0.5;
  double safety_margin = 0.0;  // internal tightening on top of d_min

  std::vector<FixedPairConstraint> pairs;
  double separation_weight_init = 1e3;  // adaptive hinge weight, doubled on violation
  double consistency_weight = 50.0;     // fixed weight on R(psi) w + s

  // Optional cap on how far the body's halfspace offsets may drift from a
  // previously published plan (disabled unless weight > 0 and prev_b is set).
  double b_shift_cap = 0.0;
  double b_shift_weight = 0.0;
  std::vector<Eigen::VectorXd> prev_b;  // world-frame offsets for steps 1..N
};

enum class NmpcStatus { Converged, MaxIter, Infeasible };

struct NmpcSolution {
  std::vector<Eigen::VectorXd> inputs;  // N entries
  std::vector<Eigen::VectorXd> states;  // N+1 entries, states[0] == z0
  double objective = 0.0;               // tracking + input + rate cost of the plan
  double max_separation_violation = 0.0;
  double max_consistency_violation = 0.0;
  NmpcStatus status = NmpcStatus::MaxIter;
  int iterations = 0;  // inner iterations summed over penalty rounds
};

// Solves the local trajectory problem with fixed collision multipliers.
// `warm_inputs` (size N, each nu) seeds the search when provided.
NmpcSolution solve_local_nmpc(const LocalNmpcProblem& problem,
                              const std::vector<Eigen::VectorXd>* warm_inputs = nullptr);

// Drops the first element and duplicates the last: the standard one-round
// shift used for published plans and warm starts.
std::vector<Eigen::VectorXd> shift_and_augment(const std::vector<Eigen::VectorXd>& seq);

// Quadratic tracking + input + input-rate cost of one realized step.  The
// heading component (index 2) of the state error is angle-wrapped.
double stage_cost(const Eigen::VectorXd& weight_state, const Eigen::VectorXd& weight_input,
                  const Eigen::VectorXd& weight_rate, const Eigen::VectorXd& z_ref,
                  const Eigen::VectorXd& z, const Eigen::VectorXd& u,
                  const Eigen::VectorXd& u_prev);

// ---------------------------------------------------------------------------
// Centralized baseline: one joint problem over all robots, alternating between
// refreshing the pair multipliers at the current predicted trajectories and
// Gauss-Newton sweeps over the stacked input vector.

struct CentralizedProblem {
  std::vector<Model> models;
  std::vector<Polytope> base_polytopes;
  std::vector<Eigen::VectorXd> z0;
  std::vector<Eigen::VectorXd> weight_state, weight_input, weight_rate, z_ref;
  std::vector<Eigen::VectorXd> u_min, u_max, du_rate, u_prev;

  int horizon = 15;
  double dt = 0.05;
  double d_min = 0.5;
  double safety_margin = 0.0;
  std::vector<std::pair<int, int>> pairs;  // (i, j) with i < j
  double separation_weight_init = 1e3;
  double consistency_weight = 50.0;

  int num_robots() const { return static_cast<int>(models.size()); }
};

struct CentralizedSolution {
  std::vector<std::vector<Eigen::VectorXd>> inputs;  // per robot, N entries
  std::vector<std::vector<Eigen::VectorXd>> states;  // per robot, N+1 entries
  std::map<std::pair<int, int>, DualPairTrajectory> duals;
  double objective = 0.0;
  double max_separation_violation = 0.0;
  NmpcStatus status = NmpcStatus::MaxIter;
  int sweeps = 0;
  double separation_weight_final = 0.0;
};

// Pair-local frame origin used by the centralized solver and the coordinator:
// the midpoint of the two robots' current positions.
Eigen::Vector2d pair_frame_center(const Eigen::VectorXd& z_i, const Eigen::VectorXd& z_j);

CentralizedSolution solve_centralized_nmpc(const CentralizedProblem& problem,
                                           const CentralizedSolution* warm = nullptr);

}  // namespace polycoord
