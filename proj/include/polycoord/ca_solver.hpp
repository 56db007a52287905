#pragma once

#include <map>
#include <utility>
#include <vector>

#include "polycoord/dual_distance.hpp"

namespace polycoord {

// Dual trajectory of one pair over the prediction horizon: entry k carries the
// separation certificate of the two communicated polytopes at horizon step k.
struct DualPairTrajectory {
  int i = 0;  // lower robot id; owner of the pair
  int j = 0;
  std::vector<Eigen::VectorXd> lambda_ij;  // multipliers on robot i's rows
  std::vector<Eigen::VectorXd> lambda_ji;  // multipliers on robot j's rows
  std::vector<Eigen::VectorXd> s;
  std::vector<double> distance;      // certified value per step
  std::vector<bool> below_dmin;      // distance < d_min at that step
  std::vector<DualStatus> status;
  // Witness points, kept for warm starting the next round.
  std::vector<Eigen::VectorXd> witness_i, witness_j;

  int length() const { return static_cast<int>(s.size()); }
};

// Solves the per-step minimum-distance duals for a pair of predicted polytope
// sequences (states fixed). Steps are independent; each is warm started from
// the matching step of `warm` when provided, falling back to the previous
// step's fresh solution.
DualPairTrajectory solve_ca_pair(int i, int j, const std::vector<Polytope>& polys_i,
                                 const std::vector<Polytope>& polys_j, double d_min,
                                 const DualPairTrajectory* warm = nullptr,
                                 const DualSolverOptions& opts = {});

// Duals for every listed pair with polytopes held at their initial placement
// over the whole horizon.
std::map<std::pair<int, int>, DualPairTrajectory> initialize_duals(
    const std::map<int, Polytope>& initial_polys, const std::vector<std::pair<int, int>>& pairs,
    int horizon, double d_min);

// Re-aligns a dual trajectory that arrives `delay` rounds late: the first
// `delay` entries describe horizon steps that have already passed, so they are
// dropped and the final entry is duplicated to restore the length.  delay >=
// length degenerates to the last entry repeated.
DualPairTrajectory shift_dual_trajectory(const DualPairTrajectory& duals, int delay);

}  // namespace polycoord
