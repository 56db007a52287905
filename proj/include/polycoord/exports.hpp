#pragma once

#include <string>
#include <vector>

#include "polycoord/coordinator.hpp"

namespace polycoord {

// Writes the simulation log as a set of CSV files under `dir` (created if
// missing) and returns the file names written, in a fixed order:
//
//   trajectories.csv   t,robot_id,x,y,psi,v,a_or_v_cmd,delta_or_omega,
//                      min_neighbor_dist,nmpc_status
//                      (v is blank for unicycles; min_neighbor_dist is blank
//                      when the robot had no neighbor)
//   timings.csv        component,robot_id,avg_s,max_s
//                      (per-robot "nmpc" and "ca" rows; a "central" row in
//                      centralized mode; a final "total" row with the mean
//                      per-robot per-step total)
//   costs.csv          robot_id,cost   (closed-loop stage-cost sums, then
//                      "total_sum" and "total_avg" rows)
//   error_trace.csv    t,i,j,dist_pi,dist_pj,true_dist,e_predict,bound,
//                      bound_conservative,trivial_bound,alpha_i,alpha_j,
//                      ratio_i,ratio_j   (only when tracing was enabled)
//   fig_distances.csv  t,pair_i,pair_j,oracle_distance,dual_min_distance,
//                      constrained
//   fig_speeds.csv     t,robot_id,v,y
//   fig_error_bound.csv t,i,j,e_predict,bound,trivial_bound  (only with trace)
//   fig_computation.csv t,total_nmpc_seconds,total_ca_seconds,central_seconds
//
// Numbers are printed with 17 significant digits, so identical logs produce
// byte-identical files.  Throws std::runtime_error when a file cannot be
// written.
std::vector<std::string> export_outputs(const SimulationLog& log, const std::string& dir);

}  // namespace polycoord
