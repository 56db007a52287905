#include "polycoord/ca_solver.hpp"

#include <stdexcept>

namespace polycoord {

DualPairTrajectory solve_ca_pair(int i, int j, const std::vector<Polytope>& polys_i,
                                 const std::vector<Polytope>& polys_j, double d_min,
                                 const DualPairTrajectory* warm, const DualSolverOptions& opts) {
  if (polys_i.size() != polys_j.size())
    throw std::invalid_argument("solve_ca_pair: sequence length mismatch");
  const int n = static_cast<int>(polys_i.size());
  DualPairTrajectory out;
  out.i = i;
  out.j = j;
  out.lambda_ij.resize(n);
  out.lambda_ji.resize(n);
  out.s.resize(n);
  out.distance.resize(n);
  out.below_dmin.resize(n);
  out.status.resize(n);
  out.witness_i.resize(n);
  out.witness_j.resize(n);

  DualSolution prev;
  bool have_prev = false;
  for (int k = 0; k < n; ++k) {
    DualSolution seed;
    const DualSolution* seed_ptr = nullptr;
    if (warm != nullptr && warm->length() == n && warm->s[k].size() > 0) {
      seed.lambda_12 = warm->lambda_ij[k];
      seed.lambda_21 = warm->lambda_ji[k];
      seed.s = warm->s[k];
      seed.witness_1 = warm->witness_i[k];
      seed.witness_2 = warm->witness_j[k];
      seed_ptr = &seed;
    } else if (have_prev) {
      seed_ptr = &prev;
    }
    const DualSolution sol = solve_dual_distance(polys_i[k], polys_j[k], seed_ptr, opts);
    out.lambda_ij[k] = sol.lambda_12;
    out.lambda_ji[k] = sol.lambda_21;
    out.s[k] = sol.s;
    out.distance[k] = sol.distance;
    out.below_dmin[k] = sol.distance < d_min;
    out.status[k] = sol.status;
    out.witness_i[k] = sol.witness_1;
    out.witness_j[k] = sol.witness_2;
    prev = sol;
    have_prev = true;
  }
  return out;
}

DualPairTrajectory shift_dual_trajectory(const DualPairTrajectory& duals, int delay) {
  if (delay < 0) throw std::invalid_argument("shift_dual_trajectory: negative delay");
  const int n = duals.length();
  if (delay == 0 || n == 0) return duals;
  DualPairTrajectory out = duals;
  const auto realign = [&](auto& seq) {
    for (int k = 0; k < n; ++k) seq[k] = seq[std::min(k + delay, n - 1)];
  };
  realign(out.lambda_ij);
  realign(out.lambda_ji);
  realign(out.s);
  realign(out.distance);
  realign(out.below_dmin);
  realign(out.status);
  realign(out.witness_i);
  realign(out.witness_j);
  return out;
}

std::map<std::pair<int, int>, DualPairTrajectory> initialize_duals(
    const std::map<int, Polytope>& initial_polys, const std::vector<std::pair<int, int>>& pairs,
    int horizon, double d_min) {
  std::map<std::pair<int, int>, DualPairTrajectory> out;
  for (const auto& [a, b] : pairs) {
    const int i = std::min(a, b), j = std::max(a, b);
    const std::vector<Polytope> pi(horizon, initial_polys.at(i));
    const std::vector<Polytope> pj(horizon, initial_polys.at(j));
    out.emplace(std::make_pair(i, j), solve_ca_pair(i, j, pi, pj, d_min));
  }
  return out;
}

}  // namespace polycoord
