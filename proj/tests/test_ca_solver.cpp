#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "polycoord/ca_solver.hpp"
#include "polycoord/geometry.hpp"

using namespace polycoord;

namespace {
std::vector<Polytope> approaching_sequence(double start_gap, double step, int n) {
  std::vector<Polytope> polys;
  for (int k = 0; k < n; ++k)
    polys.push_back(vehicle_polytope(Pose2{start_gap - step * k, 0.0, 0.0}, 4.5, 1.8));
  return polys;
}
}  // namespace

TEST_CASE("constant pair matches a single dual solve") {
  const std::vector<Polytope> pi(15, vehicle_polytope(Pose2{0, 0, 0}, 4.5, 1.8));
  const std::vector<Polytope> pj(15, vehicle_polytope(Pose2{10, 0.5, 0.1}, 4.5, 1.8));
  const auto traj = solve_ca_pair(0, 1, pi, pj, 0.5);
  REQUIRE(traj.length() == 15);
  const double ref = oracle_distance(pi[0], pj[0]);
  for (int k = 0; k < 15; ++k) {
    CHECK(traj.status[k] == DualStatus::Optimal);
    CHECK(traj.distance[k] == doctest::Approx(ref).epsilon(1e-7));
    CHECK(!traj.below_dmin[k]);
    // Certificate holds at d_min.
    const auto cert = feasibility_certificate(pi[k], pj[k], traj.lambda_ij[k], traj.lambda_ji[k],
                                              traj.s[k], 0.5);
    CHECK(cert.feasible);
  }
}

TEST_CASE("approaching pair distances match the oracle step by step") {
  const std::vector<Polytope> pi(15, vehicle_polytope(Pose2{0, 0, 0}, 4.5, 1.8));
  const auto pj = approaching_sequence(12.0, 0.4, 15);
  const auto traj = solve_ca_pair(0, 1, pi, pj, 0.5);
  for (int k = 0; k < 15; ++k) {
    const double ref = oracle_distance(pi[k], pj[k]);
    CHECK(std::abs(traj.distance[k] - ref) < 1e-6 * std::max(1.0, ref));
    if (k > 0) CHECK(traj.distance[k] < traj.distance[k - 1]);
  }
}

TEST_CASE("below-dmin flag marks tight and intersecting steps") {
  std::vector<Polytope> pi(3, vehicle_polytope(Pose2{0, 0, 0}, 1.0, 1.0));
  std::vector<Polytope> pj;
  pj.push_back(vehicle_polytope(Pose2{3.0, 0, 0}, 1.0, 1.0));  // gap 2.0
  pj.push_back(vehicle_polytope(Pose2{1.3, 0, 0}, 1.0, 1.0));  // gap 0.3
  pj.push_back(vehicle_polytope(Pose2{0.5, 0, 0}, 1.0, 1.0));  // overlap
  const auto traj = solve_ca_pair(0, 1, pi, pj, 0.5);
  CHECK(!traj.below_dmin[0]);
  CHECK(traj.below_dmin[1]);
  CHECK(traj.distance[1] == doctest::Approx(0.3).epsilon(1e-7));
  CHECK(traj.below_dmin[2]);
  CHECK(traj.status[2] == DualStatus::Intersecting);
  CHECK(traj.distance[2] == 0.0);

  // A smaller requirement unflags the near step.
  const auto relaxed = solve_ca_pair(0, 1, pi, pj, 0.2);
  CHECK(!relaxed.below_dmin[1]);
}

TEST_CASE("warm start from the previous trajectory is stable") {
  const std::vector<Polytope> pi(15, vehicle_polytope(Pose2{0, 0, 0.05}, 4.5, 1.8));
  const auto pj = approaching_sequence(14.0, 0.3, 15);
  const auto cold = solve_ca_pair(0, 1, pi, pj, 0.5);
  const auto warm = solve_ca_pair(0, 1, pi, pj, 0.5, &cold);
  for (int k = 0; k < 15; ++k) {
    CHECK(std::abs(warm.distance[k] - cold.distance[k]) <= 1e-9);
    CHECK(warm.status[k] == DualStatus::Optimal);
  }

  // Slightly moved sequences still converge from the stale warm start.
  auto pj2 = approaching_sequence(13.8, 0.3, 15);
  const auto moved = solve_ca_pair(0, 1, pi, pj2, 0.5, &cold);
  for (int k = 0; k < 15; ++k) {
    const double ref = oracle_distance(pi[k], pj2[k]);
    CHECK(std::abs(moved.distance[k] - ref) < 1e-6 * std::max(1.0, ref));
  }
}

TEST_CASE("initialize_duals produces constant certified trajectories") {
  std::map<int, Polytope> polys;
  polys.emplace(0, vehicle_polytope(Pose2{11.5, 1.85, 0}, 4.5, 1.8));
  polys.emplace(1, vehicle_polytope(Pose2{5.5, 5.55, 0}, 4.5, 1.8));
  polys.emplace(2, vehicle_polytope(Pose2{0.5, 1.85, 0}, 4.5, 1.8));
  const std::vector<std::pair<int, int>> pairs = {{0, 1}, {0, 2}, {1, 2}};
  const auto duals = initialize_duals(polys, pairs, 15, 0.5);
  REQUIRE(duals.size() == 3);
  for (const auto& [key, traj] : duals) {
    REQUIRE(traj.length() == 15);
    const double ref = oracle_distance(polys.at(key.first), polys.at(key.second));
    for (int k = 0; k < 15; ++k) {
      CHECK(traj.distance[k] == doctest::Approx(ref).epsilon(1e-7));
      CHECK((traj.s[k] - traj.s[0]).norm() < 1e-9);
    }
  }
  // Same-lane gap: centers 11 apart, bodies 4.5 long -> 6.5 m.
  CHECK(duals.at({0, 2}).distance[0] == doctest::Approx(6.5).epsilon(1e-7));
}

TEST_CASE("length mismatch is rejected") {
  const std::vector<Polytope> pi(3, vehicle_polytope(Pose2{0, 0, 0}, 1, 1));
  const std::vector<Polytope> pj(4, vehicle_polytope(Pose2{3, 0, 0}, 1, 1));
  CHECK_THROWS_AS(solve_ca_pair(0, 1, pi, pj, 0.5), std::invalid_argument);
}
