#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "polycoord/dual_distance.hpp"
#include "polycoord/geometry.hpp"
#include "test_util.hpp"

using namespace polycoord;

namespace {
Polytope unit_square_at(double cx, double cy, double side = 1.0) {
  return vehicle_polytope(Pose2{cx, cy, 0.0}, side, side);
}

void check_solution_invariants(const Polytope& P1, const Polytope& P2, const DualSolution& sol) {
  REQUIRE(sol.status != DualStatus::Failed);
  CHECK(sol.distance >= 0.0);
  CHECK(sol.lambda_12.minCoeff() >= -1e-12);
  CHECK(sol.lambda_21.minCoeff() >= -1e-12);
  CHECK(sol.s.norm() <= 1.0 + 1e-9);
  const double recomputed = -P1.b.dot(sol.lambda_12) - P2.b.dot(sol.lambda_21);
  CHECK(sol.distance == doctest::Approx(recomputed).epsilon(0).scale(1).epsilon(1e-8));
  CHECK((P1.A.transpose() * sol.lambda_12 + sol.s).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK((P2.A.transpose() * sol.lambda_21 - sol.s).lpNorm<Eigen::Infinity>() < 1e-7);
}
}  // namespace

TEST_CASE("separated unit squares") {
  const Polytope P1 = unit_square_at(0, 0), P2 = unit_square_at(3, 0);
  const DualSolution sol = solve_dual_distance(P1, P2);
  REQUIRE(sol.status == DualStatus::Optimal);
  CHECK(sol.distance == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(sol.s.norm() == doctest::Approx(1.0).epsilon(1e-9));
  check_solution_invariants(P1, P2, sol);
  // Witness points on the facing faces.
  CHECK(sol.witness_1(0) == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(sol.witness_2(0) == doctest::Approx(2.5).epsilon(1e-7));
  CHECK((sol.witness_1 - sol.witness_2).norm() == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("identical squares intersect") {
  const Polytope P = unit_square_at(0, 0);
  const DualSolution sol = solve_dual_distance(P, P);
  CHECK(sol.status == DualStatus::Intersecting);
  CHECK(sol.distance == doctest::Approx(0.0));
}

TEST_CASE("overlapping and touching squares intersect") {
  CHECK(solve_dual_distance(unit_square_at(0, 0), unit_square_at(0.6, 0.2)).status ==
        DualStatus::Intersecting);
  const DualSolution touching = solve_dual_distance(unit_square_at(0, 0), unit_square_at(1, 0));
  CHECK(touching.status == DualStatus::Intersecting);
  CHECK(touching.distance == doctest::Approx(0.0));
}

TEST_CASE("matches oracle on random disjoint polygon pairs") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int done = 0;
  while (done < 200) {
    const Polytope P1 = testutil::random_polygon(rng, {u(rng), u(rng)}, 1.2);
    const Polytope P2 = testutil::random_polygon(rng, {3.5 + u(rng), u(rng)}, 1.2);
    const double ref = oracle_distance(P1, P2);
    if (ref < 0.05) continue;
    const DualSolution sol = solve_dual_distance(P1, P2);
    REQUIRE(sol.status == DualStatus::Optimal);
    CHECK(std::abs(sol.distance - ref) <= 1e-6 * std::max(1.0, ref));
    check_solution_invariants(P1, P2, sol);
    ++done;
  }
}

TEST_CASE("detects intersection on random overlapping pairs") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  int done = 0;
  while (done < 60) {
    const Polytope P1 = testutil::random_polygon(rng, {0.0, 0.0}, 1.5);
    const Polytope P2 = testutil::random_polygon(rng, {u(rng), u(rng)}, 1.5);
    if (oracle_distance(P1, P2) > 0.0) continue;  // want genuine overlap
    const DualSolution sol = solve_dual_distance(P1, P2);
    CHECK(sol.status == DualStatus::Intersecting);
    CHECK(sol.distance == doctest::Approx(0.0));
    ++done;
  }
}

TEST_CASE("swapped arguments flip s and swap multipliers") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 25; ++i) {
    const Polytope P1 = testutil::random_polygon(rng, {u(rng), u(rng)}, 1.0);
    const Polytope P2 = testutil::random_polygon(rng, {3.0 + u(rng), 1.0 + u(rng)}, 1.0);
    if (oracle_distance(P1, P2) < 0.05) continue;
    const DualSolution a = solve_dual_distance(P1, P2);
    const DualSolution b = solve_dual_distance(P2, P1);
    REQUIRE(a.status == DualStatus::Optimal);
    REQUIRE(b.status == DualStatus::Optimal);
    CHECK(a.distance == doctest::Approx(b.distance).epsilon(1e-9));
    CHECK((a.s + b.s).norm() < 1e-6);
    CHECK((a.lambda_12 - b.lambda_21).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((a.lambda_21 - b.lambda_12).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("warm start reproduces the solution quickly") {
  const Polytope P1 = vehicle_polytope(Pose2{0.0, 0.0, 0.3}, 4.5, 1.8);
  const Polytope P2 = vehicle_polytope(Pose2{7.0, 1.0, -0.2}, 4.5, 1.8);
  const DualSolution cold = solve_dual_distance(P1, P2);
  REQUIRE(cold.status == DualStatus::Optimal);
  const DualSolution warm = solve_dual_distance(P1, P2, &cold);
  REQUIRE(warm.status == DualStatus::Optimal);
  CHECK(std::abs(warm.distance - cold.distance) < 1e-9);
  CHECK(warm.iterations <= cold.iterations);

  // Warm start from a slightly different pose still converges.
  const Polytope P2b = vehicle_polytope(Pose2{7.1, 1.05, -0.18}, 4.5, 1.8);
  const DualSolution moved = solve_dual_distance(P1, P2b, &cold);
  REQUIRE(moved.status == DualStatus::Optimal);
  CHECK(std::abs(moved.distance - oracle_distance(P1, P2b)) < 1e-6);
}

TEST_CASE("solver handles coordinates far from the origin") {
  const Polytope P1 = vehicle_polytope(Pose2{312.0, 1.85, 0.01}, 4.5, 1.8);
  const Polytope P2 = vehicle_polytope(Pose2{320.0, 1.95, -0.02}, 4.5, 1.8);
  const DualSolution sol = solve_dual_distance(P1, P2);
  REQUIRE(sol.status == DualStatus::Optimal);
  CHECK(std::abs(sol.distance - oracle_distance(P1, P2)) < 1e-6);
  check_solution_invariants(P1, P2, sol);
}

TEST_CASE("3-D boxes") {
  Eigen::VectorXd lo1(3), hi1(3), lo2(3), hi2(3);
  lo1 << -0.5, -0.5, -0.5;
  hi1 << 0.5, 0.5, 0.5;
  lo2 << 2.5, -0.5, -0.5;
  hi2 << 3.5, 0.5, 0.5;
  const Polytope B1 = box_polytope(lo1, hi1), B2 = box_polytope(lo2, hi2);
  const DualSolution sol = solve_dual_distance(B1, B2);
  REQUIRE(sol.status == DualStatus::Optimal);
  CHECK(sol.distance == doctest::Approx(2.0).epsilon(1e-9));

  // Corner-to-corner gap: sqrt(3) for unit offset along each axis.
  Eigen::VectorXd lo3(3), hi3(3);
  lo3 << 1.5, 1.5, 1.5;
  hi3 << 2.5, 2.5, 2.5;
  const DualSolution diag = solve_dual_distance(B1, box_polytope(lo3, hi3));
  REQUIRE(diag.status == DualStatus::Optimal);
  CHECK(diag.distance == doctest::Approx(std::sqrt(3.0)).epsilon(1e-8));

  // Overlapping boxes.
  Eigen::VectorXd lo4(3), hi4(3);
  lo4 << 0.0, 0.0, 0.0;
  hi4 << 1.0, 1.0, 1.0;
  CHECK(solve_dual_distance(B1, box_polytope(lo4, hi4)).status == DualStatus::Intersecting);
}

TEST_CASE("certificate accepts the solved pair and rejects a higher requirement") {
  const Polytope P1 = unit_square_at(0, 0), P2 = unit_square_at(3, 0.4);
  const DualSolution sol = solve_dual_distance(P1, P2);
  REQUIRE(sol.status == DualStatus::Optimal);

  const auto pass =
      feasibility_certificate(P1, P2, sol.lambda_12, sol.lambda_21, sol.s, sol.distance - 1e-6);
  CHECK(pass.feasible);
  CHECK(pass.distance_shortfall == doctest::Approx(0.0));

  const auto fail =
      feasibility_certificate(P1, P2, sol.lambda_12, sol.lambda_21, sol.s, sol.distance + 1e-3);
  CHECK(!fail.feasible);
  CHECK(fail.distance_shortfall == doctest::Approx(1e-3).epsilon(1e-2));
}

TEST_CASE("zero multipliers certify only a zero distance requirement") {
  const Polytope P1 = unit_square_at(0, 0), P2 = unit_square_at(3, 0);
  const Eigen::VectorXd z4 = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd z2 = Eigen::VectorXd::Zero(2);
  CHECK(feasibility_certificate(P1, P2, z4, z4, z2, 0.0).feasible);
  CHECK(!feasibility_certificate(P1, P2, z4, z4, z2, 0.5).feasible);
}

TEST_CASE("separating and supporting hyperplanes") {
  const Polytope P1 = unit_square_at(0, 0), P2 = unit_square_at(3, 0);
  const DualSolution sol = solve_dual_distance(P1, P2);
  REQUIRE(sol.status == DualStatus::Optimal);

  const Hyperplane mid = separating_hyperplane(P1, sol);
  CHECK(std::abs(std::abs(mid.normal(0)) - 1.0) < 1e-9);  // +-x normal
  // All P1 vertices strictly on one side, all P2 vertices on the other.
  double side1 = 0, side2 = 0;
  for (const auto& v : enumerate_vertices(P1)) side1 = std::max(side1, mid.normal.dot(v) - mid.offset);
  for (const auto& v : enumerate_vertices(P2)) side2 = std::min(side2, mid.normal.dot(v) - mid.offset);
  CHECK(side1 * side2 < 0.0);  // opposite signs
  CHECK(std::min(std::abs(side1), std::abs(side2)) > 0.9);

  const auto [h1, h2] = supporting_hyperplanes(P1, P2, sol);
  CHECK(std::abs(h1.offset - h2.offset) == doctest::Approx(sol.distance).epsilon(1e-6));
  // h1 supports P1: touches (min gap 0) and does not cut.
  double min_gap = 1e9;
  for (const auto& v : enumerate_vertices(P1)) {
    const double g = h1.normal.dot(v) - h1.offset;
    CHECK(g > -1e-7);
    min_gap = std::min(min_gap, g);
  }
  CHECK(min_gap == doctest::Approx(0.0).epsilon(0).scale(1).epsilon(1e-6));
  // In x terms the planes sit at the facing faces x=0.5 and x=2.5.
  const double x1 = h1.offset / h1.normal(0), x2 = h2.offset / h2.normal(0);
  CHECK(std::min(x1, x2) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(std::max(x1, x2) == doctest::Approx(2.5).epsilon(1e-6));

  CHECK_THROWS_AS(separating_hyperplane(P1, solve_dual_distance(P1, P1)), std::logic_error);
}

TEST_CASE("supporting hyperplanes on random pairs") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int done = 0;
  while (done < 30) {
    const Polytope P1 = testutil::random_polygon(rng, {u(rng), u(rng)}, 1.0);
    const Polytope P2 = testutil::random_polygon(rng, {u(rng), 3.5 + u(rng)}, 1.0);
    if (oracle_distance(P1, P2) < 0.05) continue;
    const DualSolution sol = solve_dual_distance(P1, P2);
    REQUIRE(sol.status == DualStatus::Optimal);
    const auto [h1, h2] = supporting_hyperplanes(P1, P2, sol);
    CHECK(std::abs(h1.offset - h2.offset) == doctest::Approx(sol.distance).epsilon(1e-6));
    double min1 = 1e9, max2 = -1e9;
    for (const auto& v : enumerate_vertices(P1)) min1 = std::min(min1, h1.normal.dot(v));
    for (const auto& v : enumerate_vertices(P2)) max2 = std::max(max2, h2.normal.dot(v));
    CHECK(min1 == doctest::Approx(h1.offset).epsilon(0).scale(1).epsilon(1e-6));
    CHECK(max2 == doctest::Approx(h2.offset).epsilon(0).scale(1).epsilon(1e-6));
    ++done;
  }
}

TEST_CASE("dimension mismatch is rejected") {
  Eigen::VectorXd lo2(2), hi2(2), lo3(3), hi3(3);
  lo2 << 0, 0;
  hi2 << 1, 1;
  lo3 << 0, 0, 0;
  hi3 << 1, 1, 1;
  CHECK_THROWS_AS(solve_dual_distance(box_polytope(lo2, hi2), box_polytope(lo3, hi3)),
                  std::invalid_argument);
}

TEST_CASE("rotated rectangles against the oracle") {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 40; ++i) {
    const Pose2 za{u(rng), u(rng), u(rng) * std::numbers::pi};
    const Pose2 zb{6.0 + u(rng), 2.0 * u(rng), u(rng) * std::numbers::pi};
    const Polytope P1 = vehicle_polytope(za, 4.5, 1.8);
    const Polytope P2 = vehicle_polytope(zb, 4.5, 1.8);
    const double ref = oracle_distance(P1, P2);
    const DualSolution sol = solve_dual_distance(P1, P2);
    if (ref == 0.0) {
      CHECK(sol.status == DualStatus::Intersecting);
    } else {
      REQUIRE(sol.status == DualStatus::Optimal);
      CHECK(std::abs(sol.distance - ref) <= 1e-6 * std::max(1.0, ref));
    }
  }
}
