#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "polycoord/dynamics.hpp"

using namespace polycoord;

TEST_CASE("bicycle step against precomputed values") {
  const VehicleParams p;  // lf = lr = 1.125
  SUBCASE("straight-ish accelerating") {
    const Eigen::Vector4d z(0.0, 0.0, 0.0, 10.0);
    const Eigen::Vector2d u(1.0, 0.1);
    const Eigen::Vector4d zn = bicycle_step(z, u, 0.05, p);
    CHECK(zn(0) == doctest::Approx(0.499371994754908).epsilon(1e-12));
    CHECK(zn(1) == doctest::Approx(0.025052162671196).epsilon(1e-12));
    CHECK(zn(2) == doctest::Approx(0.022268589041063).epsilon(1e-12));
    CHECK(zn(3) == doctest::Approx(10.05));
  }
  SUBCASE("turning and braking") {
    const Eigen::Vector4d z(2.0, -1.0, 0.7, 5.0);
    const Eigen::Vector2d u(-0.5, -0.25);
    const Eigen::Vector4d zn = bicycle_step(z, u, 0.05, p);
    CHECK(zn(0) == doctest::Approx(2.210067403647461).epsilon(1e-12));
    CHECK(zn(1) == doctest::Approx(-0.864457807584448).epsilon(1e-12));
    CHECK(zn(2) == doctest::Approx(0.671857111088579).epsilon(1e-12));
    CHECK(zn(3) == doctest::Approx(4.975));
  }
}

TEST_CASE("bicycle speed clamps at zero") {
  const VehicleParams p;
  const Eigen::Vector4d z(0.0, 0.0, 0.0, 0.1);
  const Eigen::Vector2d u(-4.0, 0.0);
  const Eigen::Vector4d zn = bicycle_step(z, u, 0.05, p);
  CHECK(zn(3) == 0.0);
  // And stays at rest under further braking.
  const Eigen::Vector4d zn2 = bicycle_step(zn, u, 0.05, p);
  CHECK(zn2(3) == 0.0);
  CHECK(zn2(0) == doctest::Approx(zn(0)));
}

TEST_CASE("zero steering keeps heading") {
  const VehicleParams p;
  Eigen::Vector4d z(0.0, 0.0, 0.3, 15.0);
  const Eigen::Vector2d u(0.0, 0.0);
  for (int i = 0; i < 10; ++i) z = bicycle_step(z, u, 0.05, p);
  CHECK(z(2) == doctest::Approx(0.3));
  CHECK(z(3) == doctest::Approx(15.0));
  CHECK(z(0) == doctest::Approx(10 * 0.05 * 15.0 * std::cos(0.3)).epsilon(1e-12));
}

TEST_CASE("unicycle step") {
  const Eigen::Vector3d z(1.0, 2.0, std::numbers::pi / 2.0);
  const Eigen::Vector2d u(2.0, 0.5);
  const Eigen::Vector3d zn = unicycle_step(z, u, 0.1);
  CHECK(zn(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(zn(1) == doctest::Approx(2.2));
  CHECK(zn(2) == doctest::Approx(std::numbers::pi / 2.0 + 0.05));
}

TEST_CASE("model step dispatch and sizes") {
  Model bike{ModelKind::Bicycle, VehicleParams{}};
  Model uni{ModelKind::Unicycle, VehicleParams{}};
  CHECK(bike.nx() == 4);
  CHECK(uni.nx() == 3);
  CHECK(bike.nu() == 2);
  CHECK(uni.nu() == 2);
  Eigen::VectorXd z4(4), z3(3), u(2);
  z4 << 0, 0, 0, 1;
  z3 << 0, 0, 0;
  u << 0.5, 0.1;
  CHECK(bike.step(z4, u, 0.05).size() == 4);
  CHECK(uni.step(z3, u, 0.05).size() == 3);
  CHECK_THROWS_AS(bike.step(z3, u, 0.05), std::invalid_argument);
  const Pose2 pose = bike.pose_of(z4);
  CHECK(pose.x == 0.0);
  CHECK(pose.psi == 0.0);
}

TEST_CASE("step jacobians match finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ur(-1.0, 1.0);
  const double dt = 0.05, eps = 1e-7;
  for (const ModelKind kind : {ModelKind::Bicycle, ModelKind::Unicycle}) {
    Model m{kind, VehicleParams{}};
    for (int trial = 0; trial < 30; ++trial) {
      Eigen::VectorXd z(m.nx()), u(m.nu());
      for (int i = 0; i < m.nx(); ++i) z(i) = 3.0 * ur(rng);
      if (kind == ModelKind::Bicycle) z(3) = 5.0 + 2.0 * ur(rng);  // stay off the clamp
      u << 2.0 * ur(rng), 0.25 * ur(rng);
      Eigen::MatrixXd Fz, Fu;
      m.step_jacobians(z, u, dt, Fz, Fu);
      for (int i = 0; i < m.nx(); ++i) {
        Eigen::VectorXd zp = z, zm = z;
        zp(i) += eps;
        zm(i) -= eps;
        const Eigen::VectorXd col = (m.step(zp, u, dt) - m.step(zm, u, dt)) / (2 * eps);
        CHECK((col - Fz.col(i)).lpNorm<Eigen::Infinity>() < 1e-6);
      }
      for (int i = 0; i < m.nu(); ++i) {
        Eigen::VectorXd up = u, um = u;
        up(i) += eps;
        um(i) -= eps;
        const Eigen::VectorXd col = (m.step(z, up, dt) - m.step(z, um, dt)) / (2 * eps);
        CHECK((col - Fu.col(i)).lpNorm<Eigen::Infinity>() < 1e-6);
      }
    }
  }
}

TEST_CASE("rollout accumulates steps") {
  Model m{ModelKind::Bicycle, VehicleParams{}};
  Eigen::VectorXd z0(4);
  z0 << 0, 0, 0, 15;
  std::vector<Eigen::VectorXd> inputs(15, Eigen::Vector2d(0.0, 0.0));
  const auto states = rollout(m, z0, inputs, 0.05);
  REQUIRE(states.size() == 16);
  CHECK(states[0] == z0);
  CHECK(states[15](0) == doctest::Approx(15 * 0.05 * 15.0));
  // Matches manual iteration.
  Eigen::VectorXd z = z0;
  for (const auto& u : inputs) z = m.step(z, u, 0.05);
  CHECK((states.back() - z).norm() == 0.0);
}
