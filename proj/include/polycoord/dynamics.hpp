#pragma once

#include <Eigen/Dense>
#include <vector>

#include "polycoord/geometry.hpp"

namespace polycoord {

struct VehicleParams {
  double lf = 1.125;  // front axle to reference point
  double lr = 1.125;  // rear axle to reference point
  double h = 4.5;     // body length
  double w = 1.8;     // body width
};

enum class ModelKind { Bicycle, Unicycle };

// Kinematic bicycle, explicit Euler. State (x, y, psi, v), input (a, delta).
// Speed is clamped at zero: the model does not reverse.
Eigen::Vector4d bicycle_step(const Eigen::Vector4d& z, const Eigen::Vector2d& u, double dt,
                             const VehicleParams& p);

// Kinematic unicycle, explicit Euler. State (x, y, psi), input (v, omega).
Eigen::Vector3d unicycle_step(const Eigen::Vector3d& z, const Eigen::Vector2d& u, double dt);

// Uniform handle over the two models for the trajectory optimizer.
struct Model {
  ModelKind kind = ModelKind::Bicycle;
  VehicleParams params;

  int nx() const { return kind == ModelKind::Bicycle ? 4 : 3; }
  int nu() const { return 2; }
  Eigen::VectorXd step(const Eigen::VectorXd& z, const Eigen::VectorXd& u, double dt) const;
  // Jacobians of step with respect to state and input (clamp-aware).
  void step_jacobians(const Eigen::VectorXd& z, const Eigen::VectorXd& u, double dt,
                      Eigen::MatrixXd& Fz, Eigen::MatrixXd& Fu) const;
  Pose2 pose_of(const Eigen::VectorXd& z) const { return Pose2{z(0), z(1), z(2)}; }
  double speed_of(const Eigen::VectorXd& z, const Eigen::VectorXd& u) const {
    return kind == ModelKind::Bicycle ? z(3) : u(0);
  }
};

// States produced by applying the input sequence from z0; result[0] == z0 and
// result.size() == inputs.size() + 1.
std::vector<Eigen::VectorXd> rollout(const Model& m, const Eigen::VectorXd& z0,
                                     const std::vector<Eigen::VectorXd>& inputs, double dt);

}  // namespace polycoord
