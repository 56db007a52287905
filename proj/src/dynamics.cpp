#include "polycoord/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace polycoord {

Eigen::Vector4d bicycle_step(const Eigen::Vector4d& z, const Eigen::Vector2d& u, double dt,
                             const VehicleParams& p) {
  const double L = p.lf + p.lr;
  const double beta = std::atan(std::tan(u(1)) * p.lr / L);
  Eigen::Vector4d zn;
  zn(0) = z(0) + dt * z(3) * std::cos(z(2) + beta);
  zn(1) = z(1) + dt * z(3) * std::sin(z(2) + beta);
  zn(2) = z(2) + dt * z(3) * std::cos(beta) / L * std::tan(u(1));
  zn(3) = std::max(0.0, z(3) + dt * u(0));
  return zn;
}

Eigen::Vector3d unicycle_step(const Eigen::Vector3d& z, const Eigen::Vector2d& u, double dt) {
  Eigen::Vector3d zn;
  zn(0) = z(0) + dt * u(0) * std::cos(z(2));
  zn(1) = z(1) + dt * u(0) * std::sin(z(2));
  zn(2) = z(2) + dt * u(1);
  return zn;
}

Eigen::VectorXd Model::step(const Eigen::VectorXd& z, const Eigen::VectorXd& u, double dt) const {
  if (z.size() != nx() || u.size() != nu()) throw std::invalid_argument("Model::step: size mismatch");
  if (kind == ModelKind::Bicycle) return bicycle_step(z, u, dt, params);
  return unicycle_step(z, u, dt);
}

void Model::step_jacobians(const Eigen::VectorXd& z, const Eigen::VectorXd& u, double dt,
                           Eigen::MatrixXd& Fz, Eigen::MatrixXd& Fu) const {
  if (z.size() != nx() || u.size() != nu())
    throw std::invalid_argument("Model::step_jacobians: size mismatch");
  Fz = Eigen::MatrixXd::Identity(nx(), nx());
  Fu = Eigen::MatrixXd::Zero(nx(), nu());
  if (kind == ModelKind::Bicycle) {
    const double L = params.lf + params.lr;
    const double cr = params.lr / L;
    const double td = std::tan(u(1));
    const double sec2 = 1.0 + td * td;
    const double beta = std::atan(cr * td);
    const double dbeta = cr * sec2 / (1.0 + cr * cr * td * td);
    const double cb = std::cos(beta), sb = std::sin(beta);
    const double cpb = std::cos(z(2) + beta), spb = std::sin(z(2) + beta);
    const double v = z(3);

    Fz(0, 2) = -dt * v * spb;
    Fz(0, 3) = dt * cpb;
    Fz(1, 2) = dt * v * cpb;
    Fz(1, 3) = dt * spb;
    Fz(2, 3) = dt * cb * td / L;

    Fu(0, 1) = -dt * v * spb * dbeta;
    Fu(1, 1) = dt * v * cpb * dbeta;
    Fu(2, 1) = dt * v * (-sb * dbeta * td + cb * sec2) / L;
    if (z(3) + dt * u(0) > 0.0) {
      Fu(3, 0) = dt;
    } else {
      Fz(3, 3) = 0.0;  // clamped at rest
    }
  } else {
    const double c = std::cos(z(2)), s = std::sin(z(2));
    Fz(0, 2) = -dt * u(0) * s;
    Fz(1, 2) = dt * u(0) * c;
    Fu(0, 0) = dt * c;
    Fu(1, 0) = dt * s;
    Fu(2, 1) = dt;
  }
}

std::vector<Eigen::VectorXd> rollout(const Model& m, const Eigen::VectorXd& z0,
                                     const std::vector<Eigen::VectorXd>& inputs, double dt) {
  std::vector<Eigen::VectorXd> states;
  states.reserve(inputs.size() + 1);
  states.push_back(z0);
  for (const auto& u : inputs) states.push_back(m.step(states.back(), u, dt));
  return states;
}

}  // namespace polycoord
