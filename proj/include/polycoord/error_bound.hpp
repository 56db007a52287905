#pragma once

#include <Eigen/Dense>
#include <optional>

#include "polycoord/geometry.hpp"

namespace polycoord {

// Shape-dependent constant used to bound prediction errors from offset-vector
// displacements.
struct PolytopeConstant {
  double c = 0.0;
};

// Conservative constant sqrt(2) * ||(A_base^T)^+||_F computed from the base
// halfspace normals.  Throws std::invalid_argument if A_base is not full
// column rank.
PolytopeConstant polytope_constant(const Eigen::MatrixXd& A_base);

// Direct constant ||(A^T)^+||_F for a concrete (possibly pose-transformed)
// normal matrix.  Rotation leaves it unchanged, so for a rectangle it equals
// 1 at every pose.  This is the exact factor the audit uses.
double offset_gain(const Eigen::MatrixXd& A);

// Distance estimate formed by robot i: its own fresh offsets against the
// neighbour's last published ones, both priced with the stale multipliers.
double dist_predicted_by_i(const Eigen::VectorXd& b_i_now, const Eigen::VectorXd& b_j_prev,
                           const Eigen::VectorXd& lambda_ij_prev,
                           const Eigen::VectorXd& lambda_ji_prev);

// Mirror image: robot j prices its fresh offsets against i's published ones.
double dist_predicted_by_j(const Eigen::VectorXd& b_i_prev, const Eigen::VectorXd& b_j_now,
                           const Eigen::VectorXd& lambda_ij_prev,
                           const Eigen::VectorXd& lambda_ji_prev);

// Absolute disagreement between the two one-sided estimates.
double prediction_error(double dist_pi, double dist_pj);

// Upper bound c_i ||b_i_now - b_i_prev|| + c_j ||b_j_now - b_j_prev|| on the
// prediction error.
double prediction_error_bound(const Eigen::VectorXd& b_i_now, const Eigen::VectorXd& b_i_prev,
                              const Eigen::VectorXd& b_j_now, const Eigen::VectorXd& b_j_prev,
                              double c_i, double c_j);

// Largest possible offset-vector displacement when the pose may move by up to
// (dx, dy, dpsi) from `pose`.  Deterministic: the xy box is exact (convexity
// puts the maximum at a corner); the heading interval is scanned on a grid.
double max_offset_shift(const Polytope& base, const Pose2& pose, double dx, double dy, double dpsi,
                        int heading_grid = 41);

// Worst-case counterpart of prediction_error_bound: both displacement norms
// replaced by their maxima over the per-step reach boxes (dx, dy, dpsi).
double trivial_error_bound(const Polytope& base_i, const Pose2& pose_i,
                           const Eigen::Vector3d& reach_i, const Polytope& base_j,
                           const Pose2& pose_j, const Eigen::Vector3d& reach_j, double c_i,
                           double c_j);

// Smallest offset displacement produced by the extreme acceptable pose errors:
// the minimum over the 8 sign combinations of (+-e_x, +-e_y, +-e_psi).
double alpha_min(const Polytope& base, const Pose2& pose, double e_x, double e_y, double e_psi);

// ||b_now - b_prev|| / alpha; absent when alpha is zero.
std::optional<double> normalization_ratio(const Eigen::VectorXd& b_now,
                                          const Eigen::VectorXd& b_prev, double alpha);

}  // namespace polycoord
