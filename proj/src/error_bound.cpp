#include "polycoord/error_bound.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace polycoord {

namespace {

// Frobenius norm of the pseudo-inverse of M, via singular values.  Throws if
// M is rank deficient, since the constant is then unbounded.
double pinv_frobenius_norm(const Eigen::MatrixXd& M) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0) throw std::invalid_argument("pinv_frobenius_norm: empty matrix");
  const double tol = sv(0) * 1e-12 + 1e-300;
  double sum = 0.0;
  for (int k = 0; k < sv.size(); ++k) {
    if (sv(k) <= tol) throw std::invalid_argument("pinv_frobenius_norm: rank-deficient matrix");
    sum += 1.0 / (sv(k) * sv(k));
  }
  return std::sqrt(sum);
}

void check_same_size(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": size mismatch");
}

Eigen::VectorXd offset_vector(const Polytope& base, const Pose2& pose) {
  return transform_base_polytope(base, pose).b;
}

}  // namespace

PolytopeConstant polytope_constant(const Eigen::MatrixXd& A_base) {
  if (A_base.rows() < A_base.cols()) {
    throw std::invalid_argument("polytope_constant: fewer halfspaces than dimensions");
  }
  return PolytopeConstant{std::sqrt(2.0) * pinv_frobenius_norm(A_base.transpose())};
}

double offset_gain(const Eigen::MatrixXd& A) { return pinv_frobenius_norm(A.transpose()); }

double dist_predicted_by_i(const Eigen::VectorXd& b_i_now, const Eigen::VectorXd& b_j_prev,
                           const Eigen::VectorXd& lambda_ij_prev,
                           const Eigen::VectorXd& lambda_ji_prev) {
  check_same_size(b_i_now, lambda_ij_prev, "dist_predicted_by_i: b_i/lambda_ij");
  check_same_size(b_j_prev, lambda_ji_prev, "dist_predicted_by_i: b_j/lambda_ji");
  return -b_i_now.dot(lambda_ij_prev) - b_j_prev.dot(lambda_ji_prev);
}

double dist_predicted_by_j(const Eigen::VectorXd& b_i_prev, const Eigen::VectorXd& b_j_now,
                           const Eigen::VectorXd& lambda_ij_prev,
                           const Eigen::VectorXd& lambda_ji_prev) {
  check_same_size(b_i_prev, lambda_ij_prev, "dist_predicted_by_j: b_i/lambda_ij");
  check_same_size(b_j_now, lambda_ji_prev, "dist_predicted_by_j: b_j/lambda_ji");
  return -b_i_prev.dot(lambda_ij_prev) - b_j_now.dot(lambda_ji_prev);
}

double prediction_error(double dist_pi, double dist_pj) { return std::abs(dist_pi - dist_pj); }

double prediction_error_bound(const Eigen::VectorXd& b_i_now, const Eigen::VectorXd& b_i_prev,
                              const Eigen::VectorXd& b_j_now, const Eigen::VectorXd& b_j_prev,
                              double c_i, double c_j) {
  check_same_size(b_i_now, b_i_prev, "prediction_error_bound: b_i");
  check_same_size(b_j_now, b_j_prev, "prediction_error_bound: b_j");
  if (c_i < 0.0 || c_j < 0.0) {
    throw std::invalid_argument("prediction_error_bound: negative constant");
  }
  return c_i * (b_i_now - b_i_prev).norm() + c_j * (b_j_now - b_j_prev).norm();
}

double max_offset_shift(const Polytope& base, const Pose2& pose, double dx, double dy, double dpsi,
                        int heading_grid) {
  if (dx < 0.0 || dy < 0.0 || dpsi < 0.0) {
    throw std::invalid_argument("max_offset_shift: negative reach");
  }
  if (heading_grid < 1) throw std::invalid_argument("max_offset_shift: heading_grid < 1");
  const Eigen::VectorXd b_ref = offset_vector(base, pose);
  double best = 0.0;
  // For a fixed heading the displacement norm is convex in the translation,
  // so the maximum over the xy box sits at one of its four corners.  The
  // heading interval is scanned densely.
  for (int g = 0; g < heading_grid; ++g) {
    const double frac = (heading_grid == 1) ? 0.0 : (2.0 * g / (heading_grid - 1) - 1.0);
    const double psi = pose.psi + frac * dpsi;
    for (int sx : {-1, 1}) {
      for (int sy : {-1, 1}) {
        const Pose2 moved{pose.x + sx * dx, pose.y + sy * dy, psi};
        best = std::max(best, (offset_vector(base, moved) - b_ref).norm());
      }
    }
  }
  return best;
}

double trivial_error_bound(const Polytope& base_i, const Pose2& pose_i,
                           const Eigen::Vector3d& reach_i, const Polytope& base_j,
                           const Pose2& pose_j, const Eigen::Vector3d& reach_j, double c_i,
                           double c_j) {
  if (c_i < 0.0 || c_j < 0.0) {
    throw std::invalid_argument("trivial_error_bound: negative constant");
  }
  return c_i * max_offset_shift(base_i, pose_i, reach_i(0), reach_i(1), reach_i(2)) +
         c_j * max_offset_shift(base_j, pose_j, reach_j(0), reach_j(1), reach_j(2));
}

double alpha_min(const Polytope& base, const Pose2& pose, double e_x, double e_y, double e_psi) {
  if (e_x < 0.0 || e_y < 0.0 || e_psi < 0.0) {
    throw std::invalid_argument("alpha_min: negative error magnitude");
  }
  const Eigen::VectorXd b_ref = offset_vector(base, pose);
  double best = std::numeric_limits<double>::infinity();
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      for (int sp : {-1, 1}) {
        const Pose2 moved{pose.x + sx * e_x, pose.y + sy * e_y, pose.psi + sp * e_psi};
        best = std::min(best, (offset_vector(base, moved) - b_ref).norm());
      }
    }
  }
  return best;
}

std::optional<double> normalization_ratio(const Eigen::VectorXd& b_now,
                                          const Eigen::VectorXd& b_prev, double alpha) {
  check_same_size(b_now, b_prev, "normalization_ratio: b");
  if (alpha < 0.0) throw std::invalid_argument("normalization_ratio: negative alpha");
  if (alpha == 0.0) return std::nullopt;
  return (b_now - b_prev).norm() / alpha;
}

}  // namespace polycoord
