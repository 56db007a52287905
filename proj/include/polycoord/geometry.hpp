#pragma once

#include <Eigen/Dense>
#include <vector>

namespace polycoord {

// Convex polytope in halfspace form {p : A p <= b}.
struct Polytope {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  int dim() const { return static_cast<int>(A.cols()); }
  int num_halfspaces() const { return static_cast<int>(A.rows()); }
  bool contains(const Eigen::VectorXd& p, double tol = 1e-9) const;
};

// Planar pose. wrap_angle maps any angle into (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

// {p : normal . p = offset}, normal has unit length.
struct Hyperplane {
  Eigen::Vector2d normal;
  double offset = 0.0;
};

double wrap_angle(double a);

Eigen::Matrix2d rotation_matrix(double psi);

// Axis-aligned box [lo, hi] as a polytope.
Polytope box_polytope(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

// Body rectangle of length h (along heading) and width w placed at a pose.
Polytope vehicle_polytope(const Pose2& pose, double h, double w);

// Base shape, described in its own body frame, placed at a pose.
Polytope transform_base_polytope(const Polytope& base, const Pose2& pose);

// Halfspace form of the convex polygon with the given CCW vertex list.
// Throws std::invalid_argument for fewer than 3 vertices, repeated points,
// or a non-convex (including CW) ordering.
Polytope polytope_from_ccw_vertices(const std::vector<Eigen::Vector2d>& ccw);

// True iff the outward normals positively span the plane, i.e. the largest
// angular gap between consecutive normals is below pi. 2-D only.
bool is_bounded_2d(const Polytope& P, double tol = 1e-10);

// CCW vertex list of a bounded 2-D polytope; empty if infeasible.
// Throws std::invalid_argument for unbounded input or dim != 2.
std::vector<Eigen::Vector2d> enumerate_vertices(const Polytope& P);

// Signed shoelace area, positive for CCW input.
double polygon_area(const std::vector<Eigen::Vector2d>& ccw_vertices);

double segment_segment_distance(const Eigen::Vector2d& a0, const Eigen::Vector2d& a1,
                                const Eigen::Vector2d& b0, const Eigen::Vector2d& b1);

// Reference minimum distance between two bounded 2-D polytopes, 0 when they
// intersect or touch. Vertex/edge based and fully independent of the dual
// solver so the two routes can check each other.
double oracle_distance(const Polytope& P1, const Polytope& P2);

}  // namespace polycoord
