#pragma once

#include <utility>

#include "polycoord/geometry.hpp"

namespace polycoord {

enum class DualStatus { Optimal, Intersecting, Failed };

// Solution of the conic program
//   max  -b1.l12 - b2.l21
//   s.t. A1^T l12 + s = 0,  A2^T l21 - s = 0,  |s|_2 <= 1,  l >= 0
// whose optimal value equals the minimum distance between {A1 p <= b1} and
// {A2 p <= b2} when they are disjoint, and 0 when they intersect.
struct DualSolution {
  double distance = 0.0;
  Eigen::VectorXd lambda_12;  // one multiplier per row of A1
  Eigen::VectorXd lambda_21;  // one multiplier per row of A2
  Eigen::VectorXd s;          // shared direction, |s|_2 <= 1
  DualStatus status = DualStatus::Failed;
  int iterations = 0;
  double kkt_residual = 0.0;
  // Closest points (valid when status == Optimal; a common point when the
  // solver certified an intersection). Also reused for warm starting.
  Eigen::VectorXd witness_1;
  Eigen::VectorXd witness_2;
};

struct DualSolverOptions {
  int max_iterations = 5000;
  double tolerance = 1e-9;
};

// Dimension-agnostic (2-D and 3-D are exercised in tests). Throws
// std::invalid_argument on inconsistent dimensions.
DualSolution solve_dual_distance(const Polytope& P1, const Polytope& P2,
                                 const DualSolution* warm_start = nullptr,
                                 const DualSolverOptions& opts = {});

// Per-condition residuals of a candidate certificate: feasible means every
// residual is within tol, i.e. (l12, l21, s) proves distance >= d_min.
struct CertificateReport {
  bool feasible = false;
  double distance_shortfall = 0.0;  // max(0, d_min - (-b1.l12 - b2.l21))
  double eq1_residual = 0.0;        // |A1^T l12 + s|_inf
  double eq2_residual = 0.0;        // |A2^T l21 - s|_inf
  double lambda_negativity = 0.0;   // max(0, -min_i l_i)
  double s_norm_excess = 0.0;       // max(0, |s|_2 - 1)
};

CertificateReport feasibility_certificate(const Polytope& P1, const Polytope& P2,
                                          const Eigen::VectorXd& lambda_12,
                                          const Eigen::VectorXd& lambda_21,
                                          const Eigen::VectorXd& s, double d_min,
                                          double tol = 1e-7);

// Hyperplane strictly between the two polytopes (2-D, status Optimal).
// P1 lies in {s.p >= offset}, P2 in {s.p <= offset}.
Hyperplane separating_hyperplane(const Polytope& P1, const DualSolution& sol);

// Supporting hyperplanes of P1 and P2 orthogonal to s; the offset gap equals
// the distance. P1 touches the first plane from {s.p >= c1}, P2 touches the
// second from {s.p <= c2}, with c1 - c2 = distance.
std::pair<Hyperplane, Hyperplane> supporting_hyperplanes(const Polytope& P1, const Polytope& P2,
                                                         const DualSolution& sol);

}  // namespace polycoord
