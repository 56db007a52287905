#include "polycoord/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace polycoord {

namespace {
constexpr double kDetTol = 1e-10;          // near-parallel line pair rejection
constexpr double kFeasTol = 1e-9;          // halfspace feasibility slack
constexpr double kVertexMergeTol = 1e-7;   // duplicate vertex merging
}  // namespace

bool Polytope::contains(const Eigen::VectorXd& p, double tol) const {
  return ((A * p - b).array() <= tol).all();
}

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  double r = std::remainder(a, 2.0 * pi);  // (-pi, pi] up to the -pi edge
  if (r <= -pi) r += 2.0 * pi;
  return r;
}

Eigen::Matrix2d rotation_matrix(double psi) {
  const double c = std::cos(psi), s = std::sin(psi);
  Eigen::Matrix2d R;
  R << c, -s, s, c;
  return R;
}

Polytope box_polytope(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() != hi.size()) throw std::invalid_argument("box_polytope: size mismatch");
  const int n = static_cast<int>(lo.size());
  Polytope P;
  P.A = Eigen::MatrixXd::Zero(2 * n, n);
  P.b = Eigen::VectorXd::Zero(2 * n);
  for (int i = 0; i < n; ++i) {
    P.A(i, i) = 1.0;
    P.b(i) = hi(i);
    P.A(n + i, i) = -1.0;
    P.b(n + i) = -lo(i);
  }
  return P;
}

Polytope vehicle_polytope(const Pose2& pose, double h, double w) {
  if (h <= 0.0 || w <= 0.0) throw std::invalid_argument("vehicle_polytope: h and w must be positive");
  Polytope base;
  base.A = Eigen::MatrixXd(4, 2);
  base.A << 1, 0, 0, 1, -1, 0, 0, -1;
  base.b = Eigen::VectorXd(4);
  base.b << h / 2.0, w / 2.0, h / 2.0, w / 2.0;
  return transform_base_polytope(base, pose);
}

Polytope transform_base_polytope(const Polytope& base, const Pose2& pose) {
  if (base.dim() != 2) throw std::invalid_argument("transform_base_polytope: base must be 2-D");
  const Eigen::Matrix2d Rt = rotation_matrix(pose.psi).transpose();
  Polytope P;
  P.A = base.A * Rt;
  P.b = base.b + P.A * Eigen::Vector2d(pose.x, pose.y);
  return P;
}

Polytope polytope_from_ccw_vertices(const std::vector<Eigen::Vector2d>& ccw) {
  const int n = static_cast<int>(ccw.size());
  if (n < 3) throw std::invalid_argument("polytope_from_ccw_vertices: need at least 3 vertices");
  Polytope P;
  P.A = Eigen::MatrixXd(n, 2);
  P.b = Eigen::VectorXd(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d e = ccw[(i + 1) % n] - ccw[i];
    if (e.norm() < 1e-12)
      throw std::invalid_argument("polytope_from_ccw_vertices: repeated vertex");
    const Eigen::Vector2d nrm = Eigen::Vector2d(e.y(), -e.x()).normalized();
    P.A.row(i) = nrm.transpose();
    P.b(i) = nrm.dot(ccw[i]);
  }
  // Every vertex must satisfy every halfspace, otherwise the ordering was
  // not a CCW convex hull.
  for (const Eigen::Vector2d& v : ccw) {
    if (((P.A * v - P.b).array() > 1e-9).any())
      throw std::invalid_argument("polytope_from_ccw_vertices: vertices not convex CCW");
  }
  return P;
}

bool is_bounded_2d(const Polytope& P, double tol) {
  if (P.dim() != 2) throw std::invalid_argument("is_bounded_2d: dim != 2");
  std::vector<double> angles;
  angles.reserve(P.num_halfspaces());
  for (int i = 0; i < P.num_halfspaces(); ++i) {
    const double n = P.A.row(i).norm();
    if (n < tol) continue;
    angles.push_back(std::atan2(P.A(i, 1), P.A(i, 0)));
  }
  if (angles.size() < 3) return false;
  std::sort(angles.begin(), angles.end());
  constexpr double pi = std::numbers::pi;
  double max_gap = angles.front() + 2.0 * pi - angles.back();
  for (size_t i = 1; i < angles.size(); ++i) max_gap = std::max(max_gap, angles[i] - angles[i - 1]);
  return max_gap < pi - 1e-12;
}

std::vector<Eigen::Vector2d> enumerate_vertices(const Polytope& P) {
  if (P.dim() != 2) throw std::invalid_argument("enumerate_vertices: dim != 2");
  if (!is_bounded_2d(P)) throw std::invalid_argument("enumerate_vertices: unbounded polytope");

  const int m = P.num_halfspaces();
  std::vector<Eigen::Vector2d> verts;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      Eigen::Matrix2d M;
      M.row(0) = P.A.row(i);
      M.row(1) = P.A.row(j);
      const double scale = P.A.row(i).norm() * P.A.row(j).norm();
      const double det = M.determinant();
      if (std::abs(det) <= kDetTol * std::max(1.0, scale)) continue;
      const Eigen::Vector2d v = M.inverse() * Eigen::Vector2d(P.b(i), P.b(j));
      const double feas_scale = std::max(1.0, v.norm());
      if (!P.contains(v, kFeasTol * feas_scale)) continue;
      bool dup = false;
      for (const auto& u : verts) {
        if ((u - v).norm() <= kVertexMergeTol * feas_scale) {
          dup = true;
          break;
        }
      }
      if (!dup) verts.push_back(v);
    }
  }
  if (verts.empty()) return verts;

  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& v : verts) c += v;
  c /= static_cast<double>(verts.size());
  std::sort(verts.begin(), verts.end(), [&c](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return std::atan2(a.y() - c.y(), a.x() - c.x()) < std::atan2(b.y() - c.y(), b.x() - c.x());
  });
  return verts;
}

double polygon_area(const std::vector<Eigen::Vector2d>& v) {
  double s = 0.0;
  const size_t n = v.size();
  for (size_t i = 0; i < n; ++i) {
    const auto& a = v[i];
    const auto& b = v[(i + 1) % n];
    s += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * s;
}

double segment_segment_distance(const Eigen::Vector2d& a0, const Eigen::Vector2d& a1,
                                const Eigen::Vector2d& b0, const Eigen::Vector2d& b1) {
  // Proper crossing means distance zero.
  const auto orient = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Eigen::Vector2d& r) {
    return (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
  };
  const double o1 = orient(a0, a1, b0), o2 = orient(a0, a1, b1);
  const double o3 = orient(b0, b1, a0), o4 = orient(b0, b1, a1);
  if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0)
    return 0.0;

  const auto point_seg = [](const Eigen::Vector2d& p, const Eigen::Vector2d& s0, const Eigen::Vector2d& s1) {
    const Eigen::Vector2d d = s1 - s0;
    const double len2 = d.squaredNorm();
    if (len2 == 0.0) return (p - s0).norm();
    const double t = std::clamp((p - s0).dot(d) / len2, 0.0, 1.0);
    return (p - (s0 + t * d)).norm();
  };
  return std::min({point_seg(a0, b0, b1), point_seg(a1, b0, b1), point_seg(b0, a0, a1), point_seg(b1, a0, a1)});
}

double oracle_distance(const Polytope& P1, const Polytope& P2) {
  const auto v1 = enumerate_vertices(P1);
  const auto v2 = enumerate_vertices(P2);
  if (v1.empty() || v2.empty()) throw std::invalid_argument("oracle_distance: empty polytope");

  for (const auto& v : v1)
    if (P2.contains(v, 1e-12)) return 0.0;
  for (const auto& v : v2)
    if (P1.contains(v, 1e-12)) return 0.0;

  const auto edges = [](const std::vector<Eigen::Vector2d>& v) {
    std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>> e;
    if (v.size() == 1) {
      e.emplace_back(v[0], v[0]);
    } else {
      for (size_t i = 0; i < v.size(); ++i) e.emplace_back(v[i], v[(i + 1) % v.size()]);
    }
    return e;
  };
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [a0, a1] : edges(v1))
    for (const auto& [b0, b1] : edges(v2))
      best = std::min(best, segment_segment_distance(a0, a1, b0, b1));
  return best;
}

}  // namespace polycoord
