#include "polycoord/dual_distance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polycoord {

namespace {

// Internal representation: unit rows, coordinates shifted so the pair sits
// near the origin. Row scaling maps multipliers by lambda = lambda_hat / |a_i|
// and leaves the objective value invariant; the shift leaves multipliers and
// the objective invariant and is undone on the witness points.
struct ScaledPair {
  Eigen::MatrixXd A1, A2;
  Eigen::VectorXd b1, b2;
  Eigen::VectorXd norms1, norms2;
  Eigen::VectorXd shift;
};

ScaledPair scale_problem(const Polytope& P1, const Polytope& P2) {
  ScaledPair sp;
  const int n = P1.dim();
  const auto scale_one = [&](const Polytope& P, Eigen::MatrixXd& A, Eigen::VectorXd& b,
                             Eigen::VectorXd& norms) {
    const int m = P.num_halfspaces();
    A.resize(m, n);
    b.resize(m);
    norms.resize(m);
    for (int i = 0; i < m; ++i) {
      const double nn = P.A.row(i).norm();
      if (nn <= 0.0) throw std::invalid_argument("solve_dual_distance: zero row in A");
      norms(i) = nn;
      A.row(i) = P.A.row(i) / nn;
      b(i) = P.b(i) / nn;
    }
  };
  scale_one(P1, sp.A1, sp.b1, sp.norms1);
  scale_one(P2, sp.A2, sp.b2, sp.norms2);

  // Least-squares "center" of the stacked system keeps offsets small, which
  // conditions the first-order iteration far from the origin.
  Eigen::MatrixXd As(sp.A1.rows() + sp.A2.rows(), n);
  As << sp.A1, sp.A2;
  Eigen::VectorXd bs(As.rows());
  bs << sp.b1, sp.b2;
  sp.shift = (As.transpose() * As).ldlt().solve(As.transpose() * bs);
  sp.b1 -= sp.A1 * sp.shift;
  sp.b2 -= sp.A2 * sp.shift;
  return sp;
}

struct Iterate {
  Eigen::VectorXd l1, l2, s;  // primal block of the conic program
  Eigen::VectorXd y1, y2;     // multipliers of the two equality blocks
};

void project_cone(Iterate& it) {
  it.l1 = it.l1.cwiseMax(0.0);
  it.l2 = it.l2.cwiseMax(0.0);
  const double ns = it.s.norm();
  if (ns > 1.0) it.s /= ns;
}

struct Residuals {
  double eq = 0.0;    // |Kx|_inf
  double stat = 0.0;  // |x - proj(x - (c + K^T y))|_inf
  double max() const { return std::max(eq, stat); }
};

Residuals residuals(const ScaledPair& sp, const Iterate& it) {
  Residuals r;
  const Eigen::VectorXd r1 = sp.A1.transpose() * it.l1 + it.s;
  const Eigen::VectorXd r2 = sp.A2.transpose() * it.l2 - it.s;
  r.eq = std::max(r1.lpNorm<Eigen::Infinity>(), r2.lpNorm<Eigen::Infinity>());

  Iterate trial = it;
  trial.l1 -= (sp.b1 + sp.A1 * it.y1).eval();
  trial.l2 -= (sp.b2 + sp.A2 * it.y2).eval();
  trial.s -= (it.y1 - it.y2).eval();
  project_cone(trial);
  r.stat = std::max({(trial.l1 - it.l1).lpNorm<Eigen::Infinity>(),
                     (trial.l2 - it.l2).lpNorm<Eigen::Infinity>(),
                     (trial.s - it.s).lpNorm<Eigen::Infinity>()});
  return r;
}

double objective(const ScaledPair& sp, const Iterate& it) {
  return -sp.b1.dot(it.l1) - sp.b2.dot(it.l2);
}

double operator_norm(const ScaledPair& sp) {
  const int m1 = static_cast<int>(sp.A1.rows());
  const int m2 = static_cast<int>(sp.A2.rows());
  const int n = static_cast<int>(sp.A1.cols());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m1 + m2 + n).normalized();
  double norm2 = 1.0;
  for (int k = 0; k < 30; ++k) {
    const Eigen::VectorXd u1 = sp.A1.transpose() * v.head(m1) + v.tail(n);
    const Eigen::VectorXd u2 = sp.A2.transpose() * v.segment(m1, m2) - v.tail(n);
    Eigen::VectorXd w(m1 + m2 + n);
    w.head(m1) = sp.A1 * u1;
    w.segment(m1, m2) = sp.A2 * u2;
    w.tail(n) = u1 - u2;
    norm2 = w.norm();
    if (norm2 <= 0.0) break;
    v = w / norm2;
  }
  return std::sqrt(std::max(norm2, 1e-12));
}

// Tries to certify global optimality from an explicit active-set guess:
// restrict to the given rows, move along the kernel of the equality block to
// put s on the unit sphere with maximal objective, then reconstruct primal
// witness points. Weak duality sandwiches the value, so success is a proof
// regardless of how the guess was produced.
bool polish_with_sets(const ScaledPair& sp, const std::vector<int>& i1,
                      const std::vector<int>& i2, double tol, DualSolution& out) {
  const int m1 = static_cast<int>(sp.A1.rows());
  const int m2 = static_cast<int>(sp.A2.rows());
  const int n = static_cast<int>(sp.A1.cols());

  if (i1.empty() || i2.empty()) return false;

  const int q = static_cast<int>(i1.size() + i2.size()) + n;
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(2 * n, q);
  Eigen::VectorXd bt = Eigen::VectorXd::Zero(q);
  for (size_t k = 0; k < i1.size(); ++k) {
    E.block(0, static_cast<int>(k), n, 1) = sp.A1.row(i1[k]).transpose();
    bt(static_cast<int>(k)) = sp.b1(i1[k]);
  }
  for (size_t k = 0; k < i2.size(); ++k) {
    const int col = static_cast<int>(i1.size() + k);
    E.block(n, col, n, 1) = sp.A2.row(i2[k]).transpose();
    bt(col) = sp.b2(i2[k]);
  }
  const int scol = static_cast<int>(i1.size() + i2.size());
  E.block(0, scol, n, n) = Eigen::MatrixXd::Identity(n, n);
  E.block(n, scol, n, n) = -Eigen::MatrixXd::Identity(n, n);

  Eigen::FullPivLU<Eigen::MatrixXd> lu(E);
  lu.setThreshold(1e-10);
  if (lu.dimensionOfKernel() == 0) return false;
  const Eigen::MatrixXd N = lu.kernel();

  const Eigen::VectorXd qvec = -N.transpose() * bt;
  const Eigen::MatrixXd SN = N.bottomRows(n);
  const Eigen::MatrixXd M = SN.transpose() * SN;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  if (es.info() != Eigen::Success) return false;
  const double max_eig = es.eigenvalues().maxCoeff();
  if (max_eig <= 1e-14) return false;

  double value = 0.0;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(N.cols());
  {
    Eigen::VectorXd g(N.cols());
    double gnorm2 = 0.0;
    for (int i = 0; i < N.cols(); ++i) {
      const double d = es.eigenvalues()(i);
      const double qi = es.eigenvectors().col(i).dot(qvec);
      if (d > 1e-10 * max_eig) {
        g(i) = qi / std::sqrt(d);
        gnorm2 += g(i) * g(i);
      } else {
        g(i) = 0.0;
        // Objective movable along a direction that keeps |s| fixed means the
        // active-set guess cannot pin the optimum.
        if (std::abs(qi) > 1e-8 * std::max(1.0, qvec.norm())) return false;
      }
    }
    value = std::sqrt(gnorm2);
    if (value <= 1e-12) return false;
    for (int i = 0; i < N.cols(); ++i) {
      const double d = es.eigenvalues()(i);
      if (d > 1e-10 * max_eig) z += es.eigenvectors().col(i) * (g(i) / (std::sqrt(d) * value));
    }
  }

  const Eigen::VectorXd u = N * z;
  Eigen::VectorXd l1 = Eigen::VectorXd::Zero(m1);
  Eigen::VectorXd l2 = Eigen::VectorXd::Zero(m2);
  for (size_t k = 0; k < i1.size(); ++k) l1(i1[k]) = u(static_cast<int>(k));
  for (size_t k = 0; k < i2.size(); ++k) l2(i2[k]) = u(static_cast<int>(i1.size() + k));
  Eigen::VectorXd s = u.segment(scol, n);
  if (l1.minCoeff() < -1e-9 || l2.minCoeff() < -1e-9) return false;
  l1 = l1.cwiseMax(0.0);
  l2 = l2.cwiseMax(0.0);

  const Eigen::VectorXd r1 = sp.A1.transpose() * l1 + s;
  const Eigen::VectorXd r2 = sp.A2.transpose() * l2 - s;
  const double eq_res = std::max(r1.lpNorm<Eigen::Infinity>(), r2.lpNorm<Eigen::Infinity>());
  if (eq_res > 10.0 * tol) return false;
  if (std::abs(s.norm() - 1.0) > 10.0 * tol) return false;
  const double obj = -sp.b1.dot(l1) - sp.b2.dot(l2);
  if (obj <= 0.0) return false;

  // Primal witness reconstruction: active faces are tight and the points are
  // exactly obj apart along s. Full feasibility then certifies optimality.
  const int rows = static_cast<int>(i1.size() + i2.size()) + n;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(rows, 2 * n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rows);
  for (size_t k = 0; k < i1.size(); ++k) {
    W.block(static_cast<int>(k), 0, 1, n) = sp.A1.row(i1[k]);
    rhs(static_cast<int>(k)) = sp.b1(i1[k]);
  }
  for (size_t k = 0; k < i2.size(); ++k) {
    const int r = static_cast<int>(i1.size() + k);
    W.block(r, n, 1, n) = sp.A2.row(i2[k]);
    rhs(r) = sp.b2(i2[k]);
  }
  W.block(rows - n, 0, n, n) = Eigen::MatrixXd::Identity(n, n);
  W.block(rows - n, n, n, n) = -Eigen::MatrixXd::Identity(n, n);
  rhs.tail(n) = obj * s;

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(W);
  const Eigen::VectorXd pq = cod.solve(rhs);
  if ((W * pq - rhs).lpNorm<Eigen::Infinity>() > 1e-7 * std::max(1.0, obj)) return false;
  const Eigen::VectorXd p1 = pq.head(n), p2 = pq.tail(n);
  const double feas_tol = 1e-8 * std::max(1.0, std::max(p1.norm(), p2.norm()));
  if (((sp.A1 * p1 - sp.b1).array() > feas_tol).any()) return false;
  if (((sp.A2 * p2 - sp.b2).array() > feas_tol).any()) return false;
  if (std::abs((p1 - p2).norm() - obj) > 1e-7 * std::max(1.0, obj)) return false;

  out.distance = obj;
  out.lambda_12 = l1.cwiseQuotient(sp.norms1);
  out.lambda_21 = l2.cwiseQuotient(sp.norms2);
  out.s = s;
  out.status = DualStatus::Optimal;
  out.kkt_residual = eq_res;
  out.witness_1 = p1 + sp.shift;
  out.witness_2 = p2 + sp.shift;
  return true;
}

// Guesses the active rows from the multiplier mass of the current iterate.
bool polish_optimal(const ScaledPair& sp, const Iterate& it, double activity_threshold,
                    double tol, DualSolution& out) {
  const int m1 = static_cast<int>(sp.A1.rows());
  const int m2 = static_cast<int>(sp.A2.rows());
  std::vector<int> i1, i2;
  const double t1 = activity_threshold * std::max(1.0, it.l1.lpNorm<Eigen::Infinity>());
  const double t2 = activity_threshold * std::max(1.0, it.l2.lpNorm<Eigen::Infinity>());
  for (int i = 0; i < m1; ++i)
    if (it.l1(i) > t1) i1.push_back(i);
  for (int i = 0; i < m2; ++i)
    if (it.l2(i) > t2) i2.push_back(i);
  return polish_with_sets(sp, i1, i2, tol, out);
}

// Fallback for degenerate geometry (e.g. nearly parallel rows splitting the
// multiplier mass, where the mass-based guess never pins the optimum): read
// the primal points off the equality multipliers, collect the rows tight at
// those points, and try every subset of up to n rows per side. Certification
// inside polish_with_sets is exact, so extra candidates can only find proofs.
bool polish_from_witness(const ScaledPair& sp, const Iterate& it, double tol, DualSolution& out) {
  const int n = static_cast<int>(sp.A1.cols());
  const Eigen::VectorXd p1 = -it.y1;
  const Eigen::VectorXd p2 = -it.y2;
  const auto tight_rows = [](const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                             const Eigen::VectorXd& p, double tol_abs) {
    std::vector<int> rows;
    const Eigen::VectorXd slack = b - A * p;
    for (int i = 0; i < A.rows(); ++i)
      if (std::abs(slack(i)) <= tol_abs) rows.push_back(i);
    return rows;
  };
  const auto subsets_up_to = [n](const std::vector<int>& rows) {
    std::vector<std::vector<int>> sets;
    const int m = static_cast<int>(rows.size());
    for (unsigned mask = 1; mask < (1u << m); ++mask) {
      if (__builtin_popcount(mask) > n) continue;
      std::vector<int> set;
      for (int i = 0; i < m; ++i)
        if (mask & (1u << i)) set.push_back(rows[i]);
      sets.push_back(std::move(set));
    }
    return sets;
  };
  for (const double th : {1e-7, 1e-4}) {
    const std::vector<int> t1 =
        tight_rows(sp.A1, sp.b1, p1, th * std::max(1.0, p1.norm()));
    const std::vector<int> t2 =
        tight_rows(sp.A2, sp.b2, p2, th * std::max(1.0, p2.norm()));
    if (t1.empty() || t2.empty() || t1.size() > 6 || t2.size() > 6) continue;
    for (const auto& s1 : subsets_up_to(t1))
      for (const auto& s2 : subsets_up_to(t2))
        if (polish_with_sets(sp, s1, s2, tol, out)) return true;
  }
  return false;
}

// An intersection is certified by a common feasible point, recovered from the
// equality multipliers (they converge to the negated primal points).
bool polish_intersecting(const ScaledPair& sp, const Iterate& it, DualSolution& out) {
  const Eigen::VectorXd p1 = -it.y1;
  const Eigen::VectorXd p2 = -it.y2;
  if ((p1 - p2).norm() > 1e-7) return false;
  const Eigen::VectorXd p = 0.5 * (p1 + p2);
  const double feas_tol = 1e-8 * std::max(1.0, p.norm());
  if (((sp.A1 * p - sp.b1).array() > feas_tol).any()) return false;
  if (((sp.A2 * p - sp.b2).array() > feas_tol).any()) return false;

  out.distance = 0.0;
  out.lambda_12 = Eigen::VectorXd::Zero(sp.A1.rows());
  out.lambda_21 = Eigen::VectorXd::Zero(sp.A2.rows());
  out.s = Eigen::VectorXd::Zero(sp.A1.cols());
  out.status = DualStatus::Intersecting;
  out.kkt_residual = (p1 - p2).lpNorm<Eigen::Infinity>();
  out.witness_1 = p + sp.shift;
  out.witness_2 = p + sp.shift;
  return true;
}

}  // namespace

DualSolution solve_dual_distance(const Polytope& P1, const Polytope& P2,
                                 const DualSolution* warm_start, const DualSolverOptions& opts) {
  if (P1.dim() != P2.dim()) throw std::invalid_argument("solve_dual_distance: dimension mismatch");
  if (P1.num_halfspaces() == 0 || P2.num_halfspaces() == 0)
    throw std::invalid_argument("solve_dual_distance: empty halfspace list");

  const ScaledPair sp = scale_problem(P1, P2);
  const int m1 = static_cast<int>(sp.A1.rows());
  const int m2 = static_cast<int>(sp.A2.rows());
  const int n = static_cast<int>(sp.A1.cols());

  Iterate it;
  it.l1 = Eigen::VectorXd::Zero(m1);
  it.l2 = Eigen::VectorXd::Zero(m2);
  it.s = Eigen::VectorXd::Zero(n);
  it.y1 = Eigen::VectorXd::Zero(n);
  it.y2 = Eigen::VectorXd::Zero(n);
  if (warm_start != nullptr && warm_start->lambda_12.size() == m1 &&
      warm_start->lambda_21.size() == m2 && warm_start->s.size() == n) {
    it.l1 = warm_start->lambda_12.cwiseProduct(sp.norms1).cwiseMax(0.0);
    it.l2 = warm_start->lambda_21.cwiseProduct(sp.norms2).cwiseMax(0.0);
    it.s = warm_start->s;
    if (warm_start->witness_1.size() == n) it.y1 = -(warm_start->witness_1 - sp.shift);
    if (warm_start->witness_2.size() == n) it.y2 = -(warm_start->witness_2 - sp.shift);
    project_cone(it);
  }

  const double L = operator_norm(sp);
  double tau = 0.95 / L, sigma = 0.95 / L;

  DualSolution out;
  out.lambda_12 = Eigen::VectorXd::Zero(m1);
  out.lambda_21 = Eigen::VectorXd::Zero(m2);
  out.s = Eigen::VectorXd::Zero(n);

  const auto try_polish = [&](const Iterate& cur, int iter) {
    const double obj = objective(sp, cur);
    if (obj <= 1e-7) {
      if (polish_intersecting(sp, cur, out)) {
        out.iterations = iter;
        return true;
      }
    }
    for (const double th : {1e-6, 1e-3}) {
      if (polish_optimal(sp, cur, th, opts.tolerance, out)) {
        out.iterations = iter;
        return true;
      }
    }
    if (obj > 1e-7 && polish_from_witness(sp, cur, opts.tolerance, out)) {
      out.iterations = iter;
      return true;
    }
    if (obj > 1e-7) {
      // The near-zero-objective intersecting case may still be certifiable
      // even when the objective estimate is noisy.
      if (polish_intersecting(sp, cur, out)) {
        out.iterations = iter;
        return true;
      }
    }
    return false;
  };

  Residuals res;
  int rebalances = 0;
  for (int k = 0; k < opts.max_iterations; ++k) {
    Iterate next = it;
    next.l1 -= tau * (sp.b1 + sp.A1 * it.y1);
    next.l2 -= tau * (sp.b2 + sp.A2 * it.y2);
    next.s -= tau * (it.y1 - it.y2);
    project_cone(next);
    const Eigen::VectorXd e1 =
        sp.A1.transpose() * (2.0 * next.l1 - it.l1) + (2.0 * next.s - it.s);
    const Eigen::VectorXd e2 =
        sp.A2.transpose() * (2.0 * next.l2 - it.l2) - (2.0 * next.s - it.s);
    next.y1 = it.y1 + sigma * e1;
    next.y2 = it.y2 + sigma * e2;
    it = next;

    const bool check = (k % 25 == 24) || k == opts.max_iterations - 1;
    if (!check) continue;
    res = residuals(sp, it);
    if (res.max() <= opts.tolerance || (k % 250 == 249)) {
      if (try_polish(it, k + 1)) return out;
      if (res.max() <= opts.tolerance) break;
    }
    if ((k == 2000 || k == 3500) && res.max() > 1e3 * opts.tolerance && rebalances < 2) {
      // Rebalance the step split while keeping tau * sigma fixed.
      if (res.eq > 10.0 * res.stat) {
        sigma *= 2.0;
        tau /= 2.0;
      } else if (res.stat > 10.0 * res.eq) {
        tau *= 2.0;
        sigma /= 2.0;
      }
      ++rebalances;
    }
  }

  // Not certified: report the raw iterate.
  res = residuals(sp, it);
  it.l1 = it.l1.cwiseMax(0.0);
  it.l2 = it.l2.cwiseMax(0.0);
  const double obj = objective(sp, it);
  out.distance = std::max(obj, 0.0);
  out.lambda_12 = it.l1.cwiseQuotient(sp.norms1);
  out.lambda_21 = it.l2.cwiseQuotient(sp.norms2);
  out.s = it.s;
  out.iterations = opts.max_iterations;
  out.kkt_residual = res.max();
  out.witness_1 = -it.y1 + sp.shift;
  out.witness_2 = -it.y2 + sp.shift;
  if (res.max() <= 1e2 * opts.tolerance) {
    out.status = obj > 1e-7 ? DualStatus::Optimal : DualStatus::Intersecting;
    if (out.status == DualStatus::Intersecting) out.distance = 0.0;
  } else {
    out.status = DualStatus::Failed;
  }
  return out;
}

CertificateReport feasibility_certificate(const Polytope& P1, const Polytope& P2,
                                          const Eigen::VectorXd& lambda_12,
                                          const Eigen::VectorXd& lambda_21,
                                          const Eigen::VectorXd& s, double d_min, double tol) {
  if (lambda_12.size() != P1.num_halfspaces() || lambda_21.size() != P2.num_halfspaces() ||
      s.size() != P1.dim() || P1.dim() != P2.dim())
    throw std::invalid_argument("feasibility_certificate: dimension mismatch");
  CertificateReport r;
  const double value = -P1.b.dot(lambda_12) - P2.b.dot(lambda_21);
  r.distance_shortfall = std::max(0.0, d_min - value);
  r.eq1_residual = (P1.A.transpose() * lambda_12 + s).lpNorm<Eigen::Infinity>();
  r.eq2_residual = (P2.A.transpose() * lambda_21 - s).lpNorm<Eigen::Infinity>();
  const double lmin = std::min(lambda_12.size() ? lambda_12.minCoeff() : 0.0,
                               lambda_21.size() ? lambda_21.minCoeff() : 0.0);
  r.lambda_negativity = std::max(0.0, -lmin);
  r.s_norm_excess = std::max(0.0, s.norm() - 1.0);
  r.feasible = r.distance_shortfall <= tol && r.eq1_residual <= tol && r.eq2_residual <= tol &&
               r.lambda_negativity <= tol && r.s_norm_excess <= tol;
  return r;
}

Hyperplane separating_hyperplane(const Polytope& P1, const DualSolution& sol) {
  if (sol.status != DualStatus::Optimal)
    throw std::logic_error("separating_hyperplane: requires an Optimal solution");
  if (sol.s.size() != 2) throw std::invalid_argument("separating_hyperplane: 2-D only");
  Hyperplane h;
  h.normal = Eigen::Vector2d(sol.s(0), sol.s(1)).normalized();
  const double c1 = -P1.b.dot(sol.lambda_12);
  h.offset = c1 - 0.5 * sol.distance;
  return h;
}

std::pair<Hyperplane, Hyperplane> supporting_hyperplanes(const Polytope& P1, const Polytope& P2,
                                                         const DualSolution& sol) {
  if (sol.status != DualStatus::Optimal)
    throw std::logic_error("supporting_hyperplanes: requires an Optimal solution");
  if (sol.s.size() != 2) throw std::invalid_argument("supporting_hyperplanes: 2-D only");
  const Eigen::Vector2d nrm = Eigen::Vector2d(sol.s(0), sol.s(1)).normalized();
  Hyperplane h1{nrm, -P1.b.dot(sol.lambda_12)};
  Hyperplane h2{nrm, P2.b.dot(sol.lambda_21)};
  return {h1, h2};
}

}  // namespace polycoord
