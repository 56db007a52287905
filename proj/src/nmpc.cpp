#include "polycoord/nmpc.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace polycoord {
namespace {

constexpr double kViolationTol = 1e-4;  // converged when residuals fall below this
// A separation violation only counts as infeasibility once it exceeds the
// safety margin by this much, i.e. once it eats into d_min itself.  The margin
// is the planner's own slack for stale neighbor information, so violations
// inside it still certify the real minimum distance.
constexpr double kInfeasibleViolation = 5e-2;
constexpr double kSeparationWeightCap = 1e6;
constexpr int kMaxPenaltyRounds = 50;
constexpr int kMaxInnerIterations = 200;
constexpr int kMaxCentralSweeps = 40;
constexpr int kMaxCentralInnerIterations = 40;

Eigen::Matrix2d rot(double psi) {
  const double c = std::cos(psi), s = std::sin(psi);
  Eigen::Matrix2d R;
  R << c, -s, s, c;
  return R;
}

Eigen::Matrix2d rot_deriv(double psi) {
  const double c = std::cos(psi), s = std::sin(psi);
  Eigen::Matrix2d D;
  D << -s, -c, c, -s;
  return D;
}

// Projects a stacked input vector onto the box and rate constraints by a
// forward pass: each step is clamped into the window reachable from the
// previous (already clamped) step.
void clamp_inputs(const Eigen::VectorXd& u_min, const Eigen::VectorXd& u_max,
                  const Eigen::VectorXd& du_step, const Eigen::VectorXd& u_prev, int N,
                  Eigen::VectorXd& U) {
  const int nu = static_cast<int>(u_min.size());
  Eigen::VectorXd anchor = u_prev;
  for (int k = 0; k < N; ++k) {
    for (int c = 0; c < nu; ++c) {
      const double lo = std::max(u_min(c), anchor(c) - du_step(c));
      const double hi = std::min(u_max(c), anchor(c) + du_step(c));
      double& v = U(k * nu + c);
      v = hi < lo ? 0.5 * (lo + hi) : std::clamp(v, lo, hi);
    }
    anchor = U.segment(k * nu, nu);
  }
}

void rollout_states(const Model& m, const Eigen::VectorXd& z0, const Eigen::VectorXd& U, double dt,
                    int N, std::vector<Eigen::VectorXd>& states) {
  const int nu = m.nu();
  states.assign(static_cast<size_t>(N) + 1, z0);
  for (int k = 0; k < N; ++k) states[k + 1] = m.step(states[k], U.segment(k * nu, nu), dt);
}

// Rollout plus sensitivities of every state with respect to the stacked
// inputs; the sensitivity columns live in [col0, col0 + N*nu) of a matrix
// with `nvar` columns (so the same routine serves the joint solver).
void rollout_sensitivities(const Model& m, const Eigen::VectorXd& z0, const Eigen::VectorXd& U,
                           double dt, int N, int nvar, int col0,
                           std::vector<Eigen::VectorXd>& states,
                           std::vector<Eigen::MatrixXd>& sens) {
  const int nx = m.nx(), nu = m.nu();
  states.assign(static_cast<size_t>(N) + 1, z0);
  sens.assign(static_cast<size_t>(N) + 1, Eigen::MatrixXd::Zero(nx, nvar));
  Eigen::MatrixXd Fz(nx, nx), Fu(nx, nu);
  for (int k = 0; k < N; ++k) {
    const Eigen::VectorXd u = U.segment(k * nu, nu);
    m.step_jacobians(states[k], u, dt, Fz, Fu);
    states[k + 1] = m.step(states[k], u, dt);
    sens[k + 1].noalias() = Fz * sens[k];
    sens[k + 1].middleCols(col0 + k * nu, nu) += Fu;
  }
}

struct SqrtWeights {
  Eigen::VectorXd state, input, rate;
};

SqrtWeights sqrt_weights(const Eigen::VectorXd& ws, const Eigen::VectorXd& wu,
                         const Eigen::VectorXd& wr) {
  return {ws.cwiseMax(0.0).cwiseSqrt(), wu.cwiseMax(0.0).cwiseSqrt(), wr.cwiseMax(0.0).cwiseSqrt()};
}

// Counts the residual rows contributed by one robot's tracking, input and
// rate terms plus its pair constraints (1 hinge + 2 consistency per entry).
int local_row_count(int N, int nx, int nu, const std::vector<FixedPairConstraint>& pairs,
                    bool b_shift) {
  int rows = N * nx + 2 * N * nu;
  for (const auto& p : pairs) rows += 3 * p.length();
  if (b_shift) rows += N;
  return rows;
}

struct LocalAssembly {
  Eigen::VectorXd r;
  Eigen::MatrixXd J;       // filled only when with_jacobian
  double objective = 0.0;  // tracking + input + rate cost (unweighted by 1/2)
};

// Builds the stacked residual for the local problem.  Row layout: tracking,
// inputs, rates, then per pair (hinge, consistency x2) per step, then the
// optional offset-drift rows.  Hinge rows are zero (with zero gradient) when
// inactive so the row count never changes.
void assemble_local(const LocalNmpcProblem& pb, const SqrtWeights& sw, const Eigen::VectorXd& U,
                    const std::vector<Eigen::VectorXd>& states,
                    const std::vector<Eigen::MatrixXd>* sens, double w_sep, int col0,
                    LocalAssembly& out, int row0 = 0) {
  const int N = pb.horizon, nx = pb.model.nx(), nu = pb.model.nu();
  const bool b_shift = pb.b_shift_weight > 0.0 && !pb.prev_b.empty();
  const bool with_jac = sens != nullptr;
  const double sq_sep = std::sqrt(w_sep);
  const double sq_con = std::sqrt(pb.consistency_weight);
  int row = row0;

  auto put = [&](double value, int k_state, const Eigen::VectorXd* dz, int u_index = -1,
                 double du = 0.0, int u_index2 = -1, double du2 = 0.0) {
    out.r(row) = value;
    if (with_jac) {
      if (dz != nullptr) out.J.row(row).noalias() = dz->transpose() * (*sens)[k_state];
      if (u_index >= 0) out.J(row, col0 + u_index) += du;
      if (u_index2 >= 0) out.J(row, col0 + u_index2) += du2;
    }
    ++row;
  };

  // Tracking.
  for (int k = 1; k <= N; ++k) {
    Eigen::VectorXd err = states[k] - pb.z_ref;
    err(2) = wrap_angle(err(2));
    for (int c = 0; c < nx; ++c) {
      const double sc = sw.state(c);
      out.r(row) = sc * err(c);
      out.objective += sc * sc * err(c) * err(c);
      if (with_jac) out.J.row(row).noalias() = sc * (*sens)[k].row(c);
      ++row;
    }
  }
  // Input magnitude.
  for (int k = 0; k < N; ++k)
    for (int c = 0; c < nu; ++c) {
      const double sc = sw.input(c);
      const double v = sc * U(k * nu + c);
      out.objective += v * v;
      put(v, 0, nullptr, k * nu + c, sc);
    }
  // Input rate.
  for (int k = 0; k < N; ++k)
    for (int c = 0; c < nu; ++c) {
      const double sc = sw.rate(c);
      const double prev = k == 0 ? pb.u_prev(c) : U((k - 1) * nu + c);
      const double v = sc * (U(k * nu + c) - prev);
      out.objective += v * v;
      if (k == 0)
        put(v, 0, nullptr, c, sc);
      else
        put(v, 0, nullptr, k * nu + c, sc, (k - 1) * nu + c, -sc);
    }
  // Pair constraints.
  const double bound = pb.d_min + pb.safety_margin;
  Eigen::VectorXd dz(nx);
  for (const auto& pc : pb.pairs) {
    const int L = std::min(pc.length(), N);
    for (int k = 1; k <= N; ++k) {
      if (k > L || !pc.active[k - 1]) {
        put(0.0, 0, nullptr);
        put(0.0, 0, nullptr);
        put(0.0, 0, nullptr);
        continue;
      }
      const Eigen::Vector2d t = states[k].head<2>();
      const double psi = states[k](2);
      const Eigen::Matrix2d R = rot(psi), Rd = rot_deriv(psi);
      const Eigen::Vector2d w = pc.w[k - 1];
      const double viol = bound - pc.separation(k - 1, t, psi);
      if (viol > 0.0) {
        const Eigen::Vector2d dt_ = R * w;
        dz.setZero();
        dz.head<2>() = dt_;
        dz(2) = (t - pc.center).dot(Rd * w);
        dz *= sq_sep;
        put(sq_sep * viol, k, &dz);
      } else {
        put(0.0, 0, nullptr);
      }
      const Eigen::Vector2d rc = R * w + pc.s[k - 1];
      const Eigen::Vector2d dpsi = Rd * w;
      for (int c = 0; c < 2; ++c) {
        dz.setZero();
        dz(2) = sq_con * dpsi(c);
        put(sq_con * rc(c), k, &dz);
      }
    }
  }
  // Optional drift cap on the world-frame halfspace offsets.
  if (b_shift) {
    const double sq_b = std::sqrt(pb.b_shift_weight);
    const Eigen::MatrixXd& A0 = pb.base_polytope.A;
    for (int k = 1; k <= N; ++k) {
      if (k > static_cast<int>(pb.prev_b.size())) {
        put(0.0, 0, nullptr);
        continue;
      }
      const Eigen::Vector2d t = states[k].head<2>();
      const double psi = states[k](2);
      const Eigen::MatrixXd At = A0 * rot(psi).transpose();
      const Eigen::VectorXd diff = pb.base_polytope.b + At * t - pb.prev_b[k - 1];
      const double n = diff.norm();
      if (n > pb.b_shift_cap && n > 1e-12) {
        const Eigen::VectorXd dir = diff / n;
        dz.setZero();
        dz.head<2>() = At.transpose() * dir;
        dz(2) = dir.dot(A0 * rot_deriv(psi).transpose() * t);
        dz *= sq_b;
        put(sq_b * (n - pb.b_shift_cap), k, &dz);
      } else {
        put(0.0, 0, nullptr);
      }
    }
  }
}

void measure_local_violations(const LocalNmpcProblem& pb, const std::vector<Eigen::VectorXd>& states,
                              double& sep_viol, double& cons_viol) {
  sep_viol = 0.0;
  cons_viol = 0.0;
  const double bound = pb.d_min + pb.safety_margin;
  for (const auto& pc : pb.pairs) {
    const int L = std::min(pc.length(), pb.horizon);
    for (int k = 1; k <= L; ++k) {
      if (!pc.active[k - 1]) continue;
      const Eigen::Vector2d t = states[k].head<2>();
      const double psi = states[k](2);
      sep_viol = std::max(sep_viol, bound - pc.separation(k - 1, t, psi));
      cons_viol = std::max(cons_viol, pc.consistency(k - 1, psi).norm());
    }
  }
  sep_viol = std::max(sep_viol, 0.0);
}

void validate_local(const LocalNmpcProblem& pb) {
  const int nx = pb.model.nx(), nu = pb.model.nu();
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("local problem: ") + what);
  };
  check(pb.horizon >= 1, "horizon must be positive");
  check(pb.dt > 0, "dt must be positive");
  check(pb.z0.size() == nx, "z0 size mismatch");
  check(pb.z_ref.size() == nx, "z_ref size mismatch");
  check(pb.weight_state.size() == nx, "weight_state size mismatch");
  check(pb.weight_input.size() == nu, "weight_input size mismatch");
  check(pb.weight_rate.size() == nu, "weight_rate size mismatch");
  check(pb.u_min.size() == nu && pb.u_max.size() == nu, "input bound size mismatch");
  check(pb.du_rate.size() == nu, "du_rate size mismatch");
  check(pb.u_prev.size() == nu, "u_prev size mismatch");
  check(pb.base_polytope.dim() == 2, "base polytope must be planar");
  for (const auto& pc : pb.pairs)
    check(pc.length() >= pb.horizon, "pair constraint shorter than horizon");
}

// Levenberg-damped Gauss-Newton descent on the stacked-input merit.  Returns
// the number of iterations used; U, states and phi are updated in place.
template <typename Assemble, typename Merit>
int gauss_newton(Eigen::VectorXd& U, double& phi, const Assemble& assemble, const Merit& merit,
                 const std::function<void(Eigen::VectorXd&)>& project, int max_iterations) {
  double damping = 1e-3;
  int iter = 0;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  for (; iter < max_iterations; ++iter) {
    assemble(U, r, J);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool accepted = false;
    Eigen::VectorXd best_U;
    double best_phi = phi;
    for (int boost = 0; boost < 8 && !accepted; ++boost) {
      Eigen::MatrixXd H = JtJ;
      H.diagonal().array() += damping;
      const Eigen::VectorXd dU = H.ldlt().solve(-g);
      double alpha = 1.0;
      for (int ls = 0; ls < 10; ++ls, alpha *= 0.5) {
        Eigen::VectorXd cand = U + alpha * dU;
        project(cand);
        const double phi_new = merit(cand);
        if (phi_new < best_phi - 1e-15 * std::max(1.0, best_phi)) {
          best_U = cand;
          best_phi = phi_new;
          accepted = true;
          break;
        }
      }
      if (!accepted) damping *= 10.0;
      if (damping > 1e10) break;
    }
    if (!accepted) break;
    const double step = (best_U - U).lpNorm<Eigen::Infinity>();
    const double drop = phi - best_phi;
    U = best_U;
    phi = best_phi;
    damping = std::max(damping * 0.25, 1e-10);
    if (step < 1e-11 * std::max(1.0, U.lpNorm<Eigen::Infinity>()) ||
        drop < 1e-14 * std::max(1.0, phi))
      break;
  }
  return iter + 1;
}

}  // namespace

double FixedPairConstraint::separation(int k, const Eigen::Vector2d& t, double psi) const {
  return const_term[k] - (t - center).dot(rot(psi) * w[k]);
}

Eigen::Vector2d FixedPairConstraint::consistency(int k, double psi) const {
  return rot(psi) * w[k] + s[k];
}

FixedPairConstraint make_pair_constraint(const Polytope& ego_base,
                                         const std::vector<Polytope>& other_world,
                                         const DualPairTrajectory& duals, bool ego_is_first,
                                         const Eigen::Vector2d& center) {
  const int L = duals.length();
  if (static_cast<int>(other_world.size()) != L)
    throw std::invalid_argument("pair constraint: plan length mismatch");
  FixedPairConstraint out;
  out.center = center;
  out.w.resize(L);
  out.const_term.resize(L);
  out.s.resize(L);
  out.active.resize(L);
  for (int k = 0; k < L; ++k) {
    const Eigen::VectorXd& le = ego_is_first ? duals.lambda_ij[k] : duals.lambda_ji[k];
    const Eigen::VectorXd& lo = ego_is_first ? duals.lambda_ji[k] : duals.lambda_ij[k];
    if (le.size() != ego_base.b.size() || lo.size() != other_world[k].b.size())
      throw std::invalid_argument("pair constraint: multiplier size mismatch");
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    if (duals.s[k].size() == 2) s = ego_is_first ? Eigen::Vector2d(duals.s[k]) : Eigen::Vector2d(-duals.s[k]);
    out.w[k] = ego_base.A.transpose() * le;
    const Eigen::VectorXd b_local = other_world[k].b - other_world[k].A * center;
    out.const_term[k] = -ego_base.b.dot(le) - b_local.dot(lo);
    out.s[k] = s;
    out.active[k] = out.w[k].norm() > 1e-9 || s.norm() > 1e-9;
  }
  return out;
}

std::vector<Eigen::VectorXd> shift_and_augment(const std::vector<Eigen::VectorXd>& seq) {
  if (seq.empty()) return {};
  std::vector<Eigen::VectorXd> out(seq.begin() + 1, seq.end());
  out.push_back(seq.back());
  return out;
}

double stage_cost(const Eigen::VectorXd& weight_state, const Eigen::VectorXd& weight_input,
                  const Eigen::VectorXd& weight_rate, const Eigen::VectorXd& z_ref,
                  const Eigen::VectorXd& z, const Eigen::VectorXd& u,
                  const Eigen::VectorXd& u_prev) {
  Eigen::VectorXd err = z - z_ref;
  err(2) = wrap_angle(err(2));
  const Eigen::VectorXd du = u - u_prev;
  return err.dot(weight_state.cwiseProduct(err)) + u.dot(weight_input.cwiseProduct(u)) +
         du.dot(weight_rate.cwiseProduct(du));
}

Eigen::Vector2d pair_frame_center(const Eigen::VectorXd& z_i, const Eigen::VectorXd& z_j) {
  return 0.5 * (z_i.head<2>() + z_j.head<2>());
}

NmpcSolution solve_local_nmpc(const LocalNmpcProblem& pb,
                              const std::vector<Eigen::VectorXd>* warm_inputs) {
  validate_local(pb);
  const int N = pb.horizon, nx = pb.model.nx(), nu = pb.model.nu();
  const int nvar = N * nu;
  const SqrtWeights sw = sqrt_weights(pb.weight_state, pb.weight_input, pb.weight_rate);
  const Eigen::VectorXd du_step = pb.du_rate * pb.dt;
  const bool b_shift = pb.b_shift_weight > 0.0 && !pb.prev_b.empty();
  const int rows = local_row_count(N, nx, nu, pb.pairs, b_shift);

  Eigen::VectorXd U = Eigen::VectorXd::Zero(nvar);
  if (warm_inputs != nullptr) {
    if (static_cast<int>(warm_inputs->size()) != N)
      throw std::invalid_argument("local problem: warm start length mismatch");
    for (int k = 0; k < N; ++k) U.segment(k * nu, nu) = (*warm_inputs)[k];
  }
  clamp_inputs(pb.u_min, pb.u_max, du_step, pb.u_prev, N, U);

  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::MatrixXd> sens;
  LocalAssembly work;
  work.r.resize(rows);
  work.J.resize(rows, nvar);

  auto project = std::function<void(Eigen::VectorXd&)>([&](Eigen::VectorXd& cand) {
    clamp_inputs(pb.u_min, pb.u_max, du_step, pb.u_prev, N, cand);
  });

  double w_sep = pb.separation_weight_init;
  NmpcSolution sol;
  for (int round = 0; round < kMaxPenaltyRounds; ++round) {
    auto assemble = [&](const Eigen::VectorXd& Ux, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
      rollout_sensitivities(pb.model, pb.z0, Ux, pb.dt, N, nvar, 0, states, sens);
      work.J.setZero();
      work.objective = 0.0;
      assemble_local(pb, sw, Ux, states, &sens, w_sep, 0, work);
      r = work.r;
      J = work.J;
    };
    auto merit = [&](const Eigen::VectorXd& Ux) {
      std::vector<Eigen::VectorXd> st;
      rollout_states(pb.model, pb.z0, Ux, pb.dt, N, st);
      LocalAssembly tmp;
      tmp.r.resize(rows);
      assemble_local(pb, sw, Ux, st, nullptr, w_sep, 0, tmp);
      return 0.5 * tmp.r.squaredNorm();
    };
    double phi = merit(U);
    sol.iterations += gauss_newton(U, phi, assemble, merit, project, kMaxInnerIterations);
    rollout_states(pb.model, pb.z0, U, pb.dt, N, states);
    measure_local_violations(pb, states, sol.max_separation_violation,
                             sol.max_consistency_violation);
    if (sol.max_separation_violation <= kViolationTol || w_sep >= kSeparationWeightCap) break;
    w_sep = std::min(w_sep * 2.0, kSeparationWeightCap);
  }

  rollout_states(pb.model, pb.z0, U, pb.dt, N, states);
  sol.states = states;
  sol.inputs.resize(N);
  for (int k = 0; k < N; ++k) sol.inputs[k] = U.segment(k * nu, nu);
  LocalAssembly final_work;
  final_work.r.resize(rows);
  assemble_local(pb, sw, U, states, nullptr, w_sep, 0, final_work);
  sol.objective = final_work.objective;
  measure_local_violations(pb, states, sol.max_separation_violation,
                           sol.max_consistency_violation);
  if (sol.max_separation_violation <= kViolationTol &&
      sol.max_consistency_violation <= kViolationTol)
    sol.status = NmpcStatus::Converged;
  else if (sol.max_separation_violation > pb.safety_margin + kInfeasibleViolation)
    sol.status = NmpcStatus::Infeasible;
  else
    sol.status = NmpcStatus::MaxIter;
  return sol;
}

// ---------------------------------------------------------------------------
// Centralized baseline.

namespace {

struct CentralPairData {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  // One entry per predicted step 1..N.
  std::vector<Eigen::Vector2d> w_i, w_j, s;
  std::vector<double> const_term;  // -b_base_i^T lambda_ij - b_base_j^T lambda_ji
  std::vector<bool> active;
};

void validate_central(const CentralizedProblem& pb) {
  const int M = pb.num_robots();
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("centralized problem: ") + what);
  };
  check(M >= 1, "needs at least one robot");
  check(pb.horizon >= 1, "horizon must be positive");
  check(pb.dt > 0, "dt must be positive");
  auto size_ok = [&](const std::vector<Eigen::VectorXd>& v) {
    return static_cast<int>(v.size()) == M;
  };
  check(static_cast<int>(pb.base_polytopes.size()) == M, "base polytope count mismatch");
  check(size_ok(pb.z0) && size_ok(pb.z_ref) && size_ok(pb.weight_state) &&
            size_ok(pb.weight_input) && size_ok(pb.weight_rate) && size_ok(pb.u_min) &&
            size_ok(pb.u_max) && size_ok(pb.du_rate) && size_ok(pb.u_prev),
        "per-robot vector count mismatch");
  for (const auto& [i, j] : pb.pairs)
    check(i >= 0 && i < j && j < M, "pair indices out of range");
}

CentralPairData build_pair_data(const CentralizedProblem& pb, int i, int j,
                                const DualPairTrajectory& duals) {
  CentralPairData d;
  d.center = pair_frame_center(pb.z0[i], pb.z0[j]);
  const int L = duals.length();
  d.w_i.resize(L);
  d.w_j.resize(L);
  d.s.resize(L);
  d.const_term.resize(L);
  d.active.resize(L);
  for (int k = 0; k < L; ++k) {
    d.w_i[k] = pb.base_polytopes[i].A.transpose() * duals.lambda_ij[k];
    d.w_j[k] = pb.base_polytopes[j].A.transpose() * duals.lambda_ji[k];
    d.s[k] = duals.s[k].size() == 2 ? Eigen::Vector2d(duals.s[k]) : Eigen::Vector2d::Zero();
    d.const_term[k] =
        -pb.base_polytopes[i].b.dot(duals.lambda_ij[k]) - pb.base_polytopes[j].b.dot(duals.lambda_ji[k]);
    d.active[k] = d.w_i[k].norm() > 1e-9 || d.w_j[k].norm() > 1e-9 || d.s[k].norm() > 1e-9;
  }
  return d;
}

double central_pair_separation(const CentralPairData& d, int k, const Eigen::VectorXd& z_i,
                               const Eigen::VectorXd& z_j) {
  const Eigen::Vector2d ti = z_i.head<2>(), tj = z_j.head<2>();
  return d.const_term[k] - (ti - d.center).dot(rot(z_i(2)) * d.w_i[k]) -
         (tj - d.center).dot(rot(z_j(2)) * d.w_j[k]);
}

}  // namespace

CentralizedSolution solve_centralized_nmpc(const CentralizedProblem& pb,
                                           const CentralizedSolution* warm) {
  validate_central(pb);
  const int M = pb.num_robots(), N = pb.horizon;
  std::vector<int> off(M, 0), nus(M), nxs(M);
  int nvar = 0;
  for (int i = 0; i < M; ++i) {
    off[i] = nvar;
    nus[i] = pb.models[i].nu();
    nxs[i] = pb.models[i].nx();
    nvar += N * nus[i];
  }
  std::vector<SqrtWeights> sw(M);
  std::vector<Eigen::VectorXd> du_step(M);
  for (int i = 0; i < M; ++i) {
    sw[i] = sqrt_weights(pb.weight_state[i], pb.weight_input[i], pb.weight_rate[i]);
    du_step[i] = pb.du_rate[i] * pb.dt;
  }

  Eigen::VectorXd U = Eigen::VectorXd::Zero(nvar);
  if (warm != nullptr && static_cast<int>(warm->inputs.size()) == M) {
    for (int i = 0; i < M; ++i)
      for (int k = 0; k < N && k < static_cast<int>(warm->inputs[i].size()); ++k)
        U.segment(off[i] + k * nus[i], nus[i]) = warm->inputs[i][k];
  }
  auto project = std::function<void(Eigen::VectorXd&)>([&](Eigen::VectorXd& cand) {
    for (int i = 0; i < M; ++i) {
      Eigen::VectorXd Ui = cand.segment(off[i], N * nus[i]);
      clamp_inputs(pb.u_min[i], pb.u_max[i], du_step[i], pb.u_prev[i], N, Ui);
      cand.segment(off[i], N * nus[i]) = Ui;
    }
  });
  project(U);

  std::vector<std::vector<Eigen::VectorXd>> states(M);
  auto rollout_all = [&](const Eigen::VectorXd& Ux, std::vector<std::vector<Eigen::VectorXd>>& st) {
    st.resize(M);
    for (int i = 0; i < M; ++i)
      rollout_states(pb.models[i], pb.z0[i], Ux.segment(off[i], N * nus[i]), pb.dt, N, st[i]);
  };
  rollout_all(U, states);

  std::map<std::pair<int, int>, DualPairTrajectory> duals;
  if (warm != nullptr) duals = warm->duals;
  auto refresh_duals = [&](const std::vector<std::vector<Eigen::VectorXd>>& st) {
    for (const auto& [i, j] : pb.pairs) {
      std::vector<Polytope> pi, pj;
      pi.reserve(N);
      pj.reserve(N);
      for (int k = 1; k <= N; ++k) {
        pi.push_back(transform_base_polytope(pb.base_polytopes[i], pb.models[i].pose_of(st[i][k])));
        pj.push_back(transform_base_polytope(pb.base_polytopes[j], pb.models[j].pose_of(st[j][k])));
      }
      auto it = duals.find({i, j});
      const DualPairTrajectory* seed =
          it != duals.end() && it->second.length() == N ? &it->second : nullptr;
      duals[{i, j}] = solve_ca_pair(i, j, pi, pj, pb.d_min, seed);
    }
  };

  const double bound = pb.d_min + pb.safety_margin;
  std::map<std::pair<int, int>, CentralPairData> pair_data;
  auto rebuild_pair_data = [&]() {
    pair_data.clear();
    for (const auto& [i, j] : pb.pairs) pair_data[{i, j}] = build_pair_data(pb, i, j, duals.at({i, j}));
  };

  // Residual layout: per robot the local rows (minus pair rows), then per pair
  // 1 hinge + 4 consistency rows (two per robot) per step.
  int rows = 0;
  for (int i = 0; i < M; ++i) rows += N * nxs[i] + 2 * N * nus[i];
  rows += 5 * N * static_cast<int>(pb.pairs.size());

  double w_sep = pb.separation_weight_init;
  const double sq_con = std::sqrt(pb.consistency_weight);

  std::vector<std::vector<Eigen::MatrixXd>> sens(M);
  auto assemble_joint = [&](const Eigen::VectorXd& Ux, bool with_jac, Eigen::VectorXd& r,
                            Eigen::MatrixXd& J, std::vector<std::vector<Eigen::VectorXd>>& st,
                            double* objective) {
    r.setZero(rows);
    if (with_jac) {
      J.resize(rows, nvar);
      J.setZero();
    }
    st.resize(M);
    int row = 0;
    for (int i = 0; i < M; ++i) {
      const Eigen::VectorXd Ui = Ux.segment(off[i], N * nus[i]);
      if (with_jac)
        rollout_sensitivities(pb.models[i], pb.z0[i], Ui, pb.dt, N, nvar, off[i], st[i], sens[i]);
      else
        rollout_states(pb.models[i], pb.z0[i], Ui, pb.dt, N, st[i]);
      // Tracking.
      for (int k = 1; k <= N; ++k) {
        Eigen::VectorXd err = st[i][k] - pb.z_ref[i];
        err(2) = wrap_angle(err(2));
        for (int c = 0; c < nxs[i]; ++c) {
          const double sc = sw[i].state(c);
          r(row) = sc * err(c);
          if (objective != nullptr) *objective += sc * sc * err(c) * err(c);
          if (with_jac) J.row(row) = sc * sens[i][k].row(c);
          ++row;
        }
      }
      // Input magnitude and rate.
      for (int k = 0; k < N; ++k)
        for (int c = 0; c < nus[i]; ++c) {
          const double sc = sw[i].input(c);
          r(row) = sc * Ui(k * nus[i] + c);
          if (objective != nullptr) *objective += r(row) * r(row);
          if (with_jac) J(row, off[i] + k * nus[i] + c) = sc;
          ++row;
        }
      for (int k = 0; k < N; ++k)
        for (int c = 0; c < nus[i]; ++c) {
          const double sc = sw[i].rate(c);
          const double prev = k == 0 ? pb.u_prev[i](c) : Ui((k - 1) * nus[i] + c);
          r(row) = sc * (Ui(k * nus[i] + c) - prev);
          if (objective != nullptr) *objective += r(row) * r(row);
          if (with_jac) {
            J(row, off[i] + k * nus[i] + c) = sc;
            if (k > 0) J(row, off[i] + (k - 1) * nus[i] + c) = -sc;
          }
          ++row;
        }
    }
    const double sq_sep = std::sqrt(w_sep);
    for (const auto& [key, d] : pair_data) {
      const auto [i, j] = key;
      for (int k = 1; k <= N; ++k) {
        if (!d.active[k - 1]) {
          row += 5;
          continue;
        }
        const Eigen::VectorXd& zi = st[i][k];
        const Eigen::VectorXd& zj = st[j][k];
        const double viol = bound - central_pair_separation(d, k - 1, zi, zj);
        if (viol > 0.0) {
          r(row) = sq_sep * viol;
          if (with_jac) {
            Eigen::VectorXd dzi = Eigen::VectorXd::Zero(nxs[i]);
            dzi.head<2>() = rot(zi(2)) * d.w_i[k - 1];
            dzi(2) = (zi.head<2>() - d.center).dot(rot_deriv(zi(2)) * d.w_i[k - 1]);
            Eigen::VectorXd dzj = Eigen::VectorXd::Zero(nxs[j]);
            dzj.head<2>() = rot(zj(2)) * d.w_j[k - 1];
            dzj(2) = (zj.head<2>() - d.center).dot(rot_deriv(zj(2)) * d.w_j[k - 1]);
            J.row(row) = sq_sep * (dzi.transpose() * sens[i][k] + dzj.transpose() * sens[j][k]);
          }
        }
        ++row;
        const Eigen::Vector2d rci = rot(zi(2)) * d.w_i[k - 1] + d.s[k - 1];
        const Eigen::Vector2d rcj = rot(zj(2)) * d.w_j[k - 1] - d.s[k - 1];
        const Eigen::Vector2d di = rot_deriv(zi(2)) * d.w_i[k - 1];
        const Eigen::Vector2d dj = rot_deriv(zj(2)) * d.w_j[k - 1];
        for (int c = 0; c < 2; ++c) {
          r(row) = sq_con * rci(c);
          if (with_jac) J.row(row) = sq_con * di(c) * sens[i][k].row(2);
          ++row;
        }
        for (int c = 0; c < 2; ++c) {
          r(row) = sq_con * rcj(c);
          if (with_jac) J.row(row) = sq_con * dj(c) * sens[j][k].row(2);
          ++row;
        }
      }
    }
  };

  auto merit = [&](const Eigen::VectorXd& Ux) {
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    std::vector<std::vector<Eigen::VectorXd>> st;
    assemble_joint(Ux, false, r, J, st, nullptr);
    return 0.5 * r.squaredNorm();
  };
  auto assemble = [&](const Eigen::VectorXd& Ux, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    std::vector<std::vector<Eigen::VectorXd>> st;
    assemble_joint(Ux, true, r, J, st, nullptr);
  };

  CentralizedSolution sol;
  refresh_duals(states);
  rebuild_pair_data();
  double prev_merit = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int sweep = 0; sweep < kMaxCentralSweeps; ++sweep) {
    ++sol.sweeps;
    double phi = merit(U);
    gauss_newton(U, phi, assemble, merit, project, kMaxCentralInnerIterations);
    rollout_all(U, states);
    // Hinge violation at the new states with the stale multipliers decides
    // whether the penalty weight must grow.
    double stale_viol = 0.0;
    for (const auto& [key, d] : pair_data) {
      const auto [i, j] = key;
      for (int k = 1; k <= N; ++k)
        if (d.active[k - 1])
          stale_viol = std::max(
              stale_viol, bound - central_pair_separation(d, k - 1, states[i][k], states[j][k]));
    }
    refresh_duals(states);
    rebuild_pair_data();
    double true_viol = 0.0;
    for (const auto& [key, dj] : duals)
      for (int k = 0; k < N; ++k) true_viol = std::max(true_viol, bound - dj.distance[k]);
    const double merit_now = merit(U);
    if (true_viol <= kViolationTol &&
        std::abs(prev_merit - merit_now) <= 1e-9 * std::max(1.0, merit_now)) {
      converged = true;
      sol.max_separation_violation = std::max(true_viol, 0.0);
      break;
    }
    sol.max_separation_violation = std::max(true_viol, 0.0);
    if (stale_viol > kViolationTol && w_sep < kSeparationWeightCap) {
      w_sep = std::min(w_sep * 2.0, kSeparationWeightCap);
      prev_merit = std::numeric_limits<double>::infinity();
    } else {
      prev_merit = merit_now;
    }
  }

  sol.inputs.resize(M);
  sol.states = states;
  for (int i = 0; i < M; ++i) {
    sol.inputs[i].resize(N);
    for (int k = 0; k < N; ++k) sol.inputs[i][k] = U.segment(off[i] + k * nus[i], nus[i]);
  }
  sol.duals = duals;
  sol.separation_weight_final = w_sep;
  sol.objective = 0.0;
  {
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    std::vector<std::vector<Eigen::VectorXd>> st;
    double obj = 0.0;
    assemble_joint(U, false, r, J, st, &obj);
    sol.objective = obj;
  }
  if (converged)
    sol.status = NmpcStatus::Converged;
  else if (sol.max_separation_violation > pb.safety_margin + kInfeasibleViolation)
    sol.status = NmpcStatus::Infeasible;
  else
    sol.status = NmpcStatus::MaxIter;
  return sol;
}

}  // namespace polycoord
