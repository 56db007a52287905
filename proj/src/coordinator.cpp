#include "polycoord/coordinator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "polycoord/error_bound.hpp"

namespace polycoord {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Stale-mailbox realignment: entry k of a sequence that is `delay` rounds old
// describes a horizon step that is `delay` slots in the past, so the view
// drops the first `delay` entries and repeats the last one.
template <typename T>
std::vector<T> drop_and_pad(const std::vector<T>& seq, int delay) {
  const int n = static_cast<int>(seq.size());
  std::vector<T> out(n);
  for (int k = 0; k < n; ++k) out[k] = seq[std::min(k + delay, n - 1)];
  return out;
}

// Drop-first, duplicate-last shift shared by plan states and polytopes.
template <typename T>
std::vector<T> shifted_copy(const std::vector<T>& seq) {
  return drop_and_pad(seq, 1);
}

Eigen::Vector2d polytope_center(const Polytope& P) {
  const std::vector<Eigen::Vector2d> verts = enumerate_vertices(P);
  if (verts.empty()) throw std::invalid_argument("obstacle polytope is empty");
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& v : verts) c += v;
  return c / static_cast<double>(verts.size());
}

// Predicted states and matching body polytopes for horizon steps 1..N as
// published on the bus (already shifted by one round at publication time).
struct Publication {
  std::vector<Eigen::VectorXd> states;
  std::vector<Polytope> polys;
};

std::string field_error(const std::string& where, const std::string& what) {
  return "coordination: " + where + ": " + what;
}

}  // namespace

std::map<int, std::vector<int>> neighbor_sets(const std::vector<int>& ids,
                                              const std::vector<Eigen::Vector2d>& positions,
                                              double radius) {
  if (radius <= 0.0) throw std::invalid_argument("neighbor_sets: radius must be positive");
  if (ids.size() != positions.size())
    throw std::invalid_argument("neighbor_sets: ids/positions size mismatch");
  std::map<int, std::vector<int>> out;
  for (int a : ids) out[a] = {};
  for (std::size_t a = 0; a < ids.size(); ++a) {
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      if ((positions[a] - positions[b]).norm() <= radius) {
        out[ids[a]].push_back(ids[b]);
        out[ids[b]].push_back(ids[a]);
      }
    }
  }
  for (auto& [id, nbrs] : out) std::sort(nbrs.begin(), nbrs.end());
  return out;
}

std::map<int, std::vector<int>> neighbor_sets(const std::vector<RobotSpec>& robots,
                                              double radius) {
  std::vector<int> ids;
  std::vector<Eigen::Vector2d> positions;
  for (const auto& r : robots) {
    ids.push_back(r.id);
    positions.push_back(r.initial_state.head<2>());
  }
  return neighbor_sets(ids, positions, radius);
}

struct CoordinationWorld::Impl {
  std::vector<RobotSpec> robots;  // sorted by id
  std::vector<ObstacleSpec> obstacles;
  CoordinationSettings cfg;
  RunMode mode = RunMode::Distributed;

  int n = 0;  // robot count
  std::vector<int> ids;
  std::vector<int> obstacle_ids;
  std::vector<Eigen::Vector2d> obstacle_centers;
  // Per-robot direct and conservative error-bound constants.
  std::vector<double> c_direct, c_conservative;

  int t = 0;
  bool aborted = false;
  std::vector<Eigen::VectorXd> state;
  std::vector<Eigen::VectorXd> u_prev;
  std::vector<std::vector<Eigen::VectorXd>> last_plan_inputs;
  std::vector<int> consecutive_infeasible;
  int central_consecutive_infeasible = 0;
  // Stall recovery bookkeeping: best goal distance seen so far and the number
  // of rounds since it last improved.
  std::vector<double> stall_best_err;
  std::vector<int> stall_rounds;

  // Bus history, indexed by publication round.
  std::vector<std::vector<Publication>> publications;
  std::vector<std::map<std::pair<int, int>, DualPairTrajectory>> duals_history;
  std::vector<Publication> init_publication;

  CentralizedSolution central_warm;
  bool have_central_warm = false;

  SimulationLog log;

  // ---- construction -------------------------------------------------------

  Impl(std::vector<RobotSpec> robots_in, std::vector<ObstacleSpec> obstacles_in,
       CoordinationSettings cfg_in, RunMode mode_in)
      : robots(std::move(robots_in)),
        obstacles(std::move(obstacles_in)),
        cfg(std::move(cfg_in)),
        mode(mode_in) {
    validate();
    std::sort(robots.begin(), robots.end(),
              [](const RobotSpec& a, const RobotSpec& b) { return a.id < b.id; });
    n = static_cast<int>(robots.size());
    for (const auto& r : robots) ids.push_back(r.id);

    int next_id = (ids.empty() ? 0 : ids.back()) + 1;
    for (const auto& o : obstacles) {
      obstacle_ids.push_back(next_id++);
      obstacle_centers.push_back(polytope_center(o.shape));
    }

    for (int i = 0; i < n; ++i) {
      state.push_back(robots[i].initial_state);
      u_prev.push_back(Eigen::VectorXd::Zero(robots[i].model.nu()));
      last_plan_inputs.emplace_back();
      consecutive_infeasible.push_back(0);
      stall_best_err.push_back(std::numeric_limits<double>::infinity());
      stall_rounds.push_back(0);
      c_direct.push_back(offset_gain(robots[i].base_polytope.A));
      c_conservative.push_back(polytope_constant(robots[i].base_polytope.A).c);
    }

    // Round-0 mailbox content: a zero-input rollout of every robot (constant
    // speed for bicycles, stationary for unicycles).  A frozen placement
    // would make any approaching robot look like an imminent collision.
    for (int i = 0; i < n; ++i) {
      const std::vector<Eigen::VectorXd> zeros(cfg.horizon,
                                               Eigen::VectorXd::Zero(robots[i].model.nu()));
      const std::vector<Eigen::VectorXd> rolled =
          rollout(robots[i].model, robots[i].initial_state, zeros, cfg.dt);
      Publication pub;
      pub.states.assign(rolled.begin() + 1, rolled.end());
      for (const auto& z : pub.states) pub.polys.push_back(body_at(i, z));
      init_publication.push_back(std::move(pub));
    }

    log.dt = cfg.dt;
    log.mode = mode;
    log.robot_ids = ids;
    log.obstacle_ids = obstacle_ids;
  }

  void validate() const {
    if (robots.empty()) throw std::invalid_argument(field_error("robots", "empty"));
    if (cfg.horizon < 1) throw std::invalid_argument(field_error("horizon", "must be >= 1"));
    if (!(cfg.dt > 0.0)) throw std::invalid_argument(field_error("dt", "must be positive"));
    if (cfg.d_min < 0.0) throw std::invalid_argument(field_error("d_min", "must be >= 0"));
    if (cfg.bus_delay < 0 || cfg.bus_delay > cfg.horizon)
      throw std::invalid_argument(field_error("bus_delay", "must lie in [0, horizon]"));
    if (!(cfg.communication_radius > 0.0))
      throw std::invalid_argument(field_error("communication_radius", "must be positive"));
    std::set<int> seen;
    for (const auto& r : robots) {
      const std::string where = "robot " + std::to_string(r.id);
      if (!seen.insert(r.id).second)
        throw std::invalid_argument(field_error(where, "duplicate id"));
      const int nx = r.model.nx(), nu = r.model.nu();
      if (r.initial_state.size() != nx)
        throw std::invalid_argument(field_error(where + ".initial_state", "wrong size"));
      if (r.z_ref.size() != nx)
        throw std::invalid_argument(field_error(where + ".z_ref", "wrong size"));
      if (r.weight_state.size() != nx)
        throw std::invalid_argument(field_error(where + ".weight_state", "wrong size"));
      if (r.weight_input.size() != nu || r.weight_rate.size() != nu)
        throw std::invalid_argument(field_error(where + ".weight_input/rate", "wrong size"));
      if (r.u_min.size() != nu || r.u_max.size() != nu || r.du_rate.size() != nu)
        throw std::invalid_argument(field_error(where + ".input bounds", "wrong size"));
      if (!is_bounded_2d(r.base_polytope))
        throw std::invalid_argument(field_error(where + ".base_polytope", "unbounded"));
      if ((r.reach_per_step.array() < 0.0).any())
        throw std::invalid_argument(field_error(where + ".reach_per_step", "negative entry"));
    }
    for (std::size_t k = 0; k < obstacles.size(); ++k) {
      if (!is_bounded_2d(obstacles[k].shape))
        throw std::invalid_argument(
            field_error("obstacle " + std::to_string(k) + ".shape", "unbounded"));
    }
    if (mode == RunMode::Centralized && !obstacles.empty())
      throw std::invalid_argument(
          field_error("mode", "static obstacles are only supported in distributed mode"));
  }

  // ---- small helpers ------------------------------------------------------

  Polytope body_at(int i, const Eigen::VectorXd& z) const {
    return transform_base_polytope(robots[i].base_polytope, robots[i].model.pose_of(z));
  }

  bool is_obstacle_id(int id) const { return !obstacle_ids.empty() && id >= obstacle_ids.front(); }

  int obstacle_index(int id) const { return id - obstacle_ids.front(); }

  int robot_index(int id) const {
    const auto it = std::lower_bound(ids.begin(), ids.end(), id);
    return static_cast<int>(it - ids.begin());
  }

  // The publication of robot r as visible this round (bus delay applied).
  // The round-0 rollout behaves like a publication from round -1.  Slots a
  // stale publication no longer covers are extrapolated with a zero-input
  // rollout from its last state; freezing them instead would make any robot
  // approached at speed look like an end-of-horizon collision.
  Publication assumed_publication(int r) const {
    const int source = t - 1 - cfg.bus_delay;
    const Publication& raw =
        source < 0 ? init_publication[r] : publications[static_cast<std::size_t>(source)][r];
    const int shift = source < 0 ? t : cfg.bus_delay;
    const int N = static_cast<int>(raw.states.size());
    Publication out;
    out.states.reserve(N);
    out.polys.reserve(N);
    for (int k = 0; k + shift < N; ++k) {
      out.states.push_back(raw.states[k + shift]);
      out.polys.push_back(raw.polys[k + shift]);
    }
    const Eigen::VectorXd zero_u = Eigen::VectorXd::Zero(robots[r].model.nu());
    Eigen::VectorXd z = raw.states[N - 1];
    while (static_cast<int>(out.states.size()) < N) {
      z = robots[r].model.step(z, zero_u, cfg.dt);
      out.states.push_back(z);
      out.polys.push_back(body_at(r, z));
    }
    return out;
  }

  // Dual trajectory for `key` as visible this round; on first contact (round
  // 0 or a pair newly in range) the duals are solved directly on the assumed
  // predictions so multipliers and offsets stay paired.
  DualPairTrajectory assumed_duals(const std::pair<int, int>& key,
                                   const std::vector<Polytope>& assumed_first,
                                   const std::vector<Polytope>& assumed_second) const {
    const int source = t - 1 - cfg.bus_delay;
    if (source >= 0) {
      const auto& hist = duals_history[static_cast<std::size_t>(source)];
      const auto it = hist.find(key);
      if (it != hist.end()) return shift_dual_trajectory(it->second, cfg.bus_delay);
    }
    return solve_ca_pair(key.first, key.second, assumed_first, assumed_second, cfg.d_min);
  }

  // ---- round bookkeeping ---------------------------------------------------

  struct PairRound {
    std::pair<int, int> key;  // ids, key.first < key.second
    DualPairTrajectory used;  // duals consumed by this round's local solves
  };

  // Safe-stop plan used when the local solve reports infeasibility: keep the
  // previous steering plan but ramp the speed-like channel (acceleration for
  // bicycles, commanded speed for unicycles) toward "stopped" as fast as the
  // rate limit allows.  Shift-and-coast would keep driving at speed into the
  // very conflict that made the problem infeasible.
  std::vector<Eigen::VectorXd> fallback_inputs(int i) const {
    const RobotSpec& spec = robots[i];
    const int nu = spec.model.nu();
    std::vector<Eigen::VectorXd> out;
    if (last_plan_inputs[i].empty()) {
      out.assign(cfg.horizon, Eigen::VectorXd::Zero(nu));
    } else {
      out = last_plan_inputs[i];
      out.erase(out.begin());
      out.push_back(out.back());
    }
    const double max_step = spec.du_rate(0) * cfg.dt;
    double prev = u_prev[i].size() > 0 ? u_prev[i](0) : 0.0;
    const bool bicycle = spec.model.kind == ModelKind::Bicycle;
    // Bicycles brake at the acceleration floor until the predicted speed
    // reaches zero; unicycles ramp the commanded speed itself to zero.
    double v_pred = bicycle ? state[i](3) : 0.0;
    for (Eigen::VectorXd& u : out) {
      double target = 0.0;
      if (bicycle) target = v_pred > 0.0 ? std::max(spec.u_min(0), -v_pred / cfg.dt) : 0.0;
      u(0) = std::clamp(target, prev - max_step, prev + max_step);
      prev = u(0);
      if (bicycle) v_pred = std::max(0.0, v_pred + u(0) * cfg.dt);
    }
    return out;
  }

  static double pair_oracle_distance(const Polytope& a, const Polytope& b) {
    return oracle_distance(a, b);
  }

  // ---- stall recovery -------------------------------------------------------
  //
  // Single-shooting NMPC is a local method, and two failure shapes show up in
  // crowded scenarios: a robot parks with its heading perpendicular to the
  // goal direction (a saddle where neither input channel has first-order
  // effect), and two mutually blocking robots settle into a counter-phase
  // limit cycle where each round one advances exactly as far as the other
  // retreats.  Both look converged locally while making no progress.  When a
  // robot's distance to goal has not improved for a sustained stretch, the
  // next solves additionally start from a few canonical motion seeds (forward
  // arcs, reverse) and keep whichever plan tracks best without separation
  // violations.

  // Ramp every input channel from the last applied value toward `target`,
  // respecting the per-step rate limit and the input box.
  std::vector<Eigen::VectorXd> ramped_seed(int i, const Eigen::VectorXd& target) const {
    const RobotSpec& spec = robots[i];
    const int nu = spec.model.nu();
    Eigen::VectorXd u = u_prev[i].size() > 0 ? u_prev[i] : Eigen::VectorXd::Zero(nu);
    std::vector<Eigen::VectorXd> seq;
    seq.reserve(cfg.horizon);
    for (int k = 0; k < cfg.horizon; ++k) {
      for (int c = 0; c < nu; ++c) {
        const double step = spec.du_rate(c) * cfg.dt;
        u(c) = std::clamp(std::clamp(target(c), u(c) - step, u(c) + step), spec.u_min(c),
                          spec.u_max(c));
      }
      seq.push_back(u);
    }
    return seq;
  }

  std::vector<std::vector<Eigen::VectorXd>> stall_seeds(int i) const {
    const RobotSpec& spec = robots[i];
    const int nu = spec.model.nu();
    std::vector<std::vector<Eigen::VectorXd>> seeds;
    if (nu < 2) return seeds;
    Eigen::VectorXd target = Eigen::VectorXd::Zero(nu);
    target(0) = 0.5 * spec.u_max(0);
    target(1) = 0.7 * spec.u_max(1);
    seeds.push_back(ramped_seed(i, target));  // forward, turning left
    target(1) = 0.7 * spec.u_min(1);
    seeds.push_back(ramped_seed(i, target));  // forward, turning right
    if (spec.u_min(0) < 0.0) {
      target(0) = 0.5 * spec.u_min(0);
      target(1) = 0.0;
      seeds.push_back(ramped_seed(i, target));  // back out of a frontal block
    }
    return seeds;
  }

  // Plans that keep their separation residuals clean compare by tracking
  // objective; a violating plan must buy its way past a clean one.
  static double plan_score(const NmpcSolution& s) {
    return s.objective + 1e4 * s.max_separation_violation * s.max_separation_violation;
  }

  static bool better_plan(const NmpcSolution& a, const NmpcSolution& b) {
    const bool a_ok = a.status != NmpcStatus::Infeasible;
    const bool b_ok = b.status != NmpcStatus::Infeasible;
    if (a_ok != b_ok) return a_ok;
    return plan_score(a) < plan_score(b);
  }

  // True when robot i has been far from its goal without progress for long
  // enough that the nominal warm start is suspected of being stuck.
  bool update_stall_tracking(int i) {
    const double err = (state[i] - robots[i].z_ref).head<2>().norm();
    if (err < stall_best_err[i] - 0.02) {
      stall_best_err[i] = err;
      stall_rounds[i] = 0;
    } else {
      ++stall_rounds[i];
    }
    return err > 0.5 && stall_rounds[i] >= 30;
  }

  // ---- one distributed round ----------------------------------------------

  std::vector<Eigen::VectorXd> step_distributed() {
    const int N = cfg.horizon;

    // Realized bodies at the start of the round, for the safety audit.
    std::vector<Polytope> body_now(n);
    for (int i = 0; i < n; ++i) body_now[i] = body_at(i, state[i]);

    // Communication topology from current positions.
    std::vector<Eigen::Vector2d> pos(n);
    for (int i = 0; i < n; ++i) pos[i] = state[i].head<2>();
    std::vector<std::pair<int, int>> robot_pairs;  // index pairs, a < b
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if ((pos[a] - pos[b]).norm() <= cfg.communication_radius) robot_pairs.emplace_back(a, b);
    std::vector<std::vector<int>> obstacle_links(n);  // obstacle indices per robot
    for (int i = 0; i < n; ++i)
      for (std::size_t o = 0; o < obstacles.size(); ++o)
        if ((pos[i] - obstacle_centers[o]).norm() <= cfg.communication_radius)
          obstacle_links[i].push_back(static_cast<int>(o));

    // Neighbor plans and duals consumed this round (one copy per pair).
    std::vector<Publication> assumed(n);
    for (int i = 0; i < n; ++i) assumed[i] = assumed_publication(i);
    std::map<std::pair<int, int>, DualPairTrajectory> used_duals;
    for (const auto& [a, b] : robot_pairs) {
      const std::pair<int, int> key{ids[a], ids[b]};
      used_duals.emplace(key, assumed_duals(key, assumed[a].polys, assumed[b].polys));
    }
    for (int i = 0; i < n; ++i)
      for (int o : obstacle_links[i]) {
        const std::pair<int, int> key{ids[i], obstacle_ids[o]};
        used_duals.emplace(
            key, assumed_duals(key, assumed[i].polys,
                               std::vector<Polytope>(N, obstacles[o].shape)));
      }

    // Local solves.
    std::vector<NmpcStatus> status(n, NmpcStatus::Converged);
    std::vector<bool> used_fallback(n, false);
    std::vector<double> nmpc_seconds(n, 0.0);
    std::vector<std::vector<Eigen::VectorXd>> plan_inputs(n);
    std::vector<std::vector<Eigen::VectorXd>> plan_states(n);
    std::vector<std::vector<Polytope>> fresh_polys(n);

    for (int i = 0; i < n; ++i) {
      LocalNmpcProblem pb;
      pb.model = robots[i].model;
      pb.base_polytope = robots[i].base_polytope;
      pb.z0 = state[i];
      pb.horizon = N;
      pb.dt = cfg.dt;
      pb.weight_state = robots[i].weight_state;
      pb.weight_input = robots[i].weight_input;
      pb.weight_rate = robots[i].weight_rate;
      pb.z_ref = robots[i].z_ref;
      pb.u_min = robots[i].u_min;
      pb.u_max = robots[i].u_max;
      pb.du_rate = robots[i].du_rate;
      pb.u_prev = u_prev[i];
      pb.d_min = cfg.d_min;
      pb.safety_margin = cfg.safety_margin;
      pb.separation_weight_init = cfg.separation_weight_init;
      pb.consistency_weight = cfg.consistency_weight;

      for (const auto& [a, b] : robot_pairs) {
        if (a != i && b != i) continue;
        const int other = (a == i) ? b : a;
        const std::pair<int, int> key{ids[a], ids[b]};
        pb.pairs.push_back(make_pair_constraint(
            robots[i].base_polytope, assumed[other].polys, used_duals.at(key), a == i,
            0.5 * (pos[i] + pos[other])));
      }
      for (int o : obstacle_links[i]) {
        const std::pair<int, int> key{ids[i], obstacle_ids[o]};
        pb.pairs.push_back(make_pair_constraint(
            robots[i].base_polytope, std::vector<Polytope>(N, obstacles[o].shape),
            used_duals.at(key), true, 0.5 * (pos[i] + obstacle_centers[o])));
      }

      std::vector<Eigen::VectorXd> warm;
      const std::vector<Eigen::VectorXd>* warm_ptr = nullptr;
      if (!last_plan_inputs[i].empty()) {
        warm = shift_and_augment(last_plan_inputs[i]);
        warm_ptr = &warm;
      }

      const auto tic = Clock::now();
      NmpcSolution sol = solve_local_nmpc(pb, warm_ptr);
      if (update_stall_tracking(i)) {
        for (const auto& seed : stall_seeds(i)) {
          NmpcSolution alt = solve_local_nmpc(pb, &seed);
          if (better_plan(alt, sol)) sol = std::move(alt);
        }
      }
      nmpc_seconds[i] = seconds_since(tic);
      status[i] = sol.status;

      if (sol.status == NmpcStatus::Infeasible) {
        used_fallback[i] = true;
        ++consecutive_infeasible[i];
        plan_inputs[i] = fallback_inputs(i);
        plan_states[i] = rollout(robots[i].model, state[i], plan_inputs[i], cfg.dt);
      } else {
        consecutive_infeasible[i] = 0;
        plan_inputs[i] = sol.inputs;
        plan_states[i] = sol.states;
      }
      fresh_polys[i].reserve(N);
      for (int k = 1; k <= N; ++k) fresh_polys[i].push_back(body_at(i, plan_states[i][k]));
    }

    // Distance-prediction trace, evaluated at the first constrained step.
    if (cfg.trace_error_bound) {
      for (const auto& [a, b] : robot_pairs) {
        const std::pair<int, int> key{ids[a], ids[b]};
        const DualPairTrajectory& duals = used_duals.at(key);
        if (duals.length() == 0) continue;
        const Eigen::VectorXd& b_i_now = fresh_polys[a][0].b;
        const Eigen::VectorXd& b_j_now = fresh_polys[b][0].b;
        const Eigen::VectorXd& b_i_prev = assumed[a].polys[0].b;
        const Eigen::VectorXd& b_j_prev = assumed[b].polys[0].b;
        ErrorTraceRow row;
        row.t = t;
        row.i = ids[a];
        row.j = ids[b];
        row.dist_pi =
            dist_predicted_by_i(b_i_now, b_j_prev, duals.lambda_ij[0], duals.lambda_ji[0]);
        row.dist_pj =
            dist_predicted_by_j(b_i_prev, b_j_now, duals.lambda_ij[0], duals.lambda_ji[0]);
        row.e_predict = prediction_error(row.dist_pi, row.dist_pj);
        row.true_dist = pair_oracle_distance(fresh_polys[a][0], fresh_polys[b][0]);
        row.bound =
            prediction_error_bound(b_i_now, b_i_prev, b_j_now, b_j_prev, c_direct[a], c_direct[b]);
        row.bound_conservative = prediction_error_bound(b_i_now, b_i_prev, b_j_now, b_j_prev,
                                                        c_conservative[a], c_conservative[b]);
        const Pose2 pose_i = robots[a].model.pose_of(assumed[a].states[0]);
        const Pose2 pose_j = robots[b].model.pose_of(assumed[b].states[0]);
        row.trivial_bound =
            trivial_error_bound(robots[a].base_polytope, pose_i, robots[a].reach_per_step,
                                robots[b].base_polytope, pose_j, robots[b].reach_per_step,
                                c_direct[a], c_direct[b]);
        row.alpha_i = alpha_min(robots[a].base_polytope, pose_i, cfg.accepted_error(0),
                                cfg.accepted_error(1), cfg.accepted_error(2));
        row.alpha_j = alpha_min(robots[b].base_polytope, pose_j, cfg.accepted_error(0),
                                cfg.accepted_error(1), cfg.accepted_error(2));
        row.ratio_i = normalization_ratio(b_i_now, b_i_prev, row.alpha_i);
        row.ratio_j = normalization_ratio(b_j_now, b_j_prev, row.alpha_j);
        log.error_trace.push_back(std::move(row));
      }
    }

    // Publish the shifted plans and refresh the pair duals on them.
    std::vector<Publication> round_pub(n);
    for (int i = 0; i < n; ++i) {
      std::vector<Eigen::VectorXd> horizon_states(plan_states[i].begin() + 1,
                                                  plan_states[i].end());
      round_pub[i].states = shifted_copy(horizon_states);
      round_pub[i].polys = shifted_copy(fresh_polys[i]);
    }

    std::map<std::pair<int, int>, DualPairTrajectory> round_duals;
    std::map<std::pair<int, int>, double> pair_seconds;
    std::vector<double> ca_seconds(n, 0.0);
    for (const auto& [a, b] : robot_pairs) {
      const std::pair<int, int> key{ids[a], ids[b]};
      const DualPairTrajectory warm = shift_dual_trajectory(used_duals.at(key), 1);
      const auto tic = Clock::now();
      round_duals.emplace(key, solve_ca_pair(key.first, key.second, round_pub[a].polys,
                                             round_pub[b].polys, cfg.d_min, &warm));
      const double dt_s = seconds_since(tic);
      pair_seconds[key] = dt_s;
      ca_seconds[a] += dt_s;  // pair owner = lower id
    }
    for (int i = 0; i < n; ++i) {
      for (int o : obstacle_links[i]) {
        const std::pair<int, int> key{ids[i], obstacle_ids[o]};
        const DualPairTrajectory warm = shift_dual_trajectory(used_duals.at(key), 1);
        const auto tic = Clock::now();
        round_duals.emplace(key,
                            solve_ca_pair(key.first, key.second, round_pub[i].polys,
                                          std::vector<Polytope>(N, obstacles[o].shape), cfg.d_min,
                                          &warm));
        const double dt_s = seconds_since(tic);
        pair_seconds[key] = dt_s;
        ca_seconds[i] += dt_s;
      }
    }
    publications.push_back(std::move(round_pub));
    duals_history.push_back(std::move(round_duals));

    // Apply first inputs, log, advance.
    std::vector<Eigen::VectorXd> applied(n);
    std::vector<RobotStepLog> rows(n);
    for (int i = 0; i < n; ++i) {
      applied[i] = plan_inputs[i][0];
      RobotStepLog& row = rows[i];
      row.state = state[i];
      row.input = applied[i];
      row.nmpc_status = status[i];
      row.fallback = used_fallback[i];
      row.nmpc_seconds = nmpc_seconds[i];
      row.ca_seconds = ca_seconds[i];
      row.stage_cost_value =
          stage_cost(robots[i].weight_state, robots[i].weight_input, robots[i].weight_rate,
                     robots[i].z_ref, state[i], applied[i], u_prev[i]);
    }

    log_pair_rows(body_now, robot_pairs, obstacle_links, pair_seconds, duals_history.back(), rows);

    for (int i = 0; i < n; ++i) {
      state[i] = robots[i].model.step(state[i], applied[i], cfg.dt);
      u_prev[i] = applied[i];
      last_plan_inputs[i] = plan_inputs[i];
    }
    log.steps.push_back(std::move(rows));
    finish_round();
    return applied;
  }

  // ---- one centralized round ----------------------------------------------

  std::vector<Eigen::VectorXd> step_centralized() {
    CentralizedProblem pb;
    pb.horizon = cfg.horizon;
    pb.dt = cfg.dt;
    pb.d_min = cfg.d_min;
    pb.safety_margin = cfg.safety_margin;
    pb.separation_weight_init = cfg.separation_weight_init;
    pb.consistency_weight = cfg.consistency_weight;
    for (int i = 0; i < n; ++i) {
      pb.models.push_back(robots[i].model);
      pb.base_polytopes.push_back(robots[i].base_polytope);
      pb.z0.push_back(state[i]);
      pb.weight_state.push_back(robots[i].weight_state);
      pb.weight_input.push_back(robots[i].weight_input);
      pb.weight_rate.push_back(robots[i].weight_rate);
      pb.z_ref.push_back(robots[i].z_ref);
      pb.u_min.push_back(robots[i].u_min);
      pb.u_max.push_back(robots[i].u_max);
      pb.du_rate.push_back(robots[i].du_rate);
      pb.u_prev.push_back(u_prev[i]);
    }
    std::vector<Polytope> body_now(n);
    std::vector<Eigen::Vector2d> pos(n);
    for (int i = 0; i < n; ++i) {
      body_now[i] = body_at(i, state[i]);
      pos[i] = state[i].head<2>();
    }
    std::vector<std::pair<int, int>> robot_pairs;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if ((pos[a] - pos[b]).norm() <= cfg.communication_radius) robot_pairs.emplace_back(a, b);
    pb.pairs = robot_pairs;

    CentralizedSolution warm;
    const CentralizedSolution* warm_ptr = nullptr;
    if (have_central_warm) {
      warm = central_warm;
      for (auto& seq : warm.inputs) seq = shift_and_augment(seq);
      for (auto& [key, duals] : warm.duals) duals = shift_dual_trajectory(duals, 1);
      warm_ptr = &warm;
    }

    const auto tic = Clock::now();
    const CentralizedSolution sol = solve_centralized_nmpc(pb, warm_ptr);
    const double joint_seconds = seconds_since(tic);
    log.central_seconds.push_back(joint_seconds);

    const bool infeasible = sol.status == NmpcStatus::Infeasible;
    central_consecutive_infeasible = infeasible ? central_consecutive_infeasible + 1 : 0;

    std::vector<std::vector<Eigen::VectorXd>> plan_inputs(n);
    std::vector<std::vector<Eigen::VectorXd>> plan_states(n);
    for (int i = 0; i < n; ++i) {
      if (infeasible) {
        plan_inputs[i] = fallback_inputs(i);
        plan_states[i] = rollout(robots[i].model, state[i], plan_inputs[i], cfg.dt);
      } else {
        plan_inputs[i] = sol.inputs[i];
        plan_states[i] = sol.states[i];
      }
    }

    if (cfg.trace_error_bound && !infeasible) {
      for (const auto& [a, b] : robot_pairs) {
        const auto it = sol.duals.find({a, b});
        if (it == sol.duals.end() || it->second.length() == 0) continue;
        const DualPairTrajectory& duals = it->second;
        const Eigen::VectorXd b_i = body_at(a, plan_states[a][1]).b;
        const Eigen::VectorXd b_j = body_at(b, plan_states[b][1]).b;
        ErrorTraceRow row;
        row.t = t;
        row.i = ids[a];
        row.j = ids[b];
        // No staleness: both estimates price the same fresh offsets.
        row.dist_pi = dist_predicted_by_i(b_i, b_j, duals.lambda_ij[0], duals.lambda_ji[0]);
        row.dist_pj = dist_predicted_by_j(b_i, b_j, duals.lambda_ij[0], duals.lambda_ji[0]);
        row.e_predict = prediction_error(row.dist_pi, row.dist_pj);
        row.true_dist =
            pair_oracle_distance(body_at(a, plan_states[a][1]), body_at(b, plan_states[b][1]));
        row.bound = 0.0;
        row.bound_conservative = 0.0;
        const Pose2 pose_i = robots[a].model.pose_of(plan_states[a][1]);
        const Pose2 pose_j = robots[b].model.pose_of(plan_states[b][1]);
        row.trivial_bound =
            trivial_error_bound(robots[a].base_polytope, pose_i, robots[a].reach_per_step,
                                robots[b].base_polytope, pose_j, robots[b].reach_per_step,
                                c_direct[a], c_direct[b]);
        row.alpha_i = alpha_min(robots[a].base_polytope, pose_i, cfg.accepted_error(0),
                                cfg.accepted_error(1), cfg.accepted_error(2));
        row.alpha_j = alpha_min(robots[b].base_polytope, pose_j, cfg.accepted_error(0),
                                cfg.accepted_error(1), cfg.accepted_error(2));
        row.ratio_i = normalization_ratio(b_i, b_i, row.alpha_i);
        row.ratio_j = normalization_ratio(b_j, b_j, row.alpha_j);
        log.error_trace.push_back(std::move(row));
      }
    }

    std::vector<Eigen::VectorXd> applied(n);
    std::vector<RobotStepLog> rows(n);
    for (int i = 0; i < n; ++i) {
      applied[i] = plan_inputs[i][0];
      RobotStepLog& row = rows[i];
      row.state = state[i];
      row.input = applied[i];
      row.nmpc_status = sol.status;
      row.fallback = infeasible;
      row.nmpc_seconds = 0.0;  // the joint solve time is in central_seconds
      row.ca_seconds = 0.0;
      row.stage_cost_value =
          stage_cost(robots[i].weight_state, robots[i].weight_input, robots[i].weight_rate,
                     robots[i].z_ref, state[i], applied[i], u_prev[i]);
    }

    std::map<std::pair<int, int>, double> pair_seconds;  // folded into the joint solve
    std::map<std::pair<int, int>, DualPairTrajectory> round_duals;
    for (const auto& [a, b] : robot_pairs) {
      const auto it = sol.duals.find({a, b});
      if (it != sol.duals.end()) round_duals.emplace(std::make_pair(ids[a], ids[b]), it->second);
    }
    std::vector<std::vector<int>> no_obstacles(n);
    log_pair_rows(body_now, robot_pairs, no_obstacles, pair_seconds, round_duals, rows);

    for (int i = 0; i < n; ++i) {
      state[i] = robots[i].model.step(state[i], applied[i], cfg.dt);
      u_prev[i] = applied[i];
      last_plan_inputs[i] = plan_inputs[i];
    }
    if (!infeasible) {
      central_warm = sol;
      have_central_warm = true;
    }
    log.steps.push_back(std::move(rows));
    finish_round();
    return applied;
  }

  // Fills the per-pair oracle/dual rows and the per-robot min-distance field.
  void log_pair_rows(const std::vector<Polytope>& body_now,
                     const std::vector<std::pair<int, int>>& robot_pairs,
                     const std::vector<std::vector<int>>& obstacle_links,
                     const std::map<std::pair<int, int>, double>& pair_seconds,
                     const std::map<std::pair<int, int>, DualPairTrajectory>& round_duals,
                     std::vector<RobotStepLog>& rows) {
    std::set<std::pair<int, int>> constrained;
    for (const auto& [a, b] : robot_pairs) constrained.insert({ids[a], ids[b]});
    for (int i = 0; i < n; ++i)
      for (int o : obstacle_links[i]) constrained.insert({ids[i], obstacle_ids[o]});

    const auto record = [&](const std::pair<int, int>& key, const Polytope& pa,
                            const Polytope& pb) {
      PairStepLog entry;
      entry.constrained = constrained.count(key) > 0;
      entry.oracle_distance = pair_oracle_distance(pa, pb);
      const auto ts = pair_seconds.find(key);
      entry.ca_seconds = ts == pair_seconds.end() ? 0.0 : ts->second;
      const auto rd = round_duals.find(key);
      if (rd != round_duals.end() && rd->second.length() > 0) {
        entry.dual_min_distance =
            *std::min_element(rd->second.distance.begin(), rd->second.distance.end());
      }
      auto& seq = log.pair_steps[key];
      seq.resize(static_cast<std::size_t>(t), PairStepLog{});  // pad pairs formed mid-run
      seq.push_back(entry);
      return entry.oracle_distance;
    };

    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        const double d = record({ids[a], ids[b]}, body_now[a], body_now[b]);
        rows[a].min_neighbor_distance = std::min(rows[a].min_neighbor_distance, d);
        rows[b].min_neighbor_distance = std::min(rows[b].min_neighbor_distance, d);
      }
      for (std::size_t o = 0; o < obstacles.size(); ++o) {
        const double d =
            record({ids[a], obstacle_ids[o]}, body_now[a], obstacles[o].shape);
        rows[a].min_neighbor_distance = std::min(rows[a].min_neighbor_distance, d);
      }
    }
  }

  void finish_round() {
    ++t;
    log.completed_steps = t;
    const bool central_abort =
        mode == RunMode::Centralized && central_consecutive_infeasible > 5;
    int worst = -1;
    for (int i = 0; i < n; ++i)
      if (consecutive_infeasible[i] > 5) worst = i;
    if (central_abort || worst >= 0) {
      aborted = true;
      std::ostringstream oss;
      if (central_abort) {
        oss << "joint solver infeasible for " << central_consecutive_infeasible
            << " consecutive rounds";
      } else {
        oss << "robot " << ids[worst] << " infeasible for " << consecutive_infeasible[worst]
            << " consecutive rounds";
      }
      log.aborted = true;
      log.abort_reason = oss.str();
    }
  }

  std::vector<Eigen::VectorXd> step() {
    if (aborted) return {};
    return mode == RunMode::Distributed ? step_distributed() : step_centralized();
  }

  SimulationLog snapshot() const {
    SimulationLog out = log;
    out.final_states = state;
    return out;
  }
};

CoordinationWorld::CoordinationWorld(std::vector<RobotSpec> robots,
                                     std::vector<ObstacleSpec> obstacles,
                                     CoordinationSettings settings, RunMode mode)
    : impl_(std::make_unique<Impl>(std::move(robots), std::move(obstacles), std::move(settings),
                                   mode)) {}

CoordinationWorld::~CoordinationWorld() = default;

std::vector<Eigen::VectorXd> CoordinationWorld::step() { return impl_->step(); }

int CoordinationWorld::time() const { return impl_->t; }

bool CoordinationWorld::aborted() const { return impl_->aborted; }

const std::vector<Eigen::VectorXd>& CoordinationWorld::states() const { return impl_->state; }

SimulationLog CoordinationWorld::log() const { return impl_->snapshot(); }

SimulationLog run_coordination(const std::vector<RobotSpec>& robots,
                               const std::vector<ObstacleSpec>& obstacles,
                               const CoordinationSettings& settings, int T, RunMode mode) {
  if (T < 0) throw std::invalid_argument("run_coordination: negative step count");
  CoordinationWorld world(robots, obstacles, settings, mode);
  for (int step = 0; step < T && !world.aborted(); ++step) world.step();
  return world.log();
}

}  // namespace polycoord
