#include "polycoord/exports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace polycoord {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_or_blank(double v) { return std::isfinite(v) ? fmt(v) : std::string(); }

const char* status_name(NmpcStatus s) {
  switch (s) {
    case NmpcStatus::Converged: return "converged";
    case NmpcStatus::MaxIter: return "max_iter";
    case NmpcStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

class CsvFile {
 public:
  CsvFile(const std::filesystem::path& dir, const std::string& name)
      : name_(name), out_(dir / name, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("exports: cannot write " + (dir / name).string());
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k > 0) out_ << ',';
      out_ << cells[k];
    }
    out_ << '\n';
  }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::ofstream out_;
};

struct Stats {
  double sum = 0.0;
  double max = 0.0;
  int n = 0;
  void add(double v) {
    sum += v;
    max = std::max(max, v);
    ++n;
  }
  double avg() const { return n > 0 ? sum / n : 0.0; }
};

}  // namespace

std::vector<std::string> export_outputs(const SimulationLog& log, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("exports: cannot create directory " + dir);
  const fs::path base(dir);
  const int R = static_cast<int>(log.robot_ids.size());
  const bool centralized = log.mode == RunMode::Centralized;
  std::vector<std::string> written;

  {
    CsvFile f(base, "trajectories.csv");
    f.row({"t", "robot_id", "x", "y", "psi", "v", "a_or_v_cmd", "delta_or_omega",
           "min_neighbor_dist", "nmpc_status"});
    for (int t = 0; t < log.completed_steps; ++t) {
      for (int r = 0; r < R; ++r) {
        const RobotStepLog& s = log.steps[t][r];
        const bool bicycle = s.state.size() == 4;
        f.row({std::to_string(t), std::to_string(log.robot_ids[r]), fmt(s.state(0)),
               fmt(s.state(1)), fmt(s.state(2)), bicycle ? fmt(s.state(3)) : std::string(),
               fmt(s.input(0)), fmt(s.input(1)), fmt_or_blank(s.min_neighbor_distance),
               status_name(s.nmpc_status)});
      }
    }
    written.push_back(f.name());
  }

  {
    CsvFile f(base, "timings.csv");
    f.row({"component", "robot_id", "avg_s", "max_s"});
    std::vector<Stats> nmpc(R), ca(R);
    Stats per_robot_total;  // per-robot per-step nmpc + ca
    for (int t = 0; t < log.completed_steps; ++t) {
      for (int r = 0; r < R; ++r) {
        nmpc[r].add(log.steps[t][r].nmpc_seconds);
        ca[r].add(log.steps[t][r].ca_seconds);
        per_robot_total.add(log.steps[t][r].nmpc_seconds + log.steps[t][r].ca_seconds);
      }
    }
    for (int r = 0; r < R; ++r)
      f.row({"nmpc", std::to_string(log.robot_ids[r]), fmt(nmpc[r].avg()), fmt(nmpc[r].max)});
    for (int r = 0; r < R; ++r)
      f.row({"ca", std::to_string(log.robot_ids[r]), fmt(ca[r].avg()), fmt(ca[r].max)});
    if (centralized) {
      Stats central;
      for (double v : log.central_seconds) central.add(v);
      f.row({"central", "", fmt(central.avg()), fmt(central.max)});
      f.row({"total", "", fmt(central.avg()), fmt(central.max)});
    } else {
      f.row({"total", "", fmt(per_robot_total.avg()), fmt(per_robot_total.max)});
    }
    written.push_back(f.name());
  }

  {
    CsvFile f(base, "costs.csv");
    f.row({"robot_id", "cost"});
    double total = 0.0;
    for (int r = 0; r < R; ++r) {
      double sum = 0.0;
      for (int t = 0; t < log.completed_steps; ++t) sum += log.steps[t][r].stage_cost_value;
      f.row({std::to_string(log.robot_ids[r]), fmt(sum)});
      total += sum;
    }
    f.row({"total_sum", fmt(total)});
    f.row({"total_avg", fmt(R > 0 ? total / R : 0.0)});
    written.push_back(f.name());
  }

  if (!log.error_trace.empty()) {
    CsvFile f(base, "error_trace.csv");
    f.row({"t", "i", "j", "dist_pi", "dist_pj", "true_dist", "e_predict", "bound",
           "bound_conservative", "trivial_bound", "alpha_i", "alpha_j", "ratio_i", "ratio_j"});
    for (const ErrorTraceRow& e : log.error_trace) {
      f.row({std::to_string(e.t), std::to_string(e.i), std::to_string(e.j), fmt(e.dist_pi),
             fmt(e.dist_pj), fmt(e.true_dist), fmt(e.e_predict), fmt(e.bound),
             fmt(e.bound_conservative), fmt(e.trivial_bound), fmt(e.alpha_i), fmt(e.alpha_j),
             e.ratio_i ? fmt(*e.ratio_i) : std::string(),
             e.ratio_j ? fmt(*e.ratio_j) : std::string()});
    }
    written.push_back(f.name());
  }

  {
    CsvFile f(base, "fig_distances.csv");
    f.row({"t", "pair_i", "pair_j", "oracle_distance", "dual_min_distance", "constrained"});
    for (int t = 0; t < log.completed_steps; ++t) {
      for (const auto& [key, rows] : log.pair_steps) {
        if (t >= static_cast<int>(rows.size())) continue;
        const PairStepLog& p = rows[t];
        f.row({std::to_string(t), std::to_string(key.first), std::to_string(key.second),
               fmt(p.oracle_distance), fmt(p.dual_min_distance), p.constrained ? "1" : "0"});
      }
    }
    written.push_back(f.name());
  }

  {
    CsvFile f(base, "fig_speeds.csv");
    f.row({"t", "robot_id", "v", "y"});
    for (int t = 0; t < log.completed_steps; ++t) {
      for (int r = 0; r < R; ++r) {
        const RobotStepLog& s = log.steps[t][r];
        const double v = s.state.size() == 4 ? s.state(3) : s.input(0);
        f.row({std::to_string(t), std::to_string(log.robot_ids[r]), fmt(v), fmt(s.state(1))});
      }
    }
    written.push_back(f.name());
  }

  if (!log.error_trace.empty()) {
    CsvFile f(base, "fig_error_bound.csv");
    f.row({"t", "i", "j", "e_predict", "bound", "trivial_bound"});
    for (const ErrorTraceRow& e : log.error_trace) {
      f.row({std::to_string(e.t), std::to_string(e.i), std::to_string(e.j), fmt(e.e_predict),
             fmt(e.bound), fmt(e.trivial_bound)});
    }
    written.push_back(f.name());
  }

  {
    CsvFile f(base, "fig_computation.csv");
    f.row({"t", "total_nmpc_seconds", "total_ca_seconds", "central_seconds"});
    for (int t = 0; t < log.completed_steps; ++t) {
      double nmpc = 0.0, ca = 0.0;
      for (int r = 0; r < R; ++r) {
        nmpc += log.steps[t][r].nmpc_seconds;
        ca += log.steps[t][r].ca_seconds;
      }
      const bool has_central = t < static_cast<int>(log.central_seconds.size());
      f.row({std::to_string(t), fmt(nmpc), fmt(ca),
             has_central ? fmt(log.central_seconds[t]) : std::string()});
    }
    written.push_back(f.name());
  }

  return written;
}

}  // namespace polycoord
