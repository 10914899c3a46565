#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "uavmec/model.hpp"
#include "uavmec/offload_solver.hpp"
#include "uavmec/scenario.hpp"
#include "uavmec/trajectory_solver.hpp"

namespace uavmec {

enum class Scheme { proposed, straight_line, semi_circle };
enum class RunStatus { converged, iteration_limit, infeasible };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::proposed:
      return "proposed";
    case Scheme::straight_line:
      return "straight-line";
    case Scheme::semi_circle:
      return "semi-circle";
  }
  return "unknown";
}

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::converged:
      return "converged";
    case RunStatus::iteration_limit:
      return "iteration-limit";
    case RunStatus::infeasible:
      return "infeasible";
  }
  return "unknown";
}

/// Constant-speed straight flight from q0 to qF.
inline Trajectory straight_line(const Scenario& s) {
  Trajectory t(2, s.N + 1);
  for (int n = 0; n <= s.N; ++n) t.col(n) = s.q0 + (s.qF - s.q0) * (static_cast<double>(n) / s.N);
  t.col(0) = s.q0;
  t.col(s.N) = s.qF;
  return t;
}

/**
 * Semi-circle with diameter q0-qF, sampled at equal central angles, on the
 * side of the line that holds the centroid of the users (left side on a tie).
 *
 * @throws Error(infeasible) "baseline violates V_max" when the arc is too long
 */
inline Trajectory semi_circle(const Scenario& s) {
  const double L = (s.qF - s.q0).norm();
  if (std::numbers::pi * L / (2.0 * s.T) > s.V_max * (1.0 + 1e-12)) {
    throw Error(ErrorKind::infeasible, "baseline violates V_max");
  }
  Trajectory t(2, s.N + 1);
  if (L == 0.0) {
    for (int n = 0; n <= s.N; ++n) t.col(n) = s.q0;
    return t;
  }
  const Vec2 u = (s.qF - s.q0) / L;
  const Vec2 v(-u.y(), u.x());
  Vec2 centroid = Vec2::Zero();
  for (const Vec2& q : s.user_pos) centroid += q;
  if (!s.user_pos.empty()) centroid /= static_cast<double>(s.user_pos.size());
  const double side = v.dot(centroid - s.q0) < 0.0 ? -1.0 : 1.0;
  const Vec2 c = 0.5 * (s.q0 + s.qF);
  const double r = 0.5 * L;
  for (int n = 0; n <= s.N; ++n) {
    const double phi = std::numbers::pi * (1.0 - static_cast<double>(n) / s.N);
    t.col(n) = c + r * (std::cos(phi) * u + side * std::sin(phi) * v);
  }
  t.col(0) = s.q0;
  t.col(s.N) = s.qF;
  return t;
}

struct OuterRow {
  int iteration = 0;
  double energy = 0.0;    ///< E_u^i, joules
  double variable = 0.0;  ///< propulsion + UAV computing, joules
  double omega = 0.0;     ///< price weight of the accepted trajectory step
  int sca_iterations = 0;
};

/// One trajectory half-step: the fixed offloading plan, the prices and the SCA log.
struct ScaRecord {
  int outer = 0;
  double omega = 0.0;
  PlanPart part;
  ScaState state;
  bool accepted = false;
};

struct PlannerResult {
  Plan plan;
  EnergyLedger ledger;
  std::vector<OuterRow> outer_trace;
  Scheme scheme = Scheme::proposed;
  RunStatus status = RunStatus::infeasible;
  std::string message;
  int iterations = 0;
  OffloadSolution offload;        ///< offloading solve behind `plan`
  std::vector<ScaRecord> sca_runs;
};

struct PlannerOptions {
  int max_outer = 50;
  double omega0 = 1.0;      ///< first price weight tried at each outer iteration
  int max_halvings = 30;
  int sca_max_iter = 100;
  OffloadOptions offload;
};

inline double variable_energy(const EnergyLedger& e) {
  return e.propulsion.sum() + e.uav_compute.sum();
}

/// Evaluates a fixed trajectory: one offloading solve and the energy ledger.
inline PlannerResult run_fixed(const Scenario& s, const Trajectory& traj, Scheme scheme,
                               const PlannerOptions& opt = {}) {
  PlannerResult r;
  r.scheme = scheme;
  r.offload = solve_p2(s, traj, opt.offload);
  r.plan = make_plan(traj, r.offload.plan_part);
  r.ledger = evaluate_ledger(s, r.plan);
  r.outer_trace.push_back({1, r.ledger.uav_total, variable_energy(r.ledger), 0.0, 0});
  r.iterations = 1;
  r.status = RunStatus::converged;
  return r;
}

inline PlannerResult run_baseline(const Scenario& s, Scheme scheme, const PlannerOptions& opt = {}) {
  validate(s);
  if (scheme == Scheme::proposed) {
    throw Error(ErrorKind::invalid_argument, "run_baseline: the proposed scheme is not a baseline");
  }
  const Trajectory traj = scheme == Scheme::straight_line ? straight_line(s) : semi_circle(s);
  const double hop = s.V_max * s.slot_duration();
  for (int n = 0; n < s.N; ++n) {
    if ((traj.col(n + 1) - traj.col(n)).norm() > hop * (1.0 + 1e-12)) {
      throw Error(ErrorKind::infeasible, "baseline violates V_max");
    }
  }
  return run_fixed(s, traj, scheme, opt);
}

/**
 * Alternates the offloading solve and the trajectory refinement from the
 * straight line until successive UAV energies differ by at most xi1.
 *
 * The trajectory step prices energy causality with the offloading
 * multipliers times a weight omega. The weight starts at omega0 and is
 * halved until the UAV energy after re-solving the offloading does not
 * increase; omega = 0 is the unpriced subproblem. When no weight yields
 * descent the incumbent is returned as converged.
 *
 * @throws Error(infeasible) "infeasible scenario" when the straight line
 *   admits no plan
 */
inline PlannerResult run_algorithm1(const Scenario& s, const PlannerOptions& opt = {}) {
  validate(s);
  PlannerResult best;
  best.scheme = Scheme::proposed;
  Trajectory traj = straight_line(s);
  try {
    best.offload = solve_p2(s, traj, opt.offload);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::infeasible) {
      throw Error(ErrorKind::infeasible, std::string("infeasible scenario: ") + e.what());
    }
    throw;
  }
  best.plan = make_plan(traj, best.offload.plan_part);
  best.ledger = evaluate_ledger(s, best.plan);
  best.outer_trace.push_back({0, best.ledger.uav_total, variable_energy(best.ledger), 0.0, 0});
  best.status = RunStatus::iteration_limit;

  for (int i = 1; i <= opt.max_outer; ++i) {
    const double e_old = variable_energy(best.ledger);
    double omega = opt.omega0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings && !accepted; ++h, omega *= 0.5) {
      const P4Prices prices{best.offload.duals.nu, omega};
      ScaOptions so;
      so.xi = s.xi;
      so.max_iter = opt.sca_max_iter;
      so.prices = omega > 0.0 ? &prices : nullptr;
      ScaRecord rec{i, omega, best.offload.plan_part, {}, false};
      ScaResult sca;
      try {
        sca = solve_p3(s, best.offload.plan_part, best.plan.traj, so);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::iteration_limit || e.kind() == ErrorKind::infeasible) continue;
        throw;
      }
      rec.state = sca.state;
      OffloadSolution sol = solve_p2(s, sca.traj, opt.offload);
      Plan plan = make_plan(sca.traj, sol.plan_part);
      EnergyLedger ledger = evaluate_ledger(s, plan);
      const double e_new = variable_energy(ledger);
      if (e_new <= e_old + 1e-12 * std::max(1.0, std::abs(e_old))) {
        rec.accepted = true;
        accepted = true;
        best.offload = std::move(sol);
        best.plan = std::move(plan);
        best.ledger = std::move(ledger);
        best.outer_trace.push_back({i, best.ledger.uav_total, e_new, omega, sca.state.iter});
      }
      best.sca_runs.push_back(std::move(rec));
    }
    best.iterations = i;
    if (!accepted) {
      best.outer_trace.push_back({i, best.ledger.uav_total, e_old, 0.0, 0});
      best.status = RunStatus::converged;
      best.message = "no descent step";
      break;
    }
    if (std::abs(e_old - best.outer_trace.back().variable) <= s.xi1) {
      best.status = RunStatus::converged;
      break;
    }
  }
  if (best.status == RunStatus::iteration_limit) best.message = "outer iteration limit";
  return best;
}

inline PlannerResult run_scheme(const Scenario& s, Scheme scheme, const PlannerOptions& opt = {}) {
  return scheme == Scheme::proposed ? run_algorithm1(s, opt) : run_baseline(s, scheme, opt);
}

struct SweepCell {
  double T = 0.0;
  Scheme scheme = Scheme::proposed;
  bool ok = false;
  std::string error;
  PlannerResult result;
};

/**
 * Runs every (T, scheme) cell, ordered by T and then by the given scheme
 * order. Cells run on at most `threads` workers (0 = hardware concurrency).
 * A failing cell is marked with its error; the others are unaffected.
 */
inline std::vector<SweepCell> sweep_T(const Scenario& s, const std::vector<double>& T_values,
                                      const std::vector<Scheme>& schemes,
                                      const PlannerOptions& opt = {}, unsigned threads = 0) {
  std::vector<SweepCell> cells;
  for (double T : T_values) {
    for (Scheme sc : schemes) {
      SweepCell c;
      c.T = T;
      c.scheme = sc;
      cells.push_back(std::move(c));
    }
  }
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, cells.size())));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      SweepCell& c = cells[i];
      Scenario sc = s;
      sc.T = c.T;
      try {
        c.result = run_scheme(sc, c.scheme, opt);
        c.ok = true;
      } catch (const std::exception& e) {
        c.error = e.what();
        c.result.scheme = c.scheme;
        c.result.status = RunStatus::infeasible;
        c.result.message = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return cells;
}

/// Rows: n x y speed, with the speed flown from waypoint n to n+1 (0 at the end).
inline void write_trajectory(std::ostream& os, const Scenario& s, const Trajectory& traj) {
  os << "# n x y speed\n" << std::setprecision(12);
  for (int n = 0; n < traj.cols(); ++n) {
    const double v = n + 1 < traj.cols() ? (traj.col(n + 1) - traj.col(n)).norm() / s.slot_duration() : 0.0;
    os << n + 1 << ' ' << traj(0, n) << ' ' << traj(1, n) << ' ' << v << '\n';
  }
}

/// Rows: n, harvested_k, local_k, tx_k for every user, uav_compute, propulsion.
inline void write_ledger(std::ostream& os, const EnergyLedger& e) {
  const int K = static_cast<int>(e.harvested.rows());
  const int N = static_cast<int>(e.harvested.cols());
  os << "# n";
  for (const char* part : {"harvested", "local", "tx"}) {
    for (int k = 0; k < K; ++k) os << ' ' << part << '_' << k + 1;
  }
  os << " uav_compute propulsion\n" << std::setprecision(12);
  for (int n = 0; n < N; ++n) {
    os << n + 1;
    for (const Eigen::MatrixXd* m : {&e.harvested, &e.local, &e.tx}) {
      for (int k = 0; k < K; ++k) os << ' ' << (*m)(k, n);
    }
    os << ' ' << e.uav_compute(n) << ' ' << e.propulsion(n) << '\n';
  }
  os << "# uav_total " << e.uav_total << '\n';
}

/// Rows: i E_u.
inline void write_trace(std::ostream& os, const PlannerResult& r) {
  os << "# i E_u\n" << std::setprecision(15);
  for (const auto& row : r.outer_trace) os << row.iteration << ' ' << row.energy << '\n';
}

}  // namespace uavmec
