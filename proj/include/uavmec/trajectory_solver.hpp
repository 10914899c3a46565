#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uavmec/model.hpp"
#include "uavmec/offload_solver.hpp"
#include "uavmec/qcqp.hpp"

namespace uavmec {

/**
 * Concave quadratic lower bound on user k's harvested energy over slots
 * 0..n, tangent at an expansion trajectory:
 *
 *   G * sum_i (H^2 + 2 d_j(i) - ||q_i - q_k||^2) / (H^2 + d_j(i))^2,
 *
 * with G = (T/N) eta P_u beta0 and d_j(i) the squared expansion distance.
 * The pinned start column enters as a constant.
 */
struct HarvestBound {
  int k = 0;
  int n = 0;
  Eigen::VectorXd weight;  ///< G / (H^2 + d_j(i))^2 for i = 0..n
  Eigen::VectorXd offset;  ///< G (H^2 + 2 d_j(i)) / (H^2 + d_j(i))^2
  Vec2 user = Vec2::Zero();

  /// Bound value at a candidate trajectory (joules).
  double value(const Trajectory& traj) const {
    double v = 0.0;
    for (int i = 0; i <= n; ++i) v += offset(i) - weight(i) * (traj.col(i) - user).squaredNorm();
    return v;
  }

  /// Gradient with respect to every trajectory column (2 x (n+1)).
  Eigen::Matrix2Xd gradient(const Trajectory& traj) const {
    Eigen::Matrix2Xd g(2, n + 1);
    for (int i = 0; i <= n; ++i) g.col(i) = -2.0 * weight(i) * (traj.col(i) - user);
    return g;
  }
};

inline HarvestBound sca_lower_bound(const Scenario& s, const Trajectory& expansion, int k, int n) {
  if (k < 0 || k >= s.K()) throw Error(ErrorKind::out_of_range, "sca_lower_bound: user index out of range");
  if (n < 0 || n >= s.N || n >= expansion.cols()) {
    throw Error(ErrorKind::out_of_range, "sca_lower_bound: slot index out of range");
  }
  const double G = s.slot_duration() * s.eta * s.P_u * s.beta0;
  const double H2 = s.H * s.H;
  HarvestBound b;
  b.k = k;
  b.n = n;
  b.user = s.user_pos[k];
  b.weight.resize(n + 1);
  b.offset.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double dj = (expansion.col(i) - b.user).squaredNorm();
    const double D = H2 + dj;
    b.weight(i) = G / (D * D);
    b.offset(i) = G * (H2 + 2.0 * dj) / (D * D);
  }
  return b;
}

/// Row description of an assembled trajectory subproblem.
struct P4Row {
  enum class Kind { speed, energy };
  Kind kind = Kind::speed;
  int k = -1;          ///< user (energy rows)
  int n = 0;           ///< slot (0-based)
  double scale = 1.0;  ///< the row is the raw constraint divided by this value
};

/**
 * Trajectory subproblem over the free waypoints q_1..q_{N-1}, stored as
 * x = (x_1, y_1, x_2, y_2, ...). The endpoints are substituted out.
 */
struct P4 {
  qcqp::QcqpProblem problem;
  std::vector<P4Row> rows;
  double propulsion_const = 0.0;  ///< objective = propulsion + prices (joules)
};

/// Multipliers pricing energy causality in the trajectory objective (J/J).
struct P4Prices {
  Eigen::MatrixXd nu;  ///< K x N
  double weight = 1.0;
};

namespace detail {

/// Free-variable layout of a trajectory; columns 0 and N are fixed.
struct WaypointMap {
  int N = 0;
  const Trajectory* fixed = nullptr;

  int dim() const { return 2 * (N - 1); }
  bool is_free(int col) const { return col >= 1 && col <= N - 1; }
  int index(int col) const { return 2 * (col - 1); }
};

/// Adds w ||q_a - q_b||^2 to a quadratic, with fixed columns as constants.
inline void add_segment(qcqp::Quadratic& f, const WaypointMap& m, double w, int a, int b) {
  const bool fa = m.is_free(a);
  const bool fb = m.is_free(b);
  Vec2 e = Vec2::Zero();
  if (!fa) e += m.fixed->col(a);
  if (!fb) e -= m.fixed->col(b);
  for (int c = 0; c < 2; ++c) {
    if (fa) {
      const int ia = m.index(a) + c;
      f.Q(ia, ia) += 2.0 * w;
      f.c(ia) += 2.0 * w * e(c);
    }
    if (fb) {
      const int ib = m.index(b) + c;
      f.Q(ib, ib) += 2.0 * w;
      f.c(ib) -= 2.0 * w * e(c);
    }
    if (fa && fb) {
      const int ia = m.index(a) + c;
      const int ib = m.index(b) + c;
      f.Q(ia, ib) -= 2.0 * w;
      f.Q(ib, ia) -= 2.0 * w;
    }
  }
  f.d += w * e.squaredNorm();
}

/// Adds w ||q_col - p||^2.
inline void add_distance(qcqp::Quadratic& f, const WaypointMap& m, double w, int col, const Vec2& p) {
  if (!m.is_free(col)) {
    f.d += w * (m.fixed->col(col) - p).squaredNorm();
    return;
  }
  const int i = m.index(col);
  for (int c = 0; c < 2; ++c) {
    f.Q(i + c, i + c) += 2.0 * w;
    f.c(i + c) -= 2.0 * w * p(c);
  }
  f.d += w * p.squaredNorm();
}

inline qcqp::Quadratic zero_quadratic(int dim) {
  qcqp::Quadratic f;
  f.Q = Eigen::MatrixXd::Zero(dim, dim);
  f.c = Eigen::VectorXd::Zero(dim);
  f.d = 0.0;
  return f;
}

/**
 * Raw energy-causality row for (k, n) in joules: spending through slot n
 * minus the harvest bound, with the offloading energy written through the
 * distance to the user.
 */
inline qcqp::Quadratic energy_row(const Scenario& s, const PlanPart& part, const HarvestBound& hb,
                                  const WaypointMap& m) {
  const int k = hb.k;
  const double lam = s.lambda();
  const double H2 = s.H * s.H;
  qcqp::Quadratic f = zero_quadratic(m.dim());
  for (int i = 0; i <= hb.n; ++i) {
    f.d += compute_energy(s, part.f_user(k, i));
    // lambda * P_k[i] = tx * (H^2 + ||q_i - q_k||^2)
    const double tx = lam * s.Gamma * s.sigma2 * std::expm1(part.l(k, i) / (s.B * lam) * std::log(2.0)) /
                      s.beta0;
    f.d += tx * H2;
    add_distance(f, m, tx + hb.weight(i), i, hb.user);
    f.d -= hb.offset(i);
  }
  return f;
}

inline std::vector<double> harvest_totals(const Scenario& s, const Trajectory& traj) {
  std::vector<double> tot(s.K());
  for (int k = 0; k < s.K(); ++k) tot[k] = harvested_energy_prefix(s, traj, k, s.N);
  return tot;
}

}  // namespace detail

/// Throws unless the trajectory meets the endpoint and speed limits.
inline void check_kinematics(const Scenario& s, const Trajectory& traj, const char* what) {
  if (traj.cols() != s.N + 1) {
    throw Error(ErrorKind::dimension_mismatch, std::string(what) + ": trajectory needs N+1 waypoints");
  }
  const double scale = std::max(1.0, (s.qF - s.q0).norm());
  const double hop = s.V_max * s.slot_duration();
  bool ok = (traj.col(0) - s.q0).norm() <= 1e-9 * scale && (traj.col(s.N) - s.qF).norm() <= 1e-9 * scale;
  for (int n = 0; ok && n < s.N; ++n) ok = (traj.col(n + 1) - traj.col(n)).norm() <= hop * (1.0 + 1e-9);
  if (!ok) throw Error(ErrorKind::infeasible, std::string(what) + " violates C6/C7");
}

/**
 * Builds the convex trajectory subproblem at an expansion trajectory.
 *
 * Energy rows whose left side is a constant (slot 0, whose position is the
 * pinned start) or whose spending is zero are dropped; a constant row that is
 * violated makes the subproblem infeasible. With prices the objective gains
 * weight * sum nu_{k,n} * raw_row_{k,n}.
 */
inline P4 assemble_p4(const Scenario& s, const PlanPart& part, const Trajectory& expansion,
                      const P4Prices* prices = nullptr) {
  check_kinematics(s, expansion, "expansion point");
  const int K = s.K();
  const int N = s.N;
  if (part.l.rows() != K || part.l.cols() != N || part.f_user.rows() != K || part.f_user.cols() != N) {
    throw Error(ErrorKind::dimension_mismatch, "assemble_p4: plan part does not match the scenario");
  }
  if (prices && (prices->nu.rows() != K || prices->nu.cols() != N)) {
    throw Error(ErrorKind::dimension_mismatch, "assemble_p4: price matrix must be K x N");
  }

  detail::WaypointMap m{N, &expansion};
  P4 out;
  qcqp::QcqpProblem& p = out.problem;
  p.dim = m.dim();
  p.objective = detail::zero_quadratic(p.dim);
  const double dt = s.slot_duration();
  const double w_prop = s.kappa() / (dt * dt);
  for (int n = 0; n < N; ++n) detail::add_segment(p.objective, m, w_prop, n, n + 1);

  const double hop2 = std::pow(s.V_max * dt, 2);
  for (int n = 0; n < N; ++n) {
    qcqp::Quadratic row = detail::zero_quadratic(p.dim);
    detail::add_segment(row, m, 1.0 / hop2, n, n + 1);
    row.d -= 1.0;
    if (!m.is_free(n) && !m.is_free(n + 1)) {
      if (row.d > 0.0) throw Error(ErrorKind::infeasible, "speed limit violated between fixed waypoints");
      continue;
    }
    p.ineq.push_back(std::move(row));
    out.rows.push_back({P4Row::Kind::speed, -1, n, hop2});
  }

  const std::vector<double> harvest = detail::harvest_totals(s, expansion);
  for (int k = 0; k < K; ++k) {
    bool spending = false;
    for (int n = 0; n < N; ++n) {
      spending = spending || part.f_user(k, n) > 0.0 || part.l(k, n) > 0.0;
      const HarvestBound hb = sca_lower_bound(s, expansion, k, n);
      const double price = prices ? prices->weight * prices->nu(k, n) : 0.0;
      if (!spending && price == 0.0) continue;
      qcqp::Quadratic raw = detail::energy_row(s, part, hb, m);
      if (price > 0.0) {
        p.objective.Q += price * raw.Q;
        p.objective.c += price * raw.c;
        p.objective.d += price * raw.d;
      }
      if (!spending) continue;
      if (n == 0) {
        if (raw.d > 1e-12 * std::max(harvest[k], 1e-300)) {
          throw Error(ErrorKind::infeasible, "energy causality fails in the first slot for user " +
                                                 std::to_string(k + 1));
        }
        continue;
      }
      const double scale = std::max(harvest[k], 1e-300);
      raw.Q /= scale;
      raw.c /= scale;
      raw.d /= scale;
      p.ineq.push_back(std::move(raw));
      out.rows.push_back({P4Row::Kind::energy, k, n, scale});
    }
  }
  p.A.resize(0, p.dim);
  p.b.resize(0);
  return out;
}

/// Free-waypoint vector of a trajectory, and the inverse.
inline Eigen::VectorXd free_waypoints(const Trajectory& traj) {
  const int N = static_cast<int>(traj.cols()) - 1;
  Eigen::VectorXd x(2 * (N - 1));
  for (int c = 1; c <= N - 1; ++c) x.segment<2>(2 * (c - 1)) = traj.col(c);
  return x;
}

inline Trajectory with_free_waypoints(const Scenario& s, const Eigen::VectorXd& x) {
  Trajectory traj(2, s.N + 1);
  traj.col(0) = s.q0;
  traj.col(s.N) = s.qF;
  for (int c = 1; c <= s.N - 1; ++c) traj.col(c) = x.segment<2>(2 * (c - 1));
  return traj;
}

/// True propulsion energy of a trajectory (joules).
inline double propulsion_total(const Scenario& s, const Trajectory& traj) {
  double e = 0.0;
  for (int n = 0; n < s.N; ++n) e += propulsion_energy(s, traj.col(n), traj.col(n + 1));
  return e;
}

/**
 * Objective the SCA iterations descend on: propulsion plus the priced
 * energy-causality rows evaluated with the true harvest.
 */
inline double sca_objective(const Scenario& s, const PlanPart& part, const Trajectory& traj,
                            const P4Prices* prices) {
  double f = propulsion_total(s, traj);
  if (!prices) return f;
  const double lam = s.lambda();
  for (int k = 0; k < s.K(); ++k) {
    double spent = 0.0;
    double harvested = 0.0;
    for (int n = 0; n < s.N; ++n) {
      const double gain = channel_gain(s, traj.col(n), k);
      spent += compute_energy(s, part.f_user(k, n)) + lam * offload_tx_power(s, gain, part.l(k, n));
      harvested += slot_harvest(s, traj.col(n), k);
      f += prices->weight * prices->nu(k, n) * (spent - harvested);
    }
  }
  return f;
}

struct ScaTraceRow {
  int iteration = 0;
  double objective = 0.0;     ///< joules
  double displacement = 0.0;  ///< sum of waypoint moves (meters)
};

struct ScaState {
  Trajectory expansion_traj;
  int iter = 0;
  std::vector<double> objective_history;  ///< joules, starting at the initial trajectory
  std::vector<Trajectory> iterates;       ///< every accepted trajectory, initial one first
  std::vector<ScaTraceRow> trace;
  bool converged = false;
  std::string stop_reason;
};

struct ScaOptions {
  double xi = 1e-4;
  int max_iter = 100;
  double qcqp_tol = 1e-8;
  const P4Prices* prices = nullptr;
};

struct ScaResult {
  Trajectory traj;
  ScaState state;
};

/**
 * Sequential convex approximation for the trajectory with the offloading
 * plan fixed. Each step re-expands the harvest bound at the current
 * trajectory and solves the resulting subproblem; a step that would raise the
 * objective is rejected and the loop stops at the incumbent.
 *
 * @throws Error(infeasible) when a subproblem has no feasible point
 * @throws Error(iteration_limit) when the displacement test never passes
 */
inline ScaResult solve_p3(const Scenario& s, const PlanPart& part, const Trajectory& init,
                          const ScaOptions& opt = {}) {
  check_kinematics(s, init, "initial trajectory");
  ScaResult res;
  ScaState& st = res.state;
  Trajectory cur = init;
  cur.col(0) = s.q0;
  cur.col(s.N) = s.qF;
  double f_cur = sca_objective(s, part, cur, opt.prices);
  st.objective_history.push_back(f_cur);
  st.iterates.push_back(cur);
  st.trace.push_back({0, f_cur, 0.0});

  if (s.N < 2) {
    st.converged = true;
    st.stop_reason = "no free waypoints";
    res.traj = cur;
    st.expansion_traj = cur;
    return res;
  }

  for (int j = 1; j <= opt.max_iter; ++j) {
    st.iter = j;
    st.expansion_traj = cur;
    const P4 sub = assemble_p4(s, part, cur, opt.prices);
    const Eigen::VectorXd start = free_waypoints(cur);
    qcqp::SolveOptions qo;
    qo.tol = opt.qcqp_tol;
    qo.start = &start;
    const qcqp::QcqpSolution q = qcqp::solve(sub.problem, qo);

    if (q.status == qcqp::QcqpStatus::infeasible) {
      if (q.phase1_margin >= -1e-9) {
        // The expansion point sits on the boundary with no interior to move into.
        st.converged = true;
        st.stop_reason = "no strictly feasible move";
        break;
      }
      throw Error(ErrorKind::infeasible, "trajectory subproblem infeasible (margin " +
                                             std::to_string(q.phase1_margin) + ")");
    }

    const Trajectory next = with_free_waypoints(s, q.x);
    const double f_next = sca_objective(s, part, next, opt.prices);
    double move = 0.0;
    for (int n = 1; n < s.N; ++n) move += (next.col(n) - cur.col(n)).norm();

    if (!(f_next <= f_cur + 1e-12 * std::max(1.0, std::abs(f_cur)))) {
      st.converged = true;
      st.stop_reason = "step would increase the objective";
      break;
    }
    cur = next;
    f_cur = f_next;
    st.objective_history.push_back(f_cur);
    st.iterates.push_back(cur);
    st.trace.push_back({j, f_cur, move});
    if (move <= opt.xi) {
      st.converged = true;
      st.stop_reason = "displacement below tolerance";
      break;
    }
  }
  res.traj = cur;
  st.expansion_traj = cur;
  if (!st.converged) throw Error(ErrorKind::iteration_limit, "SCA iteration limit");
  return res;
}

}  // namespace uavmec
