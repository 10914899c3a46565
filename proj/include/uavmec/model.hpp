#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "uavmec/core.hpp"
#include "uavmec/scenario.hpp"

namespace uavmec {

/// Largest admissible spectral efficiency l / (B lambda) before the
/// offloading power is reported as out of numeric range.
inline constexpr double kMaxOffloadExponent = 64.0;

/**
 * One candidate joint plan: trajectory, per-slot offloaded bits, user CPU
 * frequencies and UAV CPU frequencies. Matrices are K x N, indexed (k, n)
 * with 0-based slot n.
 */
struct Plan {
  Trajectory traj;          ///< 2 x (N+1)
  Eigen::MatrixXd l;        ///< offloaded bits
  Eigen::MatrixXd f_user;   ///< user CPU frequency (cycles/s)
  Eigen::VectorXd f_uav;    ///< UAV CPU frequency (cycles/s)
};

/// Per-slot, per-party energy accounting (joules).
struct EnergyLedger {
  Eigen::MatrixXd harvested;    ///< K x N per-slot harvested energy
  Eigen::MatrixXd local;        ///< K x N local computing energy
  Eigen::MatrixXd tx;           ///< K x N offloading energy lambda P_k[n]
  Eigen::VectorXd uav_compute;  ///< N
  Eigen::VectorXd propulsion;   ///< N
  double uav_total = 0.0;       ///< propulsion + T P_u + UAV computing
};

/// Channel power gain beta0 / (H^2 + ||q_u - q_k||^2) for 0-based user k.
inline double channel_gain(const Scenario& s, const Vec2& q_u, int k) {
  if (k < 0 || k >= s.K()) {
    throw Error(ErrorKind::out_of_range, "channel_gain: user index out of range");
  }
  return s.beta0 / (s.H * s.H + (q_u - s.user_pos[k]).squaredNorm());
}

/// Energy harvested by user k during one slot spent at q_u.
inline double slot_harvest(const Scenario& s, const Vec2& q_u, int k) {
  return s.slot_duration() * s.eta * channel_gain(s, q_u, k) * s.P_u;
}

/// Energy harvested by user k over the first `slots` slots (1 <= slots <= N).
inline double harvested_energy_prefix(const Scenario& s, const Trajectory& traj, int k,
                                      int slots) {
  if (slots < 1 || slots > s.N || slots > traj.cols()) {
    throw Error(ErrorKind::out_of_range, "harvested_energy_prefix: slot count out of range");
  }
  double sum = 0.0;
  for (int i = 0; i < slots; ++i) sum += slot_harvest(s, traj.col(i), k);
  return sum;
}

/// Transmit power needed to offload `bits` within one sub-slot of length lambda.
inline double offload_tx_power(const Scenario& s, double gain, double bits) {
  if (!(gain > 0.0)) throw Error(ErrorKind::invalid_argument, "offload_tx_power: gain must be positive");
  if (bits < 0.0) throw Error(ErrorKind::invalid_argument, "offload_tx_power: negative bit count");
  const double exponent = bits / (s.B * s.lambda());
  if (exponent > kMaxOffloadExponent) {
    throw Error(ErrorKind::out_of_range, "offload load out of numeric range");
  }
  return s.Gamma * s.sigma2 * std::expm1(exponent * std::log(2.0)) / gain;
}

/// CPU energy for one slot at frequency f: gamma_c K lambda f^3.
inline double compute_energy(const Scenario& s, double f) {
  return s.gamma_c * s.slot_duration() * f * f * f;
}

/// Propulsion energy kappa ||q_b - q_a||^2 / (K lambda)^2 for one slot.
inline double propulsion_energy(const Scenario& s, const Vec2& q_a, const Vec2& q_b) {
  const double dt = s.slot_duration();
  return s.kappa() * (q_b - q_a).squaredNorm() / (dt * dt);
}

namespace detail {

inline void check_plan_shape(const Scenario& s, const Plan& p) {
  const int K = s.K();
  const int N = s.N;
  if (p.traj.cols() != N + 1 || p.l.rows() != K || p.l.cols() != N || p.f_user.rows() != K ||
      p.f_user.cols() != N || p.f_uav.size() != N) {
    throw Error(ErrorKind::dimension_mismatch,
                "plan dimensions do not match the scenario (K=" + std::to_string(K) +
                    ", N=" + std::to_string(N) + ")");
  }
}

}  // namespace detail

/// Evaluates every energy term of a plan.
inline EnergyLedger evaluate_ledger(const Scenario& s, const Plan& p) {
  detail::check_plan_shape(s, p);
  const int K = s.K();
  const int N = s.N;
  const double lam = s.lambda();

  EnergyLedger e;
  e.harvested.resize(K, N);
  e.local.resize(K, N);
  e.tx.resize(K, N);
  e.uav_compute.resize(N);
  e.propulsion.resize(N);
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      const double gain = channel_gain(s, p.traj.col(n), k);
      e.harvested(k, n) = slot_harvest(s, p.traj.col(n), k);
      e.local(k, n) = compute_energy(s, p.f_user(k, n));
      e.tx(k, n) = lam * offload_tx_power(s, gain, std::max(0.0, p.l(k, n)));
    }
    // The UAV does not compute in the first slot.
    e.uav_compute(n) = n == 0 ? 0.0 : compute_energy(s, p.f_uav(n));
    e.propulsion(n) = propulsion_energy(s, p.traj.col(n), p.traj.col(n + 1));
  }
  e.uav_total = e.propulsion.sum() + s.T * s.P_u + e.uav_compute.sum();
  return e;
}

/// Worst violation of one constraint family, raw (SI units) and scaled.
struct Violation {
  double raw = 0.0;
  double scaled = 0.0;

  void update(double raw_value, double scale) {
    if (raw_value > raw) raw = raw_value;
    const double v = raw_value / scale;
    if (v > scaled) scaled = v;
  }
};

/**
 * Constraint audit of a plan. Equality residuals are measured relative to the
 * demand, energy causality relative to each user's total harvest, speed relative
 * to V_max K lambda and endpoints relative to max(1 m, ||q_F - q_0||).
 */
struct ConstraintReport {
  Violation c1, c2, c3, c4, c5, c6, c7, c8;
  Eigen::VectorXd c1_per_user;  ///< signed residual (bits) per user
  double tol = 0.0;

  double worst() const {
    return std::max({c1.scaled, c2.scaled, c3.scaled, c4.scaled, c5.scaled, c6.scaled,
                     c7.scaled, c8.scaled});
  }
  bool feasible() const { return worst() <= tol; }
};

inline ConstraintReport check_constraints(const Scenario& s, const Plan& p, double tol) {
  detail::check_plan_shape(s, p);
  const int K = s.K();
  const int N = s.N;
  const double lam = s.lambda();
  const double dt = s.slot_duration();

  ConstraintReport r;
  r.tol = tol;
  r.c1_per_user.resize(K);

  const double demand_scale = std::max(1.0, s.total_demand());
  const double freq_scale = std::max(1.0, s.total_demand() * s.M / s.T);

  for (int k = 0; k < K; ++k) {
    const double user_scale = std::max(1.0, s.R[k]);
    double bits = 0.0;
    for (int n = 0; n < N; ++n) bits += dt * p.f_user(k, n) / s.M;
    for (int n = 0; n < N - 1; ++n) bits += p.l(k, n);
    r.c1_per_user(k) = bits - s.R[k];
    r.c1.update(std::abs(bits - s.R[k]), user_scale);

    const double harvest_total = harvested_energy_prefix(s, p.traj, k, N);
    double spent = 0.0;
    double harvested = 0.0;
    for (int n = 0; n < N; ++n) {
      const double gain = channel_gain(s, p.traj.col(n), k);
      spent += compute_energy(s, std::max(0.0, p.f_user(k, n)));
      spent += lam * offload_tx_power(s, gain, std::max(0.0, p.l(k, n)));
      harvested += slot_harvest(s, p.traj.col(n), k);
      r.c2.update(std::max(0.0, spent - harvested), harvest_total);
    }

    r.c5.update(std::abs(p.l(k, N - 1)), user_scale);
    for (int n = 0; n < N; ++n) {
      r.c8.update(std::max(0.0, -p.l(k, n)), user_scale);
      r.c8.update(std::max(0.0, -p.f_user(k, n)), freq_scale);
    }
  }

  // Causality at the UAV: bits computed up to slot n never exceed bits received
  // before slot n (1-based n = 2..N-1), and everything is computed by slot N.
  double computed = 0.0;
  double offloaded_before = 0.0;
  for (int n = 1; n < N; ++n) {
    computed += p.f_uav(n) * dt / s.M;
    offloaded_before += p.l.col(n - 1).sum();
    if (n < N - 1) r.c3.update(std::max(0.0, computed - offloaded_before), demand_scale);
  }
  double offloaded_total = 0.0;
  for (int n = 0; n < N - 1; ++n) offloaded_total += p.l.col(n).sum();
  r.c4.update(std::abs(computed - offloaded_total), demand_scale);

  r.c5.update(std::abs(p.f_uav(0)), freq_scale);
  for (int n = 0; n < N; ++n) r.c8.update(std::max(0.0, -p.f_uav(n)), freq_scale);

  const double hop = s.V_max * dt;
  for (int n = 0; n < N; ++n) {
    r.c6.update(std::max(0.0, (p.traj.col(n + 1) - p.traj.col(n)).norm() - hop), hop);
  }

  const double endpoint_scale = std::max(1.0, (s.qF - s.q0).norm());
  r.c7.update((p.traj.col(0) - s.q0).norm(), endpoint_scale);
  r.c7.update((p.traj.col(N) - s.qF).norm(), endpoint_scale);
  return r;
}

/// Zero plan (no computing, no offloading) on the given trajectory.
inline Plan empty_plan(const Scenario& s, const Trajectory& traj) {
  Plan p;
  p.traj = traj;
  p.l = Eigen::MatrixXd::Zero(s.K(), s.N);
  p.f_user = Eigen::MatrixXd::Zero(s.K(), s.N);
  p.f_uav = Eigen::VectorXd::Zero(s.N);
  return p;
}

}  // namespace uavmec
