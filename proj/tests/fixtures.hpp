#pragma once

#include <cmath>
#include <random>

#include "uavmec/model.hpp"
#include "uavmec/scenario.hpp"

namespace testing_fixtures {

using namespace uavmec;

/// Small two-user mission that solves in well under a second.
inline Scenario reference_two_user() {
  Scenario s;
  s.user_pos = {Vec2(0, 0), Vec2(10, 10)};
  s.R = {2e6, 3e6};
  s.N = 6;
  s.P_u = 1e5;
  return s;
}

/// Random plan with sane magnitudes on a random admissible trajectory.
inline Plan random_plan(const Scenario& s, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> U(0, 1);
  Plan p;
  p.traj.resize(2, s.N + 1);
  for (int n = 0; n <= s.N; ++n) {
    const double a = static_cast<double>(n) / s.N;
    p.traj.col(n) = s.q0 + a * (s.qF - s.q0) + Vec2(0, 3 * std::sin(M_PI * a) * U(rng));
  }
  p.l = Eigen::MatrixXd::Zero(s.K(), s.N);
  p.f_user = Eigen::MatrixXd::Zero(s.K(), s.N);
  p.f_uav = Eigen::VectorXd::Zero(s.N);
  for (int k = 0; k < s.K(); ++k) {
    for (int n = 0; n < s.N; ++n) {
      p.f_user(k, n) = 1e9 * U(rng);
      if (n < s.N - 1) p.l(k, n) = 2e5 * U(rng);
    }
  }
  for (int n = 1; n < s.N; ++n) p.f_uav(n) = 3e9 * U(rng);
  return p;
}

/// Objective evaluated directly from the scalar definitions.
inline double objective_by_hand(const Scenario& s, const Plan& p) {
  const double dt = s.T / s.N;
  const double kappa = 0.5 * s.W_mass * dt;
  double e = s.T * s.P_u;
  for (int n = 0; n < s.N; ++n) {
    const double dx = p.traj(0, n + 1) - p.traj(0, n);
    const double dy = p.traj(1, n + 1) - p.traj(1, n);
    e += kappa * (dx * dx + dy * dy) / (dt * dt);
    if (n > 0) e += s.gamma_c * dt * std::pow(p.f_uav(n), 3);
  }
  return e;
}

/// Spent minus harvested energy of user k over slots 0..n (positive: violated).
inline double prefix_gap(const Scenario& s, const Plan& p, int k, int n) {
  const double lam = s.T / (s.N * s.K());
  double gap = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double dx = p.traj(0, i) - s.user_pos[k].x();
    const double dy = p.traj(1, i) - s.user_pos[k].y();
    const double h = s.beta0 / (s.H * s.H + dx * dx + dy * dy);
    gap += s.gamma_c * (s.T / s.N) * std::pow(p.f_user(k, i), 3);
    gap += lam * s.Gamma * s.sigma2 * (std::pow(2.0, p.l(k, i) / (s.B * lam)) - 1.0) / h;
    gap -= (s.T / s.N) * s.eta * h * s.P_u;
  }
  return gap;
}

}  // namespace testing_fixtures
