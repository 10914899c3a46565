#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "uavmec/offload_solver.hpp"
#include "uavmec/planner.hpp"

using namespace uavmec;
using testing_fixtures::reference_two_user;

namespace {

/// Solved once and shared by the reference-instance tests.
struct Reference {
  Scenario s = reference_two_user();
  Trajectory traj = straight_line(s);
  OffloadSolution sol = solve_p2(s, traj);
  OracleResult oracle = primal_oracle_p2(s, traj);
};

const Reference& reference() {
  static const Reference r;
  return r;
}

std::vector<int> active_users(const OffloadSolution& sol) {
  std::vector<int> u;
  for (std::size_t k = 0; k < sol.slack.size(); ++k) {
    if (!sol.slack[k]) u.push_back(static_cast<int>(k));
  }
  return u;
}

}  // namespace

TEST(RecoverPrimal, FirstSlotUavIdle) {
  const Scenario s = reference_two_user();
  const Trajectory t = straight_line(s);
  DualState d = DualState::zeros(s.K(), s.N);
  d.mu << 1e-9, 3e-9;
  d.nu.setConstant(0.2);
  d.theta << 0.0, 1e-10, 2e-10, 0.0, 1e-10, 9e-10;
  EXPECT_EQ(recover_primal(s, t, d).f_uav(0), 0.0);
  EXPECT_EQ(recover_primal(s, t, DualState::zeros(s.K(), s.N)).f_uav(0), 0.0);
}

TEST(RecoverPrimal, UnitUavFrequency) {
  const Scenario s = reference_two_user();
  const Trajectory t = straight_line(s);
  DualState d = DualState::zeros(s.K(), s.N);
  d.theta(s.N - 1) = 3.0 * s.gamma_c * s.M;
  const PlanPart p = recover_primal(s, t, d);
  EXPECT_EQ(p.f_uav(0), 0.0);
  for (int n = 1; n < s.N; ++n) EXPECT_NEAR(p.f_uav(n), 1.0, 1e-12);
}

TEST(RecoverPrimal, ZeroDualsGiveZeroPlan) {
  const Scenario s = reference_two_user();
  const PlanPart p = recover_primal(s, straight_line(s), DualState::zeros(s.K(), s.N));
  EXPECT_EQ(p.l.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(p.f_user.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(p.f_uav.cwiseAbs().maxCoeff(), 0.0);
}

TEST(RecoverPrimal, OutsideRecoverableRegion) {
  const Scenario s = reference_two_user();
  DualState d = DualState::zeros(s.K(), s.N);
  d.theta(2) = 1e-9;
  d.theta(s.N - 1) = 0.5e-9;
  try {
    recover_primal(s, straight_line(s), d);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "dual iterate outside recoverable region");
  }
}

TEST(RecoverPrimal, OffloadGrowsWithChannel) {
  const Reference& r = reference();
  const Scenario& s = r.s;
  for (int k = 0; k < s.K(); ++k) {
    for (int n = 1; n < s.N - 1; ++n) {
      const Vec2 user = s.user_pos[k];
      Trajectory far = r.traj;
      Trajectory near = r.traj;
      double prev = -1.0;
      for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        near.col(n) = (1.0 - a) * r.traj.col(n) + a * user;
        EXPECT_GE(channel_gain(s, near.col(n), k), channel_gain(s, far.col(n), k));
        const double l = recover_primal(s, near, r.sol.duals).l(k, n);
        EXPECT_GE(l, prev * (1.0 - 1e-12));
        prev = l;
      }
    }
  }
}

TEST(Subgradient, DemandDeficitRaisesMu) {
  const Scenario s = reference_two_user();
  const DualState zero = DualState::zeros(s.K(), s.N);
  const double step = 0.5;
  const DualState next = dual_subgradient_step(s, straight_line(s), zero, step);
  for (int k = 0; k < s.K(); ++k) {
    // Solver units: mu in mJ per Mbit, deficit in Mbit.
    EXPECT_NEAR(next.mu(k) * 1e9, step * s.R[k] * 1e-6, 1e-12);
  }
  EXPECT_EQ(next.nu.maxCoeff(), 0.0);
  EXPECT_EQ(next.theta.maxCoeff(), 0.0);
}

TEST(Subgradient, SlackConstraintsLowerMultipliers) {
  const Scenario s = reference_two_user();
  const Trajectory t = straight_line(s);
  DualState d = DualState::zeros(s.K(), s.N);
  d.nu.setConstant(1e-3);
  const DualState small = dual_subgradient_step(s, t, d, 1e-3);
  EXPECT_TRUE((small.nu.array() < d.nu.array()).all());
  EXPECT_GE(small.nu.minCoeff(), 0.0);
  const DualState big = dual_subgradient_step(s, t, d, 1e6);
  EXPECT_EQ(big.nu.maxCoeff(), 0.0);
  EXPECT_THROW(dual_subgradient_step(s, t, d, 0.0), Error);
}

TEST(Subgradient, ProjectionKeepsRecoverability) {
  const Scenario s = reference_two_user();
  const Trajectory t = straight_line(s);
  DualState d = DualState::zeros(s.K(), s.N);
  d.theta << 0.0, 5e-10, 5e-10, 5e-10, 5e-10, 3e-9;
  d.mu.setConstant(1e-9);
  d.nu.setConstant(0.1);
  for (int i = 1; i <= 200; ++i) {
    d = dual_subgradient_step(s, t, d, 1.0 / std::sqrt(i));
    EXPECT_GE(d.mu.minCoeff(), 0.0);
    EXPECT_GE(d.nu.minCoeff(), 0.0);
    EXPECT_GE(d.theta.minCoeff(), 0.0);
    EXPECT_GE(d.theta(s.N - 1), d.theta.segment(1, s.N - 2).sum() * (1.0 - 1e-12));
  }
}

TEST(Subgradient, DualAscentFromSolverStart) {
  // Plain diminishing steps a/sqrt(t): the dual value never drops and never
  // exceeds the primal optimum.
  const Reference& r = reference();
  const Scenario& s = r.s;
  const p2::Data d = p2::make_data(s, r.traj);
  const FeasibilityProbe pr = probe_feasibility(s, r.traj);
  DualState y = p2::to_si(d, p2::initial_duals(d, p2::all_users(s.K()), pr.max_local_bits * 1e-6));
  double prev = dual_value(s, r.traj, y);
  const double start = prev;
  for (int t = 1; t <= 10000; ++t) {
    y = dual_subgradient_step(s, r.traj, y, 1.0 / std::sqrt(static_cast<double>(t)));
    const double g = dual_value(s, r.traj, y);
    ASSERT_GE(g, prev - 1e-6) << "at iteration " << t;
    ASSERT_LE(g, r.oracle.objective + 1e-6) << "at iteration " << t;
    prev = g;
  }
  EXPECT_GT(prev, start);
}

TEST(SolveP2, ZeroWorkload) {
  Scenario s = reference_two_user();
  s.R = {0.0, 0.0};
  const OffloadSolution sol = solve_p2(s, straight_line(s));
  EXPECT_EQ(sol.objective, 0.0);
  EXPECT_EQ(sol.plan_part.l.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(sol.plan_part.f_user.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(sol.plan_part.f_uav.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SolveP2, NearIsCheaperThanFar) {
  Scenario s;
  s.user_pos = {Vec2(0, 0)};
  s.R = {3e6};
  s.N = 6;
  s.P_u = 1e5;
  s.qF = s.q0;
  const Trajectory near = Trajectory::Zero(2, s.N + 1);
  Trajectory far(2, s.N + 1);
  far.colwise() = Vec2(15, 0);
  const double e_near = solve_p2(s, near).objective;
  const double e_far = solve_p2(s, far).objective;
  EXPECT_GT(e_far, 0.0);
  EXPECT_LE(e_near, e_far);
}

TEST(SolveP2, Infeasible) {
  Scenario s = reference_two_user();
  s.P_u = 1.0;
  try {
    solve_p2(s, straight_line(s));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::infeasible);
    EXPECT_NE(std::string(e.what()).find("infeasible for this trajectory"), std::string::npos);
  }
}

TEST(SolveP2, StructuralInvariants) {
  const Reference& r = reference();
  const PlanPart& p = r.sol.plan_part;
  EXPECT_EQ(p.f_uav(0), 0.0);
  for (int k = 0; k < r.s.K(); ++k) EXPECT_EQ(p.l(k, r.s.N - 1), 0.0);
  for (int n = 2; n < r.s.N; ++n) EXPECT_GE(p.f_uav(n), p.f_uav(n - 1) - 1e-9 * p.f_uav.maxCoeff());
}

TEST(SolveP2, MatchesOracle) {
  const Reference& r = reference();
  EXPECT_NEAR(r.sol.objective, r.oracle.objective, 5e-3 * r.oracle.objective);
  EXPECT_LE(r.sol.objective, r.oracle.objective * (1.0 + 5e-3));
  EXPECT_LE(r.sol.kkt_residuals.max(), 1e-6);
  EXPECT_LE(r.sol.kkt_residuals.complementarity, 1e-6);
  EXPECT_LE(r.oracle.max_residual, 1e-8);
}

TEST(SolveP2, PlanSatisfiesConstraints) {
  const Reference& r = reference();
  const Plan plan = make_plan(r.traj, r.sol.plan_part);
  const ConstraintReport c = check_constraints(r.s, plan, 1e-6);
  EXPECT_TRUE(c.feasible()) << "worst " << c.worst();
}

TEST(SolveP2, WeakDualityAlongTrace) {
  const Reference& r = reference();
  ASSERT_FALSE(r.sol.trace.empty());
  for (const TraceRow& row : r.sol.trace) EXPECT_LE(row.dual_value, r.oracle.objective + 1e-6);
}

TEST(SolveP2, FiniteDifferenceStationarity) {
  const Reference& r = reference();
  const p2::Data d = p2::make_data(r.s, r.traj);
  const std::vector<int> users = active_users(r.sol);
  ASSERT_FALSE(users.empty());
  const p2::Duals y = p2::to_scaled(d, r.sol.duals);
  const p2::Primal base = p2::recover(d, y, users);

  auto L = [&](p2::Primal p) {
    for (int k = 0; k < d.K; ++k) {
      for (int n = 0; n < d.N; ++n) p.pow2(k, n) = std::exp2(d.rho * p.xl(k, n));
    }
    return p2::lagrangian(d, p, y, users);
  };
  const double h = 1e-6;
  auto check = [&](double x, double derivative_plus, double derivative_minus) {
    if (x > h) {
      EXPECT_LE(std::abs(0.5 * (derivative_plus + derivative_minus)), 1e-5);
    } else {
      EXPECT_GE(derivative_plus, -1e-5);
    }
  };
  for (int k : users) {
    for (int n = 0; n < d.N; ++n) {
      p2::Primal up = base, dn = base;
      up.xf(k, n) += h;
      dn.xf(k, n) -= h;
      check(base.xf(k, n), (L(up) - L(base)) / h, (L(base) - L(dn)) / h);
      if (n == d.N - 1) continue;
      up = base;
      dn = base;
      up.xl(k, n) += h;
      dn.xl(k, n) -= h;
      check(base.xl(k, n), (L(up) - L(base)) / h, (L(base) - L(dn)) / h);
    }
  }
  for (int n = 1; n < d.N; ++n) {
    p2::Primal up = base, dn = base;
    up.xu(n) += h;
    dn.xu(n) -= h;
    check(base.xu(n), (L(up) - L(base)) / h, (L(base) - L(dn)) / h);
  }
}

TEST(PrimalOracle, ZeroWorkload) {
  Scenario s = reference_two_user();
  s.R = {0.0, 0.0};
  const OracleResult o = primal_oracle_p2(s, straight_line(s));
  EXPECT_EQ(o.objective, 0.0);
  EXPECT_EQ(o.plan_part.f_uav.cwiseAbs().maxCoeff(), 0.0);
}

TEST(PrimalOracle, DeterministicAndDescending) {
  const Reference& r = reference();
  const OracleResult again = primal_oracle_p2(r.s, r.traj);
  EXPECT_NEAR(again.objective, r.oracle.objective, 1e-9);
  ASSERT_GE(r.oracle.history.size(), 2u);
  for (std::size_t i = 1; i < r.oracle.history.size(); ++i) {
    EXPECT_LE(r.oracle.history[i], r.oracle.history[i - 1] + 1e-9);
  }
}

TEST(PrimalOracle, Infeasible) {
  Scenario s = reference_two_user();
  s.P_u = 1.0;
  EXPECT_THROW(primal_oracle_p2(s, straight_line(s)), Error);
}

TEST(FeasibilityProbe, SlackUsersOnTable2) {
  const Scenario s = table2_scenario();
  const FeasibilityProbe pr = probe_feasibility(s, straight_line(s));
  EXPECT_TRUE(pr.feasible);
  for (int k = 0; k < s.K(); ++k) {
    EXPECT_GE(pr.max_bits(k), s.R[k]);
    EXPECT_GE(pr.max_bits(k), pr.max_local_bits(k) * (1.0 - 1e-12));
    EXPECT_EQ(static_cast<bool>(pr.slack[k]), pr.max_local_bits(k) >= s.R[k]);
  }
}
