#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "uavmec/model.hpp"
#include "uavmec/planner.hpp"

using namespace uavmec;

namespace {

Scenario one_user() {
  Scenario s;
  s.user_pos = {Vec2(3, 4)};
  s.R = {1e5};
  return s;
}

}  // namespace

TEST(ChannelGain, OverheadUser) {
  const Scenario s = one_user();
  EXPECT_NEAR(channel_gain(s, s.user_pos[0], 0), 1e-7, 1e-20);
}

TEST(ChannelGain, CornerUser) {
  Scenario s = table2_scenario();
  // (10, 10) seen from the origin: 10 sqrt(2) m horizontal offset.
  EXPECT_NEAR(channel_gain(s, Vec2(0, 0), 2), 1e-5 / 300.0, 1e-18);
}

TEST(ChannelGain, DecreasesWithDistance) {
  const Scenario s = one_user();
  const Vec2 q = s.user_pos[0];
  EXPECT_GT(channel_gain(s, q, 0), channel_gain(s, q + Vec2(10, 0), 0));
  EXPECT_GT(channel_gain(s, q + Vec2(1, 0), 0), channel_gain(s, q + Vec2(1.5, 0), 0));
}

TEST(ChannelGain, RotationInvariant) {
  const Scenario s = one_user();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-20, 20), A(0, 2 * M_PI);
  for (int i = 0; i < 200; ++i) {
    const Vec2 off(U(rng), U(rng));
    const double a = A(rng);
    const Vec2 rot(std::cos(a) * off.x() - std::sin(a) * off.y(), std::sin(a) * off.x() + std::cos(a) * off.y());
    const double g1 = channel_gain(s, s.user_pos[0] + off, 0);
    const double g2 = channel_gain(s, s.user_pos[0] + rot, 0);
    EXPECT_NEAR(g1, g2, 1e-12 * g1);
  }
}

TEST(ChannelGain, RejectsBadUser) {
  const Scenario s = one_user();
  EXPECT_THROW(channel_gain(s, Vec2::Zero(), 1), Error);
}

TEST(Harvest, ZeroPower) {
  Scenario s = table2_scenario();
  s.P_u = 0.0;
  const Trajectory t = straight_line(s);
  for (int n = 1; n <= s.N; ++n) EXPECT_EQ(harvested_energy_prefix(s, t, 0, n), 0.0);
}

TEST(Harvest, HoveringOverUser) {
  Scenario s = table2_scenario();
  s.P_u = 10.0;
  Trajectory t = Trajectory::Zero(2, s.N + 1);  // user 1 sits at the origin
  EXPECT_NEAR(harvested_energy_prefix(s, t, 0, 1), 3.2e-8, 1e-20);
}

TEST(Harvest, PrefixIdentityAndMonotone) {
  Scenario s = table2_scenario();
  const Trajectory t = semi_circle(s);
  for (int k = 0; k < s.K(); ++k) {
    double prev = 0.0;
    for (int n = 1; n <= s.N; ++n) {
      const double cur = harvested_energy_prefix(s, t, k, n);
      EXPECT_GE(cur, prev);
      EXPECT_NEAR(cur - prev, slot_harvest(s, t.col(n - 1), k), 1e-12 * cur);
      prev = cur;
    }
  }
  EXPECT_THROW(harvested_energy_prefix(s, t, 0, 0), Error);
  EXPECT_THROW(harvested_energy_prefix(s, t, 0, s.N + 1), Error);
}

TEST(OffloadPower, Examples) {
  const Scenario s = table2_scenario();
  const double bl = s.B * s.lambda();
  EXPECT_EQ(offload_tx_power(s, 1e-7, 0.0), 0.0);
  EXPECT_NEAR(offload_tx_power(s, 1e-7, bl), 0.01, 1e-15);
  EXPECT_NEAR(offload_tx_power(s, 1e-7, 2 * bl), 0.03, 1e-15);
}

TEST(OffloadPower, ConvexAndIncreasing) {
  const Scenario s = table2_scenario();
  const double bl = s.B * s.lambda();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(0, 10 * bl), W(0, 1);
  for (int i = 0; i < 500; ++i) {
    const double l1 = U(rng), l2 = U(rng), t = W(rng);
    const double lhs = offload_tx_power(s, 1e-7, t * l1 + (1 - t) * l2);
    const double rhs = t * offload_tx_power(s, 1e-7, l1) + (1 - t) * offload_tx_power(s, 1e-7, l2);
    EXPECT_LE(lhs, rhs + 1e-12 * rhs);
    if (l1 < l2) EXPECT_LT(offload_tx_power(s, 1e-7, l1), offload_tx_power(s, 1e-7, l2));
  }
}

TEST(OffloadPower, ExponentCap) {
  const Scenario s = table2_scenario();
  const double bl = s.B * s.lambda();
  EXPECT_NO_THROW(offload_tx_power(s, 1e-7, 64 * bl));
  try {
    offload_tx_power(s, 1e-7, 65 * bl);
    FAIL() << "expected an out-of-range error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::out_of_range);
    EXPECT_STREQ(e.what(), "offload load out of numeric range");
  }
}

TEST(ComputeEnergy, Examples) {
  const Scenario s = table2_scenario();
  EXPECT_EQ(compute_energy(s, 0.0), 0.0);
  EXPECT_NEAR(compute_energy(s, 1e9), 4e-3, 1e-15);
  EXPECT_NEAR(compute_energy(s, 2.4e9), 8 * compute_energy(s, 1.2e9), 1e-15);
}

TEST(Propulsion, StraightLineTable2) {
  const Scenario s = table2_scenario();
  const Trajectory t = straight_line(s);
  EXPECT_EQ(propulsion_energy(s, Vec2(1, 2), Vec2(1, 2)), 0.0);
  EXPECT_NEAR(propulsion_energy(s, t.col(0), t.col(1)), 4.825, 1e-12);
  double total = 0.0;
  for (int n = 0; n < s.N; ++n) total += propulsion_energy(s, t.col(n), t.col(n + 1));
  EXPECT_NEAR(total, 241.25, 1e-9);
}

TEST(Ledger, HoverOnlyTransmitterEnergy) {
  Scenario s = table2_scenario();
  s.qF = s.q0;
  const Plan p = empty_plan(s, straight_line(s));
  const EnergyLedger e = evaluate_ledger(s, p);
  EXPECT_DOUBLE_EQ(e.uav_total, s.T * s.P_u);
}

TEST(Ledger, StraightLineNoCompute) {
  const Scenario s = table2_scenario();
  const EnergyLedger e = evaluate_ledger(s, empty_plan(s, straight_line(s)));
  EXPECT_NEAR(e.uav_total - 2 * s.P_u, 241.25, 1e-6);
}

TEST(Ledger, MatchesIndependentEvaluation) {
  const Scenario s = table2_scenario();
  const Plan p = testing_fixtures::random_plan(s, 3);
  const EnergyLedger e = evaluate_ledger(s, p);
  EXPECT_NEAR(e.uav_total, testing_fixtures::objective_by_hand(s, p), 1e-9 * e.uav_total);
  double parts = e.propulsion.sum() + s.T * s.P_u + e.uav_compute.sum();
  EXPECT_DOUBLE_EQ(e.uav_total, parts);
  EXPECT_GE(e.harvested.minCoeff(), 0.0);
  EXPECT_GE(e.local.minCoeff(), 0.0);
  EXPECT_GE(e.tx.minCoeff(), 0.0);
  EXPECT_GE(e.uav_compute.minCoeff(), 0.0);
  EXPECT_GE(e.propulsion.minCoeff(), 0.0);
}

TEST(Ledger, PermutedUsers) {
  const Scenario s = table2_scenario();
  const Plan p = testing_fixtures::random_plan(s, 5);
  Scenario sp = s;
  Plan pp = p;
  const int perm[] = {2, 0, 3, 1};
  for (int k = 0; k < s.K(); ++k) {
    sp.user_pos[k] = s.user_pos[perm[k]];
    sp.R[k] = s.R[perm[k]];
    pp.l.row(k) = p.l.row(perm[k]);
    pp.f_user.row(k) = p.f_user.row(perm[k]);
  }
  EXPECT_DOUBLE_EQ(evaluate_ledger(s, p).uav_total, evaluate_ledger(sp, pp).uav_total);
}

TEST(Constraints, ZeroPlanMissesDemand) {
  const Scenario s = table2_scenario();
  const ConstraintReport r = check_constraints(s, empty_plan(s, straight_line(s)), 1e-6);
  for (int k = 0; k < s.K(); ++k) EXPECT_DOUBLE_EQ(r.c1_per_user(k), -s.R[k]);
  EXPECT_DOUBLE_EQ(r.c1.raw, 6e6);
  EXPECT_FALSE(r.feasible());
}

TEST(Constraints, DisplacedStart) {
  const Scenario s = table2_scenario();
  Plan p = empty_plan(s, straight_line(s));
  p.traj.col(0) = s.q0 + Vec2(0.03, 0.04);
  const ConstraintReport r = check_constraints(s, p, 1e-6);
  EXPECT_NEAR(r.c7.raw, 0.05, 1e-15);
}

TEST(Constraints, SpeedAndSignChecks) {
  const Scenario s = table2_scenario();
  Plan p = empty_plan(s, straight_line(s));
  p.traj.col(10) += Vec2(0, 1.0);
  p.l(1, 3) = -5.0;
  p.f_uav(0) = 1e6;
  p.l(2, s.N - 1) = 7.0;
  const ConstraintReport r = check_constraints(s, p, 1e-6);
  EXPECT_GT(r.c6.raw, 0.0);
  EXPECT_DOUBLE_EQ(r.c8.raw, 5.0);
  EXPECT_GE(r.c5.raw, 7.0);
}

TEST(Constraints, DimensionMismatch) {
  const Scenario s = table2_scenario();
  Plan p = empty_plan(s, straight_line(s));
  p.l.resize(2, 3);
  EXPECT_THROW(check_constraints(s, p, 1e-6), Error);
  EXPECT_THROW(evaluate_ledger(s, p), Error);
}

TEST(Constraints, EnergyPrefixMonotone) {
  // Lowering spending in earlier slots never breaks a satisfied prefix.
  Scenario s = testing_fixtures::reference_two_user();
  const Trajectory t = straight_line(s);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(0, 1);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Plan p = empty_plan(s, t);
    for (int k = 0; k < s.K(); ++k) {
      for (int n = 0; n < s.N; ++n) {
        p.f_user(k, n) = 5e8 * U(rng);
        if (n < s.N - 1) p.l(k, n) = 3e5 * U(rng);
      }
    }
    for (int k = 0; k < s.K(); ++k) {
      for (int n = 0; n < s.N; ++n) {
        if (testing_fixtures::prefix_gap(s, p, k, n) > 0.0) continue;
        Plan q = p;
        const int i = static_cast<int>(U(rng) * (n + 1)) % (n + 1);
        q.f_user(k, i) *= U(rng);
        q.l(k, i) *= U(rng);
        EXPECT_LE(testing_fixtures::prefix_gap(s, q, k, n), 0.0);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(Scenario, Validation) {
  Scenario s = table2_scenario();
  EXPECT_NO_THROW(validate(s));
  EXPECT_DOUBLE_EQ(s.lambda(), 0.01);
  EXPECT_NEAR(s.kappa(), 0.193, 1e-15);
  s.V_max = 4.0;
  EXPECT_THROW(validate(s), Error);
  s = table2_scenario();
  s.R.pop_back();
  EXPECT_THROW(validate(s), Error);
  s = table2_scenario();
  s.eta = 1.5;
  EXPECT_THROW(validate(s), Error);
}
