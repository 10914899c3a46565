#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "uavmec/core.hpp"

namespace uavmec {

/**
 * Physical and system description of one UAV-powered edge-computing mission.
 *
 * All quantities are SI: meters, seconds, watts, hertz, bits, joules. The
 * mission of duration T is split into N slots; each slot is further split into
 * K TDMA offloading sub-slots of duration lambda = T / (N K).
 */
struct Scenario {
  std::vector<Vec2> user_pos;  ///< ground user positions q_k
  std::vector<double> R;       ///< computation demand per user (bits)

  double H = 10.0;        ///< UAV altitude
  double T = 2.0;         ///< mission duration
  int N = 50;             ///< slot count
  double P_u = 1e7;       ///< UAV transmit power
  double eta = 0.8;       ///< energy conversion efficiency
  double B = 4e7;         ///< bandwidth
  double sigma2 = 1e-9;   ///< receiver noise power
  double Gamma = 1.0;     ///< capacity gap
  double beta0 = 1e-5;    ///< channel gain at 1 m (linear)
  double M = 1e3;         ///< CPU cycles per bit
  double gamma_c = 1e-28; ///< effective switched capacitance
  double W_mass = 9.65;   ///< UAV mass (kg)
  double V_max = 10.0;    ///< maximum flying speed
  Vec2 q0 = Vec2::Zero(); ///< initial horizontal position
  Vec2 qF = Vec2(10.0, 0.0);
  double xi = 1e-4;   ///< trajectory (inner) tolerance
  double xi1 = 1e-4;  ///< energy (outer) tolerance

  int K() const { return static_cast<int>(user_pos.size()); }

  /// TDMA sub-slot duration lambda = T / (N K).
  double lambda() const { return T / (static_cast<double>(N) * K()); }

  /// Full slot duration T / N (= K lambda).
  double slot_duration() const { return T / N; }

  /// Propulsion coefficient kappa = 0.5 W T / N.
  double kappa() const { return 0.5 * W_mass * T / N; }

  double total_demand() const {
    double sum = 0.0;
    for (double r : R) sum += r;
    return sum;
  }

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Throws Error(invalid_argument) naming the first offending field.
inline void validate(const Scenario& s) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorKind::invalid_argument, field + ": " + why);
  };
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(name, "must be positive and finite");
  };

  if (s.user_pos.empty()) fail("user_pos", "at least one user is required");
  if (s.R.size() != s.user_pos.size()) {
    fail("R", "expected " + std::to_string(s.user_pos.size()) + " entries, got " +
                  std::to_string(s.R.size()));
  }
  for (std::size_t k = 0; k < s.R.size(); ++k) {
    if (!(s.R[k] >= 0.0) || !std::isfinite(s.R[k])) {
      fail("R", "entry for user " + std::to_string(k + 1) + " must be nonnegative");
    }
  }
  for (std::size_t k = 0; k < s.user_pos.size(); ++k) {
    if (!s.user_pos[k].allFinite()) {
      fail("user_pos", "entry for user " + std::to_string(k + 1) + " is not finite");
    }
  }
  positive(s.H, "H");
  positive(s.T, "T");
  if (s.N < 2) fail("N", "at least two slots are required");
  positive(s.P_u, "P_u");
  if (!(s.eta > 0.0 && s.eta <= 1.0)) fail("eta", "must lie in (0, 1]");
  positive(s.B, "B");
  positive(s.sigma2, "sigma2");
  positive(s.Gamma, "Gamma");
  positive(s.beta0, "beta0");
  positive(s.M, "M");
  positive(s.gamma_c, "gamma_c");
  positive(s.W_mass, "W");
  positive(s.V_max, "V_max");
  positive(s.xi, "xi");
  positive(s.xi1, "xi1");
  if (!s.q0.allFinite()) fail("q0", "not finite");
  if (!s.qF.allFinite()) fail("qF", "not finite");

  const double required_speed = (s.qF - s.q0).norm() / s.T;
  if (required_speed > s.V_max * (1.0 + 1e-12)) {
    fail("V_max", "straight flight from q0 to qF needs " + std::to_string(required_speed) +
                      " m/s, above the limit");
  }
}

/// The four-user reference mission with the paper-table parameters.
inline Scenario table2_scenario() {
  Scenario s;
  s.user_pos = {Vec2(0, 0), Vec2(0, 10), Vec2(10, 10), Vec2(10, 0)};
  s.R = {2e6, 4e6, 6e6, 3e6};
  return s;
}

}  // namespace uavmec
