#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uavmec/barrier.hpp"
#include "uavmec/core.hpp"
#include "uavmec/model.hpp"
#include "uavmec/scenario.hpp"

namespace uavmec {

/**
 * Lagrange multipliers of the offloading subproblem, in SI units.
 *
 * theta(0) is unused and kept at zero; theta(n) for 1 <= n <= N-2 prices the
 * UAV causality constraint of (0-based) slot n and theta(N-1) prices the
 * final balance between offloaded and UAV-computed bits. nu is dimensionless
 * (joules per joule), mu and theta are joules per bit.
 */
struct DualState {
  Eigen::VectorXd mu;
  Eigen::MatrixXd nu;
  Eigen::VectorXd theta;
  Eigen::VectorXd rho;     ///< never iterated: the pinned coordinates are eliminated
  double vartheta = 0.0;   ///< likewise

  static DualState zeros(int K, int N) {
    DualState d;
    d.mu = Eigen::VectorXd::Zero(K);
    d.nu = Eigen::MatrixXd::Zero(K, N);
    d.theta = Eigen::VectorXd::Zero(N);
    d.rho = Eigen::VectorXd::Zero(K);
    return d;
  }
};

/// The offloading and frequency slices of a Plan.
struct PlanPart {
  Eigen::MatrixXd l;       ///< K x N bits
  Eigen::MatrixXd f_user;  ///< K x N cycles/s
  Eigen::VectorXd f_uav;   ///< N cycles/s
};

inline Plan make_plan(const Trajectory& traj, const PlanPart& part) {
  return Plan{traj, part.l, part.f_user, part.f_uav};
}

/// KKT residuals of the offloading subproblem in solver units (Mbit, GHz, mJ).
struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;

  double max() const { return std::max({stationarity, primal, dual, complementarity}); }
};

struct TraceRow {
  int iteration = 0;
  std::string phase;
  double dual_value = 0.0;  ///< joules
  double kkt = 0.0;
};

/**
 * Offloading subproblem in solver units: bits in Mbit, frequencies in GHz,
 * energies in mJ. Each user's energy-causality rows are divided by that
 * user's total harvested energy.
 */
namespace p2 {

struct Data {
  int K = 0;
  int N = 0;
  double a = 0.0;      ///< Mbit per GHz-slot: K lambda 1e3 / M
  double e_hat = 0.0;  ///< UAV mJ per GHz^3-slot
  double rho = 0.0;    ///< 1e6 / (B lambda): spectral efficiency per Mbit
  Eigen::VectorXd eps;   ///< user relative energy per GHz^3-slot
  Eigen::MatrixXd tau;   ///< relative energy scale of offloading, K x N
  Eigen::MatrixXd Hpre;  ///< relative prefix harvest, K x N (last column = 1)
  Eigen::VectorXd Etot;  ///< total harvest per user, joules
  Eigen::VectorXd Rhat;  ///< demand, Mbit
  Eigen::MatrixXd gain;  ///< channel gain, K x N
};

inline Data make_data(const Scenario& s, const Trajectory& traj) {
  if (traj.cols() != s.N + 1) {
    throw Error(ErrorKind::dimension_mismatch, "trajectory must have N+1 waypoints");
  }
  Data d;
  d.K = s.K();
  d.N = s.N;
  const double lam = s.lambda();
  const double slot = s.slot_duration();
  d.a = slot * 1e3 / s.M;
  d.e_hat = s.gamma_c * slot * 1e30;
  d.rho = 1e6 / (s.B * lam);
  d.eps.resize(d.K);
  d.tau.resize(d.K, d.N);
  d.Hpre.resize(d.K, d.N);
  d.Etot.resize(d.K);
  d.Rhat.resize(d.K);
  d.gain.resize(d.K, d.N);
  for (int k = 0; k < d.K; ++k) {
    double acc = 0.0;
    for (int n = 0; n < d.N; ++n) {
      d.gain(k, n) = channel_gain(s, traj.col(n), k);
      acc += slot_harvest(s, traj.col(n), k);
      d.Hpre(k, n) = acc;
    }
    d.Etot(k) = acc;
    d.Hpre.row(k) /= acc;
    d.eps(k) = s.gamma_c * slot * 1e27 / acc;
    for (int n = 0; n < d.N; ++n) {
      d.tau(k, n) = lam * s.Gamma * s.sigma2 / d.gain(k, n) / acc;
    }
    d.Rhat(k) = s.R[k] * 1e-6;
  }
  return d;
}

/// Scaled multipliers; theta follows the DualState layout.
struct Duals {
  Eigen::VectorXd mu;
  Eigen::MatrixXd nu;
  Eigen::VectorXd theta;
};

inline Duals to_scaled(const Data& d, const DualState& s) {
  Duals y;
  y.mu = s.mu * 1e9;
  y.nu.resize(d.K, d.N);
  for (int k = 0; k < d.K; ++k) y.nu.row(k) = s.nu.row(k) * (1e3 * d.Etot(k));
  y.theta = s.theta * 1e9;
  y.theta(0) = 0.0;
  return y;
}

inline DualState to_si(const Data& d, const Duals& y) {
  DualState s = DualState::zeros(d.K, d.N);
  s.mu = y.mu * 1e-9;
  for (int k = 0; k < d.K; ++k) s.nu.row(k) = y.nu.row(k) / (1e3 * d.Etot(k));
  s.theta = y.theta * 1e-9;
  s.theta(0) = 0.0;
  return s;
}

/// Primal point in solver units. xl(k, N-1) and xu(0) are identically zero.
struct Primal {
  Eigen::MatrixXd xf;
  Eigen::MatrixXd xl;
  Eigen::VectorXd xu;
  Eigen::MatrixXd pow2;  ///< 2^(rho xl)
  Eigen::MatrixXd Nu;    ///< suffix sums of nu
  bool unbounded = false;  ///< a zero-denominator branch with a descent direction was hit

  static Primal zeros(int K, int N) {
    Primal p;
    p.xf = Eigen::MatrixXd::Zero(K, N);
    p.xl = Eigen::MatrixXd::Zero(K, N);
    p.xu = Eigen::VectorXd::Zero(N);
    p.pow2 = Eigen::MatrixXd::Ones(K, N);
    p.Nu = Eigen::MatrixXd::Zero(K, N);
    return p;
  }
};

/// Suffix sums S(n) = sum_{j=n}^{N-2} theta(j), S(N-1) = S(N) = 0.
inline Eigen::VectorXd theta_suffix(const Duals& y, int N) {
  Eigen::VectorXd S = Eigen::VectorXd::Zero(N + 1);
  for (int n = N - 2; n >= 1; --n) S(n) = S(n + 1) + y.theta(n);
  return S;
}

/**
 * Minimiser of the Lagrangian for the listed users and the UAV. Users not
 * listed keep zero variables.
 */
inline Primal recover(const Data& d, const Duals& y, const std::vector<int>& users) {
  const int N = d.N;
  Primal p = Primal::zeros(d.K, N);
  const Eigen::VectorXd S = theta_suffix(y, N);
  const double thN = y.theta(N - 1);
  const double ln2 = std::log(2.0);
  const double cap = kMaxOffloadExponent / d.rho;

  for (int k : users) {
    double acc = 0.0;
    for (int n = N - 1; n >= 0; --n) {
      acc += y.nu(k, n);
      p.Nu(k, n) = acc;
    }
    const double mu = y.mu(k);
    for (int n = 0; n < N; ++n) {
      const double Nu = p.Nu(k, n);
      if (Nu > 0.0) {
        p.xf(k, n) = mu > 0.0 ? std::sqrt(mu * d.a / (3.0 * d.eps(k) * Nu)) : 0.0;
      } else if (mu > 0.0) {
        p.xf(k, n) = d.Rhat(k) / d.a;
        p.unbounded = true;
      }
      if (n == N - 1) continue;
      const double c = mu + S(n + 1) - thN;
      if (Nu > 0.0) {
        const double arg = c / (Nu * d.tau(k, n) * d.rho * ln2);
        if (arg > 1.0) {
          p.xl(k, n) = std::log2(arg) / d.rho;
          p.pow2(k, n) = arg;
        }
      } else if (c > 0.0) {
        p.xl(k, n) = std::min(d.Rhat(k), cap);
        p.pow2(k, n) = std::exp2(d.rho * p.xl(k, n));
        p.unbounded = true;
      }
    }
  }
  for (int n = 1; n < N; ++n) {
    const double v = thN - S(n);
    p.xu(n) = v > 0.0 ? std::sqrt(d.a * v / (3.0 * d.e_hat)) : 0.0;
  }
  return p;
}

/// Constraint values in solver units.
struct Residuals {
  Eigen::VectorXd c1;  ///< R - bits (equality)
  Eigen::MatrixXd c2;  ///< relative spent - harvested prefix (<= 0)
  Eigen::VectorXd c3;  ///< index 1..N-2 (<= 0)
  double c4 = 0.0;     ///< offloaded - computed (equality)
};

inline Residuals residuals(const Data& d, const Primal& p, const std::vector<int>& users) {
  const int N = d.N;
  Residuals r;
  r.c1 = Eigen::VectorXd::Zero(d.K);
  r.c2 = Eigen::MatrixXd::Zero(d.K, N);
  r.c3 = Eigen::VectorXd::Zero(N);
  for (int k : users) {
    r.c1(k) = d.Rhat(k) - d.a * p.xf.row(k).sum() - p.xl.row(k).head(N - 1).sum();
    double spent = 0.0;
    for (int n = 0; n < N; ++n) {
      const double xf = p.xf(k, n);
      spent += d.eps(k) * xf * xf * xf + d.tau(k, n) * (p.pow2(k, n) - 1.0);
      r.c2(k, n) = spent - d.Hpre(k, n);
    }
  }
  double computed = 0.0;
  double offloaded = 0.0;
  for (int n = 1; n <= N - 2; ++n) {
    computed += d.a * p.xu(n);
    for (int k : users) offloaded += p.xl(k, n - 1);
    r.c3(n) = computed - offloaded;
  }
  double total_off = 0.0;
  for (int k : users) total_off += p.xl.row(k).head(N - 1).sum();
  r.c4 = total_off - d.a * p.xu.tail(N - 1).sum();
  return r;
}

inline double objective(const Data& d, const Primal& p) {
  return d.e_hat * p.xu.array().cube().sum();
}

/// Lagrangian value in mJ.
inline double lagrangian(const Data& d, const Primal& p, const Duals& y,
                         const std::vector<int>& users) {
  const Residuals r = residuals(d, p, users);
  double L = objective(d, p);
  for (int k : users) {
    L += y.mu(k) * r.c1(k);
    L += y.nu.row(k).dot(r.c2.row(k));
  }
  for (int n = 1; n <= d.N - 2; ++n) L += y.theta(n) * r.c3(n);
  L += y.theta(d.N - 1) * r.c4;
  return L;
}

/// Partial derivatives of the Lagrangian with respect to every free primal variable.
struct LagrangianGradient {
  Eigen::MatrixXd xf;
  Eigen::MatrixXd xl;
  Eigen::VectorXd xu;
};

inline LagrangianGradient lagrangian_gradient(const Data& d, const Primal& p, const Duals& y,
                                              const std::vector<int>& users) {
  const int N = d.N;
  LagrangianGradient g{Eigen::MatrixXd::Zero(d.K, N), Eigen::MatrixXd::Zero(d.K, N),
                       Eigen::VectorXd::Zero(N)};
  const Eigen::VectorXd S = theta_suffix(y, N);
  const double thN = y.theta(N - 1);
  const double ln2 = std::log(2.0);
  for (int k : users) {
    double Nu = 0.0;
    for (int n = N - 1; n >= 0; --n) {
      Nu += y.nu(k, n);
      const double xf = p.xf(k, n);
      g.xf(k, n) = -y.mu(k) * d.a + 3.0 * d.eps(k) * Nu * xf * xf;
      if (n < N - 1) {
        g.xl(k, n) = -y.mu(k) - S(n + 1) + thN + Nu * d.tau(k, n) * d.rho * ln2 * p.pow2(k, n);
      }
    }
  }
  for (int n = 1; n < N; ++n) {
    g.xu(n) = 3.0 * d.e_hat * p.xu(n) * p.xu(n) + d.a * (S(n) - thN);
  }
  return g;
}

inline KktReport kkt(const Data& d, const Primal& p, const Duals& y, const std::vector<int>& users) {
  const int N = d.N;
  KktReport rep;
  const Residuals r = residuals(d, p, users);
  const LagrangianGradient g = lagrangian_gradient(d, p, y, users);
  auto stat = [&](double x, double grad) {
    // Bound-constrained stationarity: zero gradient inside, nonnegative at zero.
    const double v = x > 0.0 ? std::abs(grad) : std::max(0.0, -grad);
    rep.stationarity = std::max(rep.stationarity, v);
  };
  for (int k : users) {
    rep.primal = std::max(rep.primal, std::abs(r.c1(k)));
    rep.dual = std::max(rep.dual, -y.mu(k));
    for (int n = 0; n < N; ++n) {
      stat(p.xf(k, n), g.xf(k, n));
      if (n < N - 1) stat(p.xl(k, n), g.xl(k, n));
      rep.primal = std::max(rep.primal, r.c2(k, n));
      rep.dual = std::max(rep.dual, -y.nu(k, n));
      rep.complementarity = std::max(rep.complementarity, std::abs(y.nu(k, n) * r.c2(k, n)));
    }
  }
  double tail = 0.0;
  for (int n = 1; n <= N - 2; ++n) {
    rep.primal = std::max(rep.primal, r.c3(n));
    rep.dual = std::max(rep.dual, -y.theta(n));
    rep.complementarity = std::max(rep.complementarity, std::abs(y.theta(n) * r.c3(n)));
    tail += y.theta(n);
  }
  rep.dual = std::max(rep.dual, tail - y.theta(N - 1));
  rep.primal = std::max(rep.primal, std::abs(r.c4));
  for (int n = 1; n < N; ++n) stat(p.xu(n), g.xu(n));
  return rep;
}

/**
 * Greatest convex minorant of the prefix-harvest curve, returned as per-slot
 * energy increments. Spending along it maximises the number of locally
 * computable bits under energy causality.
 */
inline Eigen::VectorXd harvest_minorant(const Eigen::VectorXd& prefix) {
  const int N = static_cast<int>(prefix.size());
  std::vector<int> hull{0};
  auto H = [&](int i) { return i == 0 ? 0.0 : prefix(i - 1); };
  for (int i = 1; i <= N; ++i) {
    while (hull.size() >= 2) {
      const int i0 = hull[hull.size() - 2];
      const int i1 = hull.back();
      // Drop i1 when it lies on or above the chord from i0 to i.
      const double lhs = (H(i1) - H(i0)) * (i - i0);
      const double rhs = (H(i) - H(i0)) * (i1 - i0);
      if (lhs >= rhs) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(i);
  }
  Eigen::VectorXd e(N);
  for (std::size_t h = 1; h < hull.size(); ++h) {
    const int i0 = hull[h - 1];
    const int i1 = hull[h];
    const double slope = (H(i1) - H(i0)) / (i1 - i0);
    for (int i = i0; i < i1; ++i) e(i) = slope;
  }
  return e;
}

/// Largest frequency schedule a user can sustain computing everything locally.
inline Eigen::VectorXd max_local_schedule(const Data& d, int k) {
  const Eigen::VectorXd e = harvest_minorant(d.Hpre.row(k).transpose());
  Eigen::VectorXd f(e.size());
  for (int n = 0; n < e.size(); ++n) f(n) = std::cbrt(std::max(0.0, e(n) / d.eps(k)));
  return f;
}

/// Largest number of bits (Mbit) user k can process, offloading allowed.
class MaxBitsProgram : public barrier::Program {
 public:
  MaxBitsProgram(const Data& d, int k) : d_(d), k_(k) {}

  int num_vars() const override { return 2 * d_.N - 1; }
  int num_ineq() const override { return d_.N + num_vars(); }

  double objective(const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                   Eigen::MatrixXd*) const override {
    const int N = d_.N;
    if (grad) {
      grad->resize(num_vars());
      grad->head(N).setConstant(-d_.a);
      grad->tail(N - 1).setConstant(-1.0);
    }
    return -(d_.a * x.head(N).sum() + x.tail(N - 1).sum());
  }

  void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& g,
                   Eigen::MatrixXd* jac) const override {
    const int N = d_.N;
    const int nv = num_vars();
    g.resize(num_ineq());
    if (jac) jac->setZero(num_ineq(), nv);
    double spent = 0.0;
    const double ln2 = std::log(2.0);
    for (int n = 0; n < N; ++n) {
      const double xf = x(n);
      spent += d_.eps(k_) * xf * xf * xf;
      if (n < N - 1) spent += d_.tau(k_, n) * std::expm1(ln2 * d_.rho * x(N + n));
      g(n) = spent - d_.Hpre(k_, n);
      if (jac) {
        for (int i = 0; i <= n; ++i) {
          (*jac)(n, i) = 3.0 * d_.eps(k_) * x(i) * x(i);
          if (i < N - 1) {
            (*jac)(n, N + i) = d_.tau(k_, i) * d_.rho * ln2 * std::exp2(d_.rho * x(N + i));
          }
        }
      }
    }
    for (int v = 0; v < nv; ++v) {
      g(N + v) = -x(v);
      if (jac) (*jac)(N + v, v) = -1.0;
    }
  }

  void add_constraint_hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                              Eigen::MatrixXd& hess) const override {
    const int N = d_.N;
    const double ln2 = std::log(2.0);
    double W = 0.0;
    for (int n = N - 1; n >= 0; --n) {
      W += w(n);
      hess(n, n) += W * 6.0 * d_.eps(k_) * x(n);
      if (n < N - 1) {
        const double r = d_.rho * ln2;
        hess(N + n, N + n) += W * d_.tau(k_, n) * r * r * std::exp2(d_.rho * x(N + n));
      }
    }
  }

 private:
  const Data& d_;
  int k_;
};

/// Returns (max Mbit, maximising point) for user k.
inline std::pair<double, Eigen::VectorXd> max_bits(const Data& d, int k) {
  const int N = d.N;
  MaxBitsProgram prog(d, k);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(2 * N - 1, 1e-3);
  Eigen::VectorXd g;
  for (int tries = 0; tries < 200; ++tries) {
    prog.constraints(x, g, nullptr);
    if (g.maxCoeff() < 0.0) break;
    x *= 0.5;
  }
  barrier::Options opt;
  opt.gap_tol = 1e-12;
  const barrier::Result r = barrier::solve(prog, x, opt);
  return {-r.objective, r.x};
}

}  // namespace p2

/// Outcome of the per-user feasibility probe on a fixed trajectory.
struct FeasibilityProbe {
  Eigen::VectorXd max_local_bits;  ///< bits, all-local computing
  Eigen::VectorXd max_bits;        ///< bits, offloading allowed (only probed when needed)
  std::vector<bool> slack;         ///< all-local computing already meets the demand
  bool feasible = true;
  int infeasible_user = -1;
};

/**
 * Certifies that every user can meet its demand on `traj`. Users whose demand
 * fits all-local computing are marked slack; the others are checked against
 * the largest number of bits they can process with offloading.
 */
inline FeasibilityProbe probe_feasibility(const Scenario& s, const Trajectory& traj) {
  const p2::Data d = p2::make_data(s, traj);
  FeasibilityProbe pr;
  pr.max_local_bits.resize(d.K);
  pr.max_bits.resize(d.K);
  pr.slack.assign(d.K, false);
  for (int k = 0; k < d.K; ++k) {
    const Eigen::VectorXd f = p2::max_local_schedule(d, k);
    pr.max_local_bits(k) = d.a * f.sum() * 1e6;
    if (pr.max_local_bits(k) >= s.R[k]) {
      pr.slack[k] = true;
      pr.max_bits(k) = pr.max_local_bits(k);
      continue;
    }
    pr.max_bits(k) = p2::max_bits(d, k).first * 1e6;
    if (pr.feasible && pr.max_bits(k) < s.R[k]) {
      pr.feasible = false;
      pr.infeasible_user = k;
    }
  }
  return pr;
}

namespace p2 {

inline std::vector<int> all_users(int K) {
  std::vector<int> u(K);
  for (int k = 0; k < K; ++k) u[k] = k;
  return u;
}

inline void check_duals(const Scenario& s, const DualState& dual) {
  const int K = s.K();
  const int N = s.N;
  if (dual.mu.size() != K || dual.nu.rows() != K || dual.nu.cols() != N || dual.theta.size() != N) {
    throw Error(ErrorKind::dimension_mismatch, "dual state dimensions do not match the scenario");
  }
  if (dual.mu.minCoeff() < 0.0 || dual.nu.minCoeff() < 0.0 ||
      (N > 2 && dual.theta.segment(1, N - 2).minCoeff() < 0.0)) {
    throw Error(ErrorKind::invalid_argument, "dual state has negative multipliers");
  }
  const double tail = N > 2 ? dual.theta.segment(1, N - 2).sum() : 0.0;
  if (dual.theta(N - 1) < tail * (1.0 - 1e-12)) {
    throw Error(ErrorKind::out_of_range, "dual iterate outside recoverable region");
  }
}

inline PlanPart to_plan_part(const Data& d, const Primal& p) {
  PlanPart out;
  out.l = p.xl * 1e6;
  out.l.col(d.N - 1).setZero();
  out.f_user = p.xf * 1e9;
  out.f_uav = p.xu * 1e9;
  out.f_uav(0) = 0.0;
  return out;
}

}  // namespace p2

/**
 * Closed-form minimiser of the offloading Lagrangian for fixed multipliers.
 *
 * @throws Error(out_of_range) "dual iterate outside recoverable region" when
 *         theta(N-1) is below the sum of the causality multipliers
 */
inline PlanPart recover_primal(const Scenario& s, const Trajectory& traj, const DualState& dual) {
  p2::check_duals(s, dual);
  const p2::Data d = p2::make_data(s, traj);
  const p2::Primal p = p2::recover(d, p2::to_scaled(d, dual), p2::all_users(d.K));
  return p2::to_plan_part(d, p);
}

/// Lagrange dual function in joules; -inf where the Lagrangian is unbounded below.
inline double dual_value(const Scenario& s, const Trajectory& traj, const DualState& dual) {
  p2::check_duals(s, dual);
  const p2::Data d = p2::make_data(s, traj);
  const p2::Duals y = p2::to_scaled(d, dual);
  const std::vector<int> users = p2::all_users(d.K);
  const p2::Primal p = p2::recover(d, y, users);
  if (p.unbounded) return -std::numeric_limits<double>::infinity();
  return p2::lagrangian(d, p, y, users) * 1e-3;
}

namespace p2 {

/// Projects scaled multipliers onto the orthant and the recoverable region.
inline void project(Duals& y, int N) {
  y.mu = y.mu.cwiseMax(0.0);
  y.nu = y.nu.cwiseMax(0.0);
  y.theta = y.theta.cwiseMax(0.0);
  y.theta(0) = 0.0;
  if (N <= 2) return;
  for (int cycle = 0; cycle < 50; ++cycle) {
    const double tail = y.theta.segment(1, N - 2).sum();
    if (tail <= y.theta(N - 1)) break;
    y.theta.segment(1, N - 2) *= y.theta(N - 1) / tail;
  }
}

inline void subgradient_step(const Data& d, Duals& y, const std::vector<int>& users, double step) {
  const Primal p = recover(d, y, users);
  const Residuals r = residuals(d, p, users);
  for (int k : users) {
    y.mu(k) += step * r.c1(k);
    y.nu.row(k) += step * r.c2.row(k);
  }
  for (int n = 1; n <= d.N - 2; ++n) y.theta(n) += step * r.c3(n);
  y.theta(d.N - 1) += step * r.c4;
  project(y, d.N);
}

}  // namespace p2

/**
 * One projected subgradient ascent step on the dual, taken in solver units:
 * every multiplier moves by `step` times its constraint residual at the
 * recovered primal point, then mu, nu, theta are floored at zero and the
 * causality multipliers are rescaled into the recoverable region.
 */
inline DualState dual_subgradient_step(const Scenario& s, const Trajectory& traj,
                                       const DualState& dual, double step) {
  if (!(step > 0.0)) throw Error(ErrorKind::invalid_argument, "subgradient step must be positive");
  p2::check_duals(s, dual);
  const p2::Data d = p2::make_data(s, traj);
  p2::Duals y = p2::to_scaled(d, dual);
  p2::subgradient_step(d, y, p2::all_users(d.K), step);
  DualState out = p2::to_si(d, y);
  out.rho = dual.rho;
  out.vartheta = dual.vartheta;
  return out;
}

struct OffloadOptions {
  double tol = 1e-9;       ///< target KKT residual (solver units)
  double accept = 1e-6;    ///< largest KKT residual returned without error
  int warm_iters = 50;     ///< subgradient iterations before the Newton stage
  double warm_step = 1.0;  ///< a in the step a / sqrt(t)
  int max_outer = 40;      ///< barrier stages of the Newton phase
};

struct OffloadSolution {
  PlanPart plan_part;
  DualState duals;
  double objective = 0.0;  ///< UAV computing energy, joules
  KktReport kkt_residuals;
  std::vector<TraceRow> trace;
  std::vector<bool> slack;
  int newton_steps = 0;
};

namespace p2 {

/**
 * The dual problem as a barrier program over y = (mu, nu, theta_1..N-2, zeta)
 * with theta_N = zeta + sum theta_m, so that the recoverable region is the
 * nonnegative orthant.
 */
class DualProgram : public barrier::Program {
 public:
  DualProgram(const Data& d, std::vector<int> users) : d_(d), users_(std::move(users)) {
    Ka_ = static_cast<int>(users_.size());
    nth_ = std::max(0, d_.N - 2);
  }

  int num_vars() const override { return Ka_ + Ka_ * d_.N + nth_ + 1; }
  int num_ineq() const override { return num_vars(); }

  Duals unpack(const Eigen::VectorXd& v) const {
    Duals y;
    y.mu = Eigen::VectorXd::Zero(d_.K);
    y.nu = Eigen::MatrixXd::Zero(d_.K, d_.N);
    y.theta = Eigen::VectorXd::Zero(d_.N);
    for (int a = 0; a < Ka_; ++a) {
      const int k = users_[a];
      y.mu(k) = v(a);
      for (int n = 0; n < d_.N; ++n) y.nu(k, n) = v(Ka_ + a * d_.N + n);
    }
    double tail = 0.0;
    for (int m = 1; m <= nth_; ++m) {
      y.theta(m) = v(theta_index(m));
      tail += y.theta(m);
    }
    y.theta(d_.N - 1) = v(num_vars() - 1) + tail;
    return y;
  }

  Eigen::VectorXd pack(const Duals& y) const {
    Eigen::VectorXd v(num_vars());
    for (int a = 0; a < Ka_; ++a) {
      const int k = users_[a];
      v(a) = y.mu(k);
      for (int n = 0; n < d_.N; ++n) v(Ka_ + a * d_.N + n) = y.nu(k, n);
    }
    double tail = 0.0;
    for (int m = 1; m <= nth_; ++m) {
      v(theta_index(m)) = y.theta(m);
      tail += y.theta(m);
    }
    v(num_vars() - 1) = y.theta(d_.N - 1) - tail;
    return v;
  }

  double objective(const Eigen::VectorXd& v, Eigen::VectorXd* grad,
                   Eigen::MatrixXd* hess) const override {
    const Duals y = unpack(v);
    const Primal p = recover(d_, y, users_);
    if (p.unbounded) return std::numeric_limits<double>::infinity();
    const double L = lagrangian(d_, p, y, users_);
    if (grad || hess) {
      const Residuals r = residuals(d_, p, users_);
      if (grad) *grad = -gradient_y(r);
      if (hess) add_hessian(p, *hess);
    }
    return -L;
  }

  void constraints(const Eigen::VectorXd& v, Eigen::VectorXd& g,
                   Eigen::MatrixXd* jac) const override {
    g = -v;
    if (jac) *jac = -Eigen::MatrixXd::Identity(num_vars(), num_vars());
  }

  void add_constraint_hessian(const Eigen::VectorXd&, const Eigen::VectorXd&,
                              Eigen::MatrixXd&) const override {}

  const std::vector<int>& users() const { return users_; }

 private:
  int theta_index(int m) const { return Ka_ + Ka_ * d_.N + (m - 1); }

  Eigen::VectorXd gradient_y(const Residuals& r) const {
    Eigen::VectorXd gy(num_vars());
    for (int a = 0; a < Ka_; ++a) {
      const int k = users_[a];
      gy(a) = r.c1(k);
      for (int n = 0; n < d_.N; ++n) gy(Ka_ + a * d_.N + n) = r.c2(k, n);
    }
    for (int m = 1; m <= nth_; ++m) gy(theta_index(m)) = r.c3(m) + r.c4;
    gy(num_vars() - 1) = r.c4;
    return gy;
  }

  /// Adds sum_v b_v b_v' / L_vv over primal variables strictly inside their bounds.
  void add_hessian(const Primal& p, Eigen::MatrixXd& H) const {
    const int N = d_.N;
    const int nv = num_vars();
    const double ln2 = std::log(2.0);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(nv, nv);
    Eigen::VectorXd b(nv);
    for (int a = 0; a < Ka_; ++a) {
      const int k = users_[a];
      for (int n = 0; n < N; ++n) {
        const double Nu = p.Nu(k, n);
        if (!(Nu > 0.0)) continue;
        const double xf = p.xf(k, n);
        if (xf > 0.0) {
          b.setZero();
          b(a) = -d_.a;
          const double dv = 3.0 * d_.eps(k) * xf * xf;
          for (int j = n; j < N; ++j) b(Ka_ + a * N + j) = dv;
          const double Lvv = 6.0 * d_.eps(k) * Nu * xf;
          acc.selfadjointView<Eigen::Lower>().rankUpdate(b, 1.0 / Lvv);
        }
        if (n < N - 1 && p.xl(k, n) > 0.0) {
          b.setZero();
          b(a) = -1.0;
          const double dv = d_.tau(k, n) * d_.rho * ln2 * p.pow2(k, n);
          for (int j = n; j < N; ++j) b(Ka_ + a * N + j) = dv;
          for (int m = 1; m <= std::min(n, nth_); ++m) b(theta_index(m)) = 1.0;
          b(nv - 1) = 1.0;
          const double Lvv = Nu * d_.tau(k, n) * d_.rho * ln2 * d_.rho * ln2 * p.pow2(k, n);
          acc.selfadjointView<Eigen::Lower>().rankUpdate(b, 1.0 / Lvv);
        }
      }
    }
    for (int n = 1; n < N; ++n) {
      const double xu = p.xu(n);
      if (!(xu > 0.0)) continue;
      b.setZero();
      for (int m = 1; m <= std::min(n - 1, nth_); ++m) b(theta_index(m)) = -d_.a;
      b(nv - 1) = -d_.a;
      acc.selfadjointView<Eigen::Lower>().rankUpdate(b, 1.0 / (6.0 * d_.e_hat * xu));
    }
    H += acc.selfadjointView<Eigen::Lower>();
  }

  const Data& d_;
  std::vector<int> users_;
  int Ka_ = 0;
  int nth_ = 0;
};

/// Dual starting point from a uniform-rate guess of the primal solution.
inline Duals initial_duals(const Data& d, const std::vector<int>& users,
                           const Eigen::VectorXd& local_bits) {
  const int N = d.N;
  Duals y{Eigen::VectorXd::Zero(d.K), Eigen::MatrixXd::Zero(d.K, N), Eigen::VectorXd::Zero(N)};
  double off = 0.0;
  for (int k : users) off += std::max(0.05 * d.Rhat(k), d.Rhat(k) - local_bits(k));
  const double xu = off / (d.a * (N - 1));
  const double zeta = 3.0 * d.e_hat * xu * xu / d.a;
  y.theta(N - 1) = zeta;
  for (int k : users) {
    y.mu(k) = 2.0 * zeta;
    const double local = std::max(1e-3 * d.Rhat(k), std::min(local_bits(k), 0.95 * d.Rhat(k)));
    const double xf = local / (d.a * N);
    const double nu_last = y.mu(k) * d.a / (3.0 * d.eps(k) * xf * xf);
    y.nu.row(k).setConstant(1e-3 * nu_last / N);
    y.nu(k, N - 1) = nu_last;
  }
  return y;
}

}  // namespace p2

/**
 * Optimal offloading bits and CPU frequencies on a fixed trajectory.
 *
 * Pipeline: feasibility probe; users whose demand fits all-local computing
 * are scheduled along the harvest minorant with zero multipliers; the dual of
 * the remaining problem is warmed by projected subgradient steps and then
 * maximised by a damped Newton method on a log barrier over the recoverable
 * region. The primal plan is read off the closed forms at the final
 * multipliers.
 *
 * @throws Error(infeasible) "infeasible for this trajectory" when the probe fails
 * @throws Error(iteration_limit) "dual iteration limit" when the residuals stall
 */
inline OffloadSolution solve_p2(const Scenario& s, const Trajectory& traj,
                                const OffloadOptions& opt = {}) {
  const p2::Data d = p2::make_data(s, traj);
  const int K = d.K;
  const int N = d.N;
  const FeasibilityProbe probe = probe_feasibility(s, traj);
  if (!probe.feasible) {
    throw Error(ErrorKind::infeasible, "infeasible for this trajectory (user " +
                                           std::to_string(probe.infeasible_user + 1) +
                                           " cannot meet its demand)");
  }

  OffloadSolution sol;
  sol.slack = probe.slack;
  std::vector<int> active;
  for (int k = 0; k < K; ++k) {
    if (!probe.slack[k]) active.push_back(k);
  }

  p2::Primal slack_part = p2::Primal::zeros(K, N);
  for (int k = 0; k < K; ++k) {
    if (!probe.slack[k] || d.Rhat(k) <= 0.0) continue;
    const Eigen::VectorXd f = p2::max_local_schedule(d, k);
    const double bits = d.a * f.sum();
    slack_part.xf.row(k) = (f * (d.Rhat(k) / bits)).transpose();
  }

  p2::Duals y{Eigen::VectorXd::Zero(K), Eigen::MatrixXd::Zero(K, N), Eigen::VectorXd::Zero(N)};
  p2::Primal prim = p2::Primal::zeros(K, N);

  if (!active.empty()) {
    y = p2::initial_duals(d, active, probe.max_local_bits * 1e-6);
    for (int it = 1; it <= opt.warm_iters; ++it) {
      p2::subgradient_step(d, y, active, opt.warm_step / std::sqrt(static_cast<double>(it)));
      const p2::Primal p = p2::recover(d, y, active);
      const double g = p.unbounded ? -std::numeric_limits<double>::infinity()
                                   : p2::lagrangian(d, p, y, active) * 1e-3;
      sol.trace.push_back({it, "subgradient", g, p2::kkt(d, p, y, active).max()});
    }

    p2::DualProgram prog(d, active);
    Eigen::VectorXd v = prog.pack(y);
    const double floor = 1e-6 * std::max(1.0, v.cwiseAbs().maxCoeff());
    v = v.cwiseMax(floor);
    barrier::Options bopt;
    bopt.gap_tol = 1e-11;
    bopt.max_outer = opt.max_outer;
    bopt.max_newton = 200;
    const barrier::Result br = barrier::solve(prog, v, bopt);
    sol.newton_steps = br.newton_steps;
    int row = opt.warm_iters;
    for (const auto& h : br.history) {
      sol.trace.push_back({++row, "newton", -h.objective * 1e-3, h.gap});
    }
    y = prog.unpack(br.x);
    prim = p2::recover(d, y, active);
    sol.kkt_residuals = p2::kkt(d, prim, y, active);
    if (prim.unbounded || sol.kkt_residuals.max() > opt.accept) {
      throw Error(ErrorKind::iteration_limit,
                  "dual iteration limit (KKT residual " + std::to_string(sol.kkt_residuals.max()) + ")");
    }
    sol.trace.back().kkt = sol.kkt_residuals.max();
  } else {
    sol.kkt_residuals = p2::kkt(d, prim, y, active);
  }

  for (int k = 0; k < K; ++k) {
    if (probe.slack[k]) prim.xf.row(k) = slack_part.xf.row(k);
  }
  sol.plan_part = p2::to_plan_part(d, prim);
  sol.duals = p2::to_si(d, y);
  for (int n = 1; n < N; ++n) sol.objective += compute_energy(s, sol.plan_part.f_uav(n));
  return sol;
}

struct OracleResult {
  PlanPart plan_part;
  double objective = 0.0;          ///< joules
  std::vector<double> history;     ///< objective after every barrier stage, joules
  double max_residual = 0.0;       ///< worst constraint residual, solver units
};

namespace p2 {

/**
 * The full offloading problem as a primal barrier program. Variables per
 * user: xf(0..N-1), xl(0..N-2); then the UAV frequencies xu(1..N-1).
 */
class PrimalProgram : public barrier::Program {
 public:
  PrimalProgram(const Data& d, std::vector<int> users) : d_(d), users_(std::move(users)) {
    Ka_ = static_cast<int>(users_.size());
    per_ = 2 * d_.N - 1;
  }

  int num_vars() const override { return Ka_ * per_ + d_.N - 1; }
  int num_ineq() const override { return Ka_ * d_.N + std::max(0, d_.N - 2) + num_vars(); }

  int xf(int a, int n) const { return a * per_ + n; }
  int xl(int a, int n) const { return a * per_ + d_.N + n; }
  int xu(int n) const { return Ka_ * per_ + n - 1; }

  Primal unpack(const Eigen::VectorXd& x) const {
    Primal p = Primal::zeros(d_.K, d_.N);
    for (int a = 0; a < Ka_; ++a) {
      const int k = users_[a];
      for (int n = 0; n < d_.N; ++n) p.xf(k, n) = x(xf(a, n));
      for (int n = 0; n < d_.N - 1; ++n) {
        p.xl(k, n) = x(xl(a, n));
        p.pow2(k, n) = std::exp2(d_.rho * p.xl(k, n));
      }
    }
    for (int n = 1; n < d_.N; ++n) p.xu(n) = x(xu(n));
    return p;
  }

  double objective(const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                   Eigen::MatrixXd* hess) const override {
    double f = 0.0;
    if (grad) grad->setZero(num_vars());
    for (int n = 1; n < d_.N; ++n) {
      const double u = x(xu(n));
      f += d_.e_hat * u * u * u;
      if (grad) (*grad)(xu(n)) = 3.0 * d_.e_hat * u * u;
      if (hess) (*hess)(xu(n), xu(n)) += 6.0 * d_.e_hat * u;
    }
    return f;
  }

  void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& g,
                   Eigen::MatrixXd* jac) const override {
    const int N = d_.N;
    const double ln2 = std::log(2.0);
    g.resize(num_ineq());
    if (jac) jac->setZero(num_ineq(), num_vars());
    int row = 0;
    for (int a = 0; a < Ka_; ++a) {
      const int k = users_[a];
      double spent = 0.0;
      for (int n = 0; n < N; ++n) {
        const double f = x(xf(a, n));
        spent += d_.eps(k) * f * f * f;
        if (n < N - 1) spent += d_.tau(k, n) * std::expm1(ln2 * d_.rho * x(xl(a, n)));
        g(row) = spent - d_.Hpre(k, n);
        if (jac) {
          for (int i = 0; i <= n; ++i) {
            const double fi = x(xf(a, i));
            (*jac)(row, xf(a, i)) = 3.0 * d_.eps(k) * fi * fi;
            if (i < N - 1) {
              (*jac)(row, xl(a, i)) = d_.tau(k, i) * d_.rho * ln2 * std::exp2(d_.rho * x(xl(a, i)));
            }
          }
        }
        ++row;
      }
    }
    for (int n = 1; n <= N - 2; ++n) {
      double v = 0.0;
      for (int i = 1; i <= n; ++i) {
        v += d_.a * x(xu(i));
        if (jac) (*jac)(row, xu(i)) = d_.a;
      }
      for (int a = 0; a < Ka_; ++a) {
        for (int i = 0; i <= n - 1; ++i) {
          v -= x(xl(a, i));
          if (jac) (*jac)(row, xl(a, i)) = -1.0;
        }
      }
      g(row++) = v;
    }
    for (int v = 0; v < num_vars(); ++v) {
      g(row) = -x(v);
      if (jac) (*jac)(row, v) = -1.0;
      ++row;
    }
  }

  void add_constraint_hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                              Eigen::MatrixXd& hess) const override {
    const int N = d_.N;
    const double r = d_.rho * std::log(2.0);
    for (int a = 0; a < Ka_; ++a) {
      const int k = users_[a];
      double W = 0.0;
      for (int n = N - 1; n >= 0; --n) {
        W += w(a * N + n);
        hess(xf(a, n), xf(a, n)) += W * 6.0 * d_.eps(k) * x(xf(a, n));
        if (n < N - 1) {
          hess(xl(a, n), xl(a, n)) += W * d_.tau(k, n) * r * r * std::exp2(d_.rho * x(xl(a, n)));
        }
      }
    }
  }

  Eigen::MatrixXd eq_matrix() const override {
    const int N = d_.N;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(Ka_ + 1, num_vars());
    for (int a = 0; a < Ka_; ++a) {
      for (int n = 0; n < N; ++n) A(a, xf(a, n)) = d_.a;
      for (int n = 0; n < N - 1; ++n) {
        A(a, xl(a, n)) = 1.0;
        A(Ka_, xl(a, n)) = 1.0;
      }
    }
    for (int n = 1; n < N; ++n) A(Ka_, xu(n)) = -d_.a;
    return A;
  }

  Eigen::VectorXd eq_rhs() const override {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(Ka_ + 1);
    for (int a = 0; a < Ka_; ++a) b(a) = d_.Rhat(users_[a]);
    return b;
  }

 private:
  const Data& d_;
  std::vector<int> users_;
  int Ka_ = 0;
  int per_ = 0;
};

}  // namespace p2

/**
 * Reference solution of the offloading subproblem by a primal log-barrier
 * method, independent of the dual closed forms. The start is built from
 * each user's bit-maximising schedule mixed with a small uniform load and
 * scaled to the demand, with the UAV following the arrivals at a lag, and
 * then recentred by margin maximisation.
 *
 * @throws Error(infeasible) when some user cannot exceed its demand strictly
 */
inline OracleResult primal_oracle_p2(const Scenario& s, const Trajectory& traj) {
  const p2::Data d = p2::make_data(s, traj);
  const int K = d.K;
  const int N = d.N;
  std::vector<int> users;
  for (int k = 0; k < K; ++k) {
    if (d.Rhat(k) > 0.0) users.push_back(k);
  }
  OracleResult out;
  if (users.empty()) {
    out.plan_part = p2::to_plan_part(d, p2::Primal::zeros(K, N));
    out.history.push_back(0.0);
    return out;
  }

  p2::PrimalProgram prog(d, users);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(prog.num_vars());
  Eigen::VectorXd S = Eigen::VectorXd::Zero(N - 1);  // cumulative offloaded Mbit through slot n
  for (std::size_t a = 0; a < users.size(); ++a) {
    const int k = users[a];
    const auto [best, xm] = p2::max_bits(d, k);
    if (!(best > d.Rhat(k))) {
      throw Error(ErrorKind::infeasible, "infeasible for this trajectory (no strictly feasible plan for user " +
                                             std::to_string(k + 1) + ")");
    }
    // Small uniform load that is itself strictly energy-feasible.
    double u = 1e-3;
    p2::MaxBitsProgram single(d, k);
    Eigen::VectorXd w = Eigen::VectorXd::Constant(2 * N - 1, u);
    Eigen::VectorXd g;
    for (int tries = 0; tries < 200; ++tries) {
      single.constraints(w, g, nullptr);
      if (g.head(N).maxCoeff() < 0.0) break;
      w *= 0.5;
    }
    const double bits_w = d.a * w.head(N).sum() + w.tail(N - 1).sum();
    const double delta = std::min(0.5, 0.5 * (best - d.Rhat(k)) / std::max(best - bits_w, 1e-300));
    Eigen::VectorXd z = (1.0 - delta) * xm.cwiseMax(0.0) + delta * w;
    const double bits_z = d.a * z.head(N).sum() + z.tail(N - 1).sum();
    z *= d.Rhat(k) / bits_z;
    for (int n = 0; n < N; ++n) x(prog.xf(static_cast<int>(a), n)) = z(n);
    for (int n = 0; n < N - 1; ++n) {
      x(prog.xl(static_cast<int>(a), n)) = z(N + n);
      S(n) += z(N + n);
    }
  }
  for (int n = 1; n < N - 1; ++n) S(n) += S(n - 1);
  const double total = S(N - 2);
  const double lag = 0.5;
  auto F = [&](double v) { return (1.0 - lag) * v + lag * total * (v / total) * (v / total); };
  double prev = 0.0;
  for (int n = 1; n < N; ++n) {
    const double cur = F(S(n - 1));
    x(prog.xu(n)) = (cur - prev) / d.a;
    prev = cur;
  }

  // Recentre away from the energy boundary before path following.
  const barrier::Phase1Result centred = barrier::phase1(prog, x, {});
  if (centred.strictly_feasible) x = centred.x;

  barrier::Options opt;
  opt.gap_tol = 1e-10;
  opt.max_newton = 200;
  const barrier::Result r = barrier::solve(prog, x, opt);
  for (const auto& h : r.history) out.history.push_back(h.objective * 1e-3);

  p2::Primal p = prog.unpack(r.x);
  const p2::Residuals res = p2::residuals(d, p, users);
  for (int k : users) {
    out.max_residual = std::max(out.max_residual, std::abs(res.c1(k)));
    out.max_residual = std::max(out.max_residual, res.c2.row(k).maxCoeff());
  }
  if (N > 2) out.max_residual = std::max(out.max_residual, res.c3.segment(1, N - 2).maxCoeff());
  out.max_residual = std::max(out.max_residual, std::abs(res.c4));
  out.plan_part = p2::to_plan_part(d, p);
  for (int n = 1; n < N; ++n) out.objective += compute_energy(s, out.plan_part.f_uav(n));
  return out;
}

}  // namespace uavmec
