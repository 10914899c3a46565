#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "uavmec/core.hpp"

namespace uavmec::barrier {

/**
 * Smooth convex program
 *
 *     minimize f(x)  subject to  g_i(x) <= 0,  A x = b.
 *
 * Implementations supply values, first and second derivatives. The objective
 * may return +inf outside its domain; the solver then backtracks.
 */
class Program {
 public:
  virtual ~Program() = default;

  virtual int num_vars() const = 0;
  virtual int num_ineq() const = 0;

  /// Returns f(x). When requested, overwrites grad and adds the Hessian into a
  /// caller-zeroed matrix.
  virtual double objective(const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                           Eigen::MatrixXd* hess) const = 0;

  /// Fills g (size num_ineq) and, when requested, overwrites the Jacobian
  /// (num_ineq x num_vars).
  virtual void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& g,
                           Eigen::MatrixXd* jac) const = 0;

  /// hess += sum_i w_i * Hessian of g_i at x.
  virtual void add_constraint_hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                                      Eigen::MatrixXd& hess) const = 0;

  virtual Eigen::MatrixXd eq_matrix() const { return Eigen::MatrixXd(0, num_vars()); }
  virtual Eigen::VectorXd eq_rhs() const { return Eigen::VectorXd(0); }
};

struct Options {
  double t0 = 1.0;
  double mu = 10.0;           ///< barrier parameter growth factor
  double gap_tol = 1e-8;      ///< stop once m / t falls below this
  double newton_tol = 1e-10;  ///< half squared Newton decrement
  double alpha = 0.25;        ///< Armijo fraction
  double beta = 0.5;          ///< backtracking factor
  int max_newton = 100;       ///< Newton steps per centering
  int max_outer = 60;

  /// Optional early exit, consulted after every centering.
  std::function<bool(const Eigen::VectorXd&)> stop;
};

struct HistoryEntry {
  double t = 0.0;
  double objective = 0.0;
  double gap = 0.0;  ///< m / t
  int newton_steps = 0;
};

enum class Status { optimal, max_iter };

struct Result {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;  ///< inequality multipliers -1 / (t g_i)
  Eigen::VectorXd nu;      ///< equality multipliers
  Status status = Status::max_iter;
  double objective = 0.0;
  double t = 0.0;
  int newton_steps = 0;
  bool early_exit = false;
  std::vector<HistoryEntry> history;
};

namespace detail {

inline bool strictly_feasible(const Program& p, const Eigen::VectorXd& x, Eigen::VectorXd& g) {
  if (!x.allFinite()) return false;
  p.constraints(x, g, nullptr);
  for (int i = 0; i < g.size(); ++i) {
    if (!(g(i) < 0.0)) return false;
  }
  return true;
}

inline double barrier_value(const Program& p, const Eigen::VectorXd& x, double t,
                            const Eigen::VectorXd& g) {
  const double f = p.objective(x, nullptr, nullptr);
  if (!std::isfinite(f)) return std::numeric_limits<double>::infinity();
  double phi = t * f;
  for (int i = 0; i < g.size(); ++i) phi -= std::log(-g(i));
  return phi;
}

/// Solves H dx = -r for a symmetric positive (semi)definite H, with Jacobi scaling.
inline Eigen::VectorXd spd_solve(const Eigen::MatrixXd& H, const Eigen::VectorXd& r) {
  const int n = static_cast<int>(H.rows());
  Eigen::VectorXd D(n);
  for (int i = 0; i < n; ++i) D(i) = H(i, i) > 0.0 ? 1.0 / std::sqrt(H(i, i)) : 1.0;
  const Eigen::MatrixXd Hs = D.asDiagonal() * H * D.asDiagonal();
  const Eigen::VectorXd rs = D.cwiseProduct(r);
  Eigen::LLT<Eigen::MatrixXd> llt(Hs);
  if (llt.info() == Eigen::Success) {
    Eigen::VectorXd z = llt.solve(-rs);
    if (z.allFinite()) return D.cwiseProduct(z);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Hs);
  Eigen::VectorXd z = ldlt.solve(-rs);
  if (ldlt.info() == Eigen::Success && z.allFinite()) return D.cwiseProduct(z);
  Eigen::MatrixXd Hr = Hs;
  Hr.diagonal().array() += 1e-12;
  return D.cwiseProduct(Eigen::LDLT<Eigen::MatrixXd>(Hr).solve(-rs));
}

/**
 * Newton direction restricted to {A dx = 0}. Z spans the null space of A
 * (empty Z means no equalities).
 */
inline Eigen::VectorXd newton_direction(const Eigen::MatrixXd& H, const Eigen::VectorXd& r,
                                        const Eigen::MatrixXd& Z, bool has_eq) {
  if (!has_eq) return spd_solve(H, r);
  if (Z.cols() == 0) return Eigen::VectorXd::Zero(H.rows());
  const Eigen::MatrixXd Hz = Z.transpose() * H * Z;
  const Eigen::VectorXd rz = Z.transpose() * r;
  return Z * spd_solve(Hz, rz);
}

/// H += J' diag(w) J, accumulating row by row over nonzeros when J is sparse.
inline void add_gram(const Eigen::MatrixXd& J, const Eigen::VectorXd& w, Eigen::MatrixXd& H) {
  const int m = static_cast<int>(J.rows());
  const int n = static_cast<int>(J.cols());
  std::vector<std::vector<int>> nz(m);
  double work = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      if (J(i, j) != 0.0) nz[i].push_back(j);
    }
    work += static_cast<double>(nz[i].size()) * static_cast<double>(nz[i].size());
  }
  if (work > 0.25 * m * static_cast<double>(n) * n) {
    H.noalias() += J.transpose() * w.asDiagonal() * J;
    return;
  }
  for (int i = 0; i < m; ++i) {
    const auto& idx = nz[i];
    for (int a : idx) {
      const double va = w(i) * J(i, a);
      for (int b : idx) H(a, b) += va * J(i, b);
    }
  }
}

/// Orthonormal basis of the null space of A.
inline Eigen::MatrixXd null_space(const Eigen::MatrixXd& A) {
  const int n = static_cast<int>(A.cols());
  if (A.rows() == 0) return Eigen::MatrixXd::Identity(n, n);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A.transpose());
  const int rank = static_cast<int>(qr.rank());
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return Q.rightCols(n - rank);
}

}  // namespace detail

/**
 * Log-barrier interior-point method with damped Newton centering.
 *
 * @param x0 strictly feasible start satisfying A x0 = b
 * @throws Error(invalid_argument) when x0 is not strictly feasible
 */
inline Result solve(const Program& p, const Eigen::VectorXd& x0, const Options& opt = {}) {
  const int n = p.num_vars();
  const int m = p.num_ineq();
  if (x0.size() != n) throw Error(ErrorKind::dimension_mismatch, "barrier start has wrong size");

  const Eigen::MatrixXd A = p.eq_matrix();
  const bool has_eq = A.rows() > 0;
  const Eigen::MatrixXd Z = has_eq ? detail::null_space(A) : Eigen::MatrixXd();
  Eigen::VectorXd g(m);
  if (!detail::strictly_feasible(p, x0, g)) {
    throw Error(ErrorKind::invalid_argument, "barrier start is not strictly feasible");
  }
  if (!std::isfinite(p.objective(x0, nullptr, nullptr))) {
    throw Error(ErrorKind::invalid_argument, "barrier start lies outside the objective domain");
  }

  Result res;
  Eigen::VectorXd x = x0;
  double t = opt.t0;
  double t_centered = t;
  Eigen::VectorXd grad(n), trial_g(m);
  Eigen::MatrixXd hess(n, n), jac(m, n);

  for (int outer = 0; outer < opt.max_outer; ++outer) {
    int steps = 0;
    for (; steps < opt.max_newton; ++steps) {
      hess.setZero();
      p.objective(x, &grad, &hess);
      p.constraints(x, g, &jac);
      const Eigen::VectorXd d = (-g).cwiseInverse();

      Eigen::VectorXd r = t * grad + jac.transpose() * d;
      Eigen::MatrixXd H = t * hess;
      detail::add_gram(jac, d.cwiseAbs2(), H);
      p.add_constraint_hessian(x, d, H);

      const Eigen::VectorXd dx = detail::newton_direction(H, r, Z, has_eq);
      const double dec = -r.dot(dx);
      if (!std::isfinite(dec) || dec * 0.5 <= opt.newton_tol) break;

      double s = 1.0;
      Eigen::VectorXd xt = x + dx;
      int guard = 0;
      while (!detail::strictly_feasible(p, xt, trial_g) ||
             !std::isfinite(p.objective(xt, nullptr, nullptr))) {
        s *= opt.beta;
        xt = x + s * dx;
        if (++guard > 200) break;
      }
      if (guard > 200) break;

      const double phi0 = detail::barrier_value(p, x, t, g);
      bool accepted = false;
      while (s > 1e-16) {
        if (detail::strictly_feasible(p, xt, trial_g)) {
          const double phi = detail::barrier_value(p, xt, t, trial_g);
          if (phi <= phi0 - opt.alpha * s * dec) {
            accepted = true;
            break;
          }
        }
        s *= opt.beta;
        xt = x + s * dx;
      }
      if (!accepted) break;  // numerically centered
      x = xt;
    }
    res.newton_steps += steps;

    p.constraints(x, g, nullptr);
    const double f = p.objective(x, nullptr, nullptr);
    res.history.push_back({t, f, m / t, steps});
    t_centered = t;

    if (opt.stop && opt.stop(x)) {
      res.early_exit = true;
      res.status = Status::optimal;
      break;
    }
    if (m == 0 || m / t <= opt.gap_tol) {
      res.status = Status::optimal;
      break;
    }
    t *= opt.mu;
  }

  p.constraints(x, g, &jac);
  res.x = x;
  res.t = t_centered;
  res.objective = p.objective(x, &grad, nullptr);
  res.lambda = (-t_centered * g).cwiseInverse();
  if (A.rows() > 0) {
    const Eigen::VectorXd rhs = -(grad + jac.transpose() * res.lambda);
    res.nu = A.transpose().colPivHouseholderQr().solve(rhs);
  } else {
    res.nu.resize(0);
  }
  return res;
}

struct Phase1Options {
  double prox_weight = 1e-8;  ///< keeps the margin problem bounded in x
  double margin_cap = 1.0;    ///< the margin is not pushed beyond this value
  /// Stop as soon as the margin exceeds this value (inf = full maximisation).
  double target_margin = std::numeric_limits<double>::infinity();
  Options barrier;
};

struct Phase1Result {
  Eigen::VectorXd x;
  double margin = -std::numeric_limits<double>::infinity();
  bool strictly_feasible = false;
};

namespace detail {

/// Margin maximisation: min s + w ||x - x0||^2 s.t. g_i(x) <= s, s >= -cap.
class Phase1Program : public Program {
 public:
  Phase1Program(const Program& base, const Eigen::VectorXd& anchor, double weight, double cap)
      : base_(base), anchor_(anchor), weight_(weight), cap_(cap) {}

  int num_vars() const override { return base_.num_vars() + 1; }
  int num_ineq() const override { return base_.num_ineq() + 1; }

  double objective(const Eigen::VectorXd& z, Eigen::VectorXd* grad,
                   Eigen::MatrixXd* hess) const override {
    const int n = base_.num_vars();
    const Eigen::VectorXd diff = z.head(n) - anchor_;
    if (grad) {
      grad->setZero(n + 1);
      grad->head(n) = 2.0 * weight_ * diff;
      (*grad)(n) = 1.0;
    }
    if (hess) hess->diagonal().head(n).array() += 2.0 * weight_;
    return z(n) + weight_ * diff.squaredNorm();
  }

  void constraints(const Eigen::VectorXd& z, Eigen::VectorXd& g,
                   Eigen::MatrixXd* jac) const override {
    const int n = base_.num_vars();
    const int m = base_.num_ineq();
    Eigen::VectorXd gb(m);
    Eigen::MatrixXd jb;
    if (jac) jb.resize(m, n);
    base_.constraints(z.head(n), gb, jac ? &jb : nullptr);
    g.resize(m + 1);
    g.head(m) = gb.array() - z(n);
    g(m) = -cap_ - z(n);
    if (jac) {
      jac->setZero(m + 1, n + 1);
      jac->topLeftCorner(m, n) = jb;
      jac->col(n).head(m).setConstant(-1.0);
      (*jac)(m, n) = -1.0;
    }
  }

  void add_constraint_hessian(const Eigen::VectorXd& z, const Eigen::VectorXd& w,
                              Eigen::MatrixXd& hess) const override {
    const int n = base_.num_vars();
    Eigen::MatrixXd hb = Eigen::MatrixXd::Zero(n, n);
    base_.add_constraint_hessian(z.head(n), w.head(base_.num_ineq()), hb);
    hess.topLeftCorner(n, n) += hb;
  }

  Eigen::MatrixXd eq_matrix() const override {
    const Eigen::MatrixXd A = base_.eq_matrix();
    Eigen::MatrixXd Az = Eigen::MatrixXd::Zero(A.rows(), A.cols() + 1);
    Az.leftCols(A.cols()) = A;
    return Az;
  }
  Eigen::VectorXd eq_rhs() const override { return base_.eq_rhs(); }

 private:
  const Program& base_;
  Eigen::VectorXd anchor_;
  double weight_;
  double cap_;
};

}  // namespace detail

/**
 * Finds a point that maximises the smallest constraint slack. The start is
 * first projected onto {A x = b}. A positive margin certifies strict
 * feasibility; a negative one certifies that no feasible point exists (up to
 * the barrier tolerance).
 */
inline Phase1Result phase1(const Program& p, const Eigen::VectorXd& x_start,
                           const Phase1Options& opt = {}) {
  const int n = p.num_vars();
  const int m = p.num_ineq();
  Phase1Result out;
  Eigen::VectorXd x0 = x_start;
  const Eigen::MatrixXd A = p.eq_matrix();
  if (A.rows() > 0) {
    const Eigen::VectorXd resid = p.eq_rhs() - A * x0;
    const Eigen::VectorXd corr = A.completeOrthogonalDecomposition().solve(resid);
    x0 += corr;
    if ((A * x0 - p.eq_rhs()).cwiseAbs().maxCoeff() >
        1e-9 * std::max(1.0, p.eq_rhs().cwiseAbs().maxCoeff())) {
      out.x = x0;
      return out;  // inconsistent equalities
    }
  }

  Eigen::VectorXd g(m);
  p.constraints(x0, g, nullptr);
  const double worst = m > 0 ? g.maxCoeff() : -opt.margin_cap;
  if (!std::isfinite(worst)) {
    out.x = x0;
    return out;
  }
  if (-worst >= opt.target_margin || m == 0) {
    out.x = x0;
    out.margin = -worst;
    out.strictly_feasible = out.margin > 0.0;
    return out;
  }

  detail::Phase1Program prog(p, x0, opt.prox_weight, opt.margin_cap);
  Eigen::VectorXd z(n + 1);
  z.head(n) = x0;
  z(n) = std::max(worst, -opt.margin_cap) + 1.0;

  Options bopt = opt.barrier;
  const double target = opt.target_margin;
  if (std::isfinite(target)) {
    bopt.stop = [n, target](const Eigen::VectorXd& zz) { return -zz(n) >= target; };
  }
  const Result r = solve(prog, z, bopt);
  out.x = r.x.head(n);
  p.constraints(out.x, g, nullptr);
  out.margin = -g.maxCoeff();
  out.strictly_feasible = out.margin > 0.0;
  return out;
}

}  // namespace uavmec::barrier
