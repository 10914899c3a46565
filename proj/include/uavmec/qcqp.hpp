#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uavmec/barrier.hpp"
#include "uavmec/core.hpp"

namespace uavmec::qcqp {

/// q(x) = 0.5 x' Q x + c' x + d
struct Quadratic {
  Eigen::MatrixXd Q;
  Eigen::VectorXd c;
  double d = 0.0;

  double value(const Eigen::VectorXd& x) const { return 0.5 * x.dot(Q * x) + c.dot(x) + d; }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return Q * x + c; }
};

/**
 * Dense convex QCQP
 *
 *     minimize q_0(x)  subject to  q_i(x) <= 0,  A x = b
 *
 * with every Q symmetric positive semidefinite.
 */
struct QcqpProblem {
  int dim = 0;
  Quadratic objective;
  std::vector<Quadratic> ineq;
  Eigen::MatrixXd A;  ///< p x dim (p may be zero)
  Eigen::VectorXd b;
};

/// Throws Error(invalid_argument / dimension_mismatch) on malformed or nonconvex data.
inline void validate(const QcqpProblem& p) {
  if (p.dim <= 0) throw Error(ErrorKind::invalid_argument, "qcqp: dimension must be positive");
  auto check = [&](const Quadratic& q, const std::string& name) {
    if (q.Q.rows() != p.dim || q.Q.cols() != p.dim || q.c.size() != p.dim) {
      throw Error(ErrorKind::dimension_mismatch, "qcqp: " + name + " has wrong dimensions");
    }
    if (!q.Q.allFinite() || !q.c.allFinite() || !std::isfinite(q.d)) {
      throw Error(ErrorKind::invalid_argument, "qcqp: " + name + " has non-finite entries");
    }
    const double scale = std::max(1.0, q.Q.cwiseAbs().maxCoeff());
    if ((q.Q - q.Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw Error(ErrorKind::invalid_argument, "qcqp: " + name + " matrix is not symmetric");
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(q.Q);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < -1e-10 * scale) {
      throw Error(ErrorKind::invalid_argument, "qcqp: " + name + " matrix is not positive semidefinite");
    }
  };
  check(p.objective, "objective");
  for (std::size_t i = 0; i < p.ineq.size(); ++i) check(p.ineq[i], "constraint " + std::to_string(i));
  if (p.A.rows() > 0 && p.A.cols() != p.dim) {
    throw Error(ErrorKind::dimension_mismatch, "qcqp: equality matrix has wrong column count");
  }
  if (p.A.rows() != p.b.size()) {
    throw Error(ErrorKind::dimension_mismatch, "qcqp: equality right-hand side has wrong size");
  }
}

enum class QcqpStatus { optimal, max_iter, infeasible };

inline const char* to_string(QcqpStatus s) {
  switch (s) {
    case QcqpStatus::optimal:
      return "optimal";
    case QcqpStatus::max_iter:
      return "max-iter";
    case QcqpStatus::infeasible:
      return "infeasible";
  }
  return "unknown";
}

struct KktResiduals {
  double stationarity = 0.0;    ///< |grad L|_inf / max(1, |grad f|_inf)
  double primal = 0.0;          ///< worst constraint violation
  double dual = 0.0;            ///< worst multiplier negativity
  double complementarity = 0.0; ///< max |lambda_i g_i|

  double max() const { return std::max({stationarity, primal, dual, complementarity}); }
};

/// Recomputes the four KKT residuals from a primal-dual pair.
inline KktResiduals kkt_residuals(const QcqpProblem& p, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& lambdas, const Eigen::VectorXd& nus) {
  KktResiduals r;
  const Eigen::VectorXd gf = p.objective.gradient(x);
  Eigen::VectorXd gl = gf;
  for (std::size_t i = 0; i < p.ineq.size(); ++i) {
    const double gi = p.ineq[i].value(x);
    gl += lambdas(i) * p.ineq[i].gradient(x);
    r.primal = std::max(r.primal, gi);
    r.dual = std::max(r.dual, -lambdas(i));
    r.complementarity = std::max(r.complementarity, std::abs(lambdas(i) * gi));
  }
  if (p.A.rows() > 0) {
    gl += p.A.transpose() * nus;
    r.primal = std::max(r.primal, (p.A * x - p.b).cwiseAbs().maxCoeff());
  }
  const double scale = std::max(1.0, gf.size() ? gf.cwiseAbs().maxCoeff() : 0.0);
  r.stationarity = gl.size() ? gl.cwiseAbs().maxCoeff() / scale : 0.0;
  return r;
}

struct Phase1Result {
  Eigen::VectorXd x;
  double margin = -std::numeric_limits<double>::infinity();
  bool strictly_feasible = false;
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 100;             ///< barrier outer iterations
  const Eigen::VectorXd* start = nullptr;  ///< optional initial guess
  double phase1_target = 1e-4;    ///< stop phase 1 once this margin is reached
};

struct QcqpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd lambdas;
  Eigen::VectorXd nus_eq;
  QcqpStatus status = QcqpStatus::max_iter;
  KktResiduals kkt;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double phase1_margin = 0.0;
  int newton_steps = 0;
  std::vector<barrier::HistoryEntry> history;
};

namespace detail {

/// Nonzero pattern of a quadratic, used for cheap evaluation.
struct Compact {
  std::vector<int> r, c;
  std::vector<double> v;
  std::vector<int> li;
  std::vector<double> lv;
  double d = 0.0;

  explicit Compact(const Quadratic& q) : d(q.d) {
    for (int j = 0; j < q.Q.cols(); ++j) {
      for (int i = 0; i < q.Q.rows(); ++i) {
        if (q.Q(i, j) != 0.0) {
          r.push_back(i);
          c.push_back(j);
          v.push_back(q.Q(i, j));
        }
      }
    }
    for (int i = 0; i < q.c.size(); ++i) {
      if (q.c(i) != 0.0) {
        li.push_back(i);
        lv.push_back(q.c(i));
      }
    }
  }

  double value(const Eigen::VectorXd& x) const {
    double s = 0.0;
    for (std::size_t e = 0; e < v.size(); ++e) s += v[e] * x(r[e]) * x(c[e]);
    double l = 0.0;
    for (std::size_t e = 0; e < lv.size(); ++e) l += lv[e] * x(li[e]);
    return 0.5 * s + l + d;
  }

  template <class Row>
  void gradient(const Eigen::VectorXd& x, Row out) const {
    out.setZero();
    for (std::size_t e = 0; e < v.size(); ++e) out(r[e]) += v[e] * x(c[e]);
    for (std::size_t e = 0; e < lv.size(); ++e) out(li[e]) += lv[e];
  }

  void add_hessian(double w, Eigen::MatrixXd& H) const {
    for (std::size_t e = 0; e < v.size(); ++e) H(r[e], c[e]) += w * v[e];
  }
};

class Adapter : public barrier::Program {
 public:
  explicit Adapter(const QcqpProblem& p) : p_(p), obj_(p.objective) {
    rows_.reserve(p.ineq.size());
    for (const auto& q : p.ineq) rows_.emplace_back(q);
  }

  int num_vars() const override { return p_.dim; }
  int num_ineq() const override { return static_cast<int>(rows_.size()); }

  double objective(const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                   Eigen::MatrixXd* hess) const override {
    if (grad) {
      grad->resize(p_.dim);
      obj_.gradient(x, grad->col(0));
    }
    if (hess) obj_.add_hessian(1.0, *hess);
    return obj_.value(x);
  }

  void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& g,
                   Eigen::MatrixXd* jac) const override {
    g.resize(num_ineq());
    if (jac) jac->resize(num_ineq(), p_.dim);
    for (int i = 0; i < num_ineq(); ++i) {
      g(i) = rows_[i].value(x);
      if (jac) rows_[i].gradient(x, jac->row(i).transpose());
    }
  }

  void add_constraint_hessian(const Eigen::VectorXd&, const Eigen::VectorXd& w,
                              Eigen::MatrixXd& hess) const override {
    for (int i = 0; i < num_ineq(); ++i) rows_[i].add_hessian(w(i), hess);
  }

  Eigen::MatrixXd eq_matrix() const override {
    return p_.A.rows() > 0 ? p_.A : Eigen::MatrixXd(0, p_.dim);
  }
  Eigen::VectorXd eq_rhs() const override { return p_.A.rows() > 0 ? p_.b : Eigen::VectorXd(0); }

 private:
  const QcqpProblem& p_;
  Compact obj_;
  std::vector<Compact> rows_;
};

/// Equalities that each fix one coordinate, with the fixed values.
struct Pinning {
  bool applicable = false;
  std::vector<int> free_idx;
  std::vector<int> pinned_idx;
  std::vector<int> pin_row;  ///< equality row owning each pinned coordinate
  Eigen::VectorXd pinned_val;
};

inline Pinning detect_pins(const QcqpProblem& p) {
  Pinning pin;
  if (p.A.rows() == 0) return pin;
  std::vector<int> owner(p.dim, -1);
  std::vector<double> val(p.dim, 0.0);
  for (int i = 0; i < p.A.rows(); ++i) {
    int col = -1;
    int nnz = 0;
    for (int j = 0; j < p.dim; ++j) {
      if (p.A(i, j) != 0.0) {
        col = j;
        ++nnz;
      }
    }
    if (nnz != 1 || owner[col] != -1) return pin;
    owner[col] = i;
    val[col] = p.b(i) / p.A(i, col);
  }
  pin.applicable = true;
  for (int j = 0; j < p.dim; ++j) {
    if (owner[j] == -1) {
      pin.free_idx.push_back(j);
    } else {
      pin.pinned_idx.push_back(j);
      pin.pin_row.push_back(owner[j]);
    }
  }
  pin.pinned_val.resize(static_cast<int>(pin.pinned_idx.size()));
  for (std::size_t e = 0; e < pin.pinned_idx.size(); ++e) pin.pinned_val(e) = val[pin.pinned_idx[e]];
  return pin;
}

inline Quadratic restrict(const Quadratic& q, const Pinning& pin) {
  const int nf = static_cast<int>(pin.free_idx.size());
  const int np = static_cast<int>(pin.pinned_idx.size());
  Quadratic r;
  r.Q.resize(nf, nf);
  r.c.resize(nf);
  for (int a = 0; a < nf; ++a) {
    const int ia = pin.free_idx[a];
    for (int b = 0; b < nf; ++b) r.Q(a, b) = q.Q(ia, pin.free_idx[b]);
    double cross = 0.0;
    for (int e = 0; e < np; ++e) cross += q.Q(ia, pin.pinned_idx[e]) * pin.pinned_val(e);
    r.c(a) = q.c(ia) + cross;
  }
  r.d = q.d;
  for (int e = 0; e < np; ++e) {
    const int ie = pin.pinned_idx[e];
    r.d += q.c(ie) * pin.pinned_val(e);
    for (int f = 0; f < np; ++f) {
      r.d += 0.5 * pin.pinned_val(e) * q.Q(ie, pin.pinned_idx[f]) * pin.pinned_val(f);
    }
  }
  return r;
}

inline QcqpProblem reduce(const QcqpProblem& p, const Pinning& pin) {
  QcqpProblem r;
  r.dim = static_cast<int>(pin.free_idx.size());
  r.objective = restrict(p.objective, pin);
  r.ineq.reserve(p.ineq.size());
  for (const auto& q : p.ineq) r.ineq.push_back(restrict(q, pin));
  r.A.resize(0, r.dim);
  r.b.resize(0);
  return r;
}

inline Eigen::VectorXd expand(const Eigen::VectorXd& z, const Pinning& pin, int dim) {
  Eigen::VectorXd x(dim);
  for (std::size_t a = 0; a < pin.free_idx.size(); ++a) x(pin.free_idx[a]) = z(a);
  for (std::size_t e = 0; e < pin.pinned_idx.size(); ++e) x(pin.pinned_idx[e]) = pin.pinned_val(e);
  return x;
}

}  // namespace detail

namespace detail {

/**
 * Re-fits the multipliers of the constraints that carry weight, and of the
 * equalities, by least squares on the stationarity condition at the final
 * point. The fit is kept only when it is nonnegative and lowers the worst KKT
 * residual.
 */
inline void polish_multipliers(const QcqpProblem& p, QcqpSolution& sol) {
  const int m = static_cast<int>(p.ineq.size());
  const int q = static_cast<int>(p.A.rows());
  if (m == 0 && q == 0) return;
  const double lmax = m ? sol.lambdas.cwiseAbs().maxCoeff() : 0.0;
  std::vector<int> S;
  Eigen::VectorXd rhs = -p.objective.gradient(sol.x);
  for (int i = 0; i < m; ++i) {
    if (sol.lambdas(i) >= 1e-8 * std::max(1.0, lmax)) {
      S.push_back(i);
    } else {
      rhs -= sol.lambdas(i) * p.ineq[i].gradient(sol.x);
    }
  }
  const int k = static_cast<int>(S.size());
  if (k + q == 0) return;
  Eigen::MatrixXd M(p.dim, k + q);
  for (int a = 0; a < k; ++a) M.col(a) = p.ineq[S[a]].gradient(sol.x);
  if (q) M.rightCols(q) = p.A.transpose();
  const Eigen::VectorXd z = M.colPivHouseholderQr().solve(rhs);
  if (!z.allFinite() || (k && z.head(k).minCoeff() < 0.0)) return;
  Eigen::VectorXd lambdas = sol.lambdas;
  for (int a = 0; a < k; ++a) lambdas(S[a]) = z(a);
  const Eigen::VectorXd nus = q ? Eigen::VectorXd(z.tail(q)) : sol.nus_eq;
  const KktResiduals r = kkt_residuals(p, sol.x, lambdas, nus);
  if (r.max() < sol.kkt.max()) {
    sol.lambdas = lambdas;
    sol.nus_eq = nus;
    sol.kkt = r;
  }
}

}  // namespace detail

/**
 * Maximises the smallest slack over {A x = b}. `start` (optional) seeds the
 * search; with no start the origin is used.
 */
inline Phase1Result phase1(const QcqpProblem& p, const Eigen::VectorXd* start = nullptr,
                           double target_margin = std::numeric_limits<double>::infinity()) {
  validate(p);
  detail::Adapter ad(p);
  barrier::Phase1Options opt;
  opt.target_margin = target_margin;
  opt.barrier.gap_tol = 1e-10;
  const Eigen::VectorXd x0 = start ? *start : Eigen::VectorXd::Zero(p.dim);
  const barrier::Phase1Result r = barrier::phase1(ad, x0, opt);
  return {r.x, r.margin, r.strictly_feasible};
}

/**
 * Solves a convex QCQP by the logarithmic-barrier method. Coordinates fixed by
 * single-entry equality rows are substituted out; other equalities are handled
 * by bordering the Newton system.
 */
inline QcqpSolution solve(const QcqpProblem& p, const SolveOptions& opt) {
  validate(p);
  QcqpSolution sol;

  const detail::Pinning pin = detail::detect_pins(p);
  const QcqpProblem red = pin.applicable ? detail::reduce(p, pin) : QcqpProblem{};
  const QcqpProblem& work = pin.applicable ? red : p;

  if (work.dim == 0) {
    sol.x = detail::expand(Eigen::VectorXd(0), pin, p.dim);
    sol.lambdas = Eigen::VectorXd::Zero(static_cast<int>(p.ineq.size()));
    sol.nus_eq = Eigen::VectorXd::Zero(p.A.rows());
    double worst = 0.0;
    for (const auto& q : p.ineq) worst = std::max(worst, q.value(sol.x));
    sol.status = worst > 0.0 ? QcqpStatus::infeasible : QcqpStatus::optimal;
    sol.objective = p.objective.value(sol.x);
    sol.kkt = kkt_residuals(p, sol.x, sol.lambdas, sol.nus_eq);
    return sol;
  }

  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(work.dim);
  if (opt.start) {
    if (opt.start->size() != p.dim) throw Error(ErrorKind::dimension_mismatch, "qcqp: start has wrong size");
    if (pin.applicable) {
      for (std::size_t a = 0; a < pin.free_idx.size(); ++a) z0(a) = (*opt.start)(pin.free_idx[a]);
    } else {
      z0 = *opt.start;
    }
  }

  Phase1Result ph;
  bool start_inside = true;
  for (const auto& q : work.ineq) start_inside = start_inside && q.value(z0) < 0.0;
  if (start_inside && work.A.rows() == 0) {
    ph.x = z0;
    ph.strictly_feasible = true;
    ph.margin = std::numeric_limits<double>::infinity();
    for (const auto& q : work.ineq) ph.margin = std::min(ph.margin, -q.value(z0));
  } else {
    ph = phase1(work, &z0, opt.phase1_target);
  }
  sol.phase1_margin = ph.margin;
  if (!ph.strictly_feasible) {
    sol.status = QcqpStatus::infeasible;
    sol.x = pin.applicable ? detail::expand(ph.x, pin, p.dim) : ph.x;
    sol.lambdas = Eigen::VectorXd::Zero(static_cast<int>(p.ineq.size()));
    sol.nus_eq = Eigen::VectorXd::Zero(p.A.rows());
    sol.kkt = kkt_residuals(p, sol.x, sol.lambdas, sol.nus_eq);
    return sol;
  }

  detail::Adapter ad(work);
  barrier::Options bopt;
  bopt.gap_tol = 0.1 * opt.tol;
  bopt.max_outer = opt.max_iter;
  const barrier::Result br = barrier::solve(ad, ph.x, bopt);

  sol.history = br.history;
  sol.newton_steps = br.newton_steps;
  sol.lambdas = br.lambda;
  if (pin.applicable) {
    sol.x = detail::expand(br.x, pin, p.dim);
    // Multipliers of the pinning rows follow from stationarity in the pinned coordinates.
    Eigen::VectorXd gl = p.objective.gradient(sol.x);
    for (std::size_t i = 0; i < p.ineq.size(); ++i) gl += sol.lambdas(i) * p.ineq[i].gradient(sol.x);
    sol.nus_eq = Eigen::VectorXd::Zero(p.A.rows());
    for (std::size_t e = 0; e < pin.pinned_idx.size(); ++e) {
      const int j = pin.pinned_idx[e];
      const int row = pin.pin_row[e];
      sol.nus_eq(row) = -gl(j) / p.A(row, j);
    }
  } else {
    sol.x = br.x;
    sol.nus_eq = br.nu;
  }
  sol.objective = p.objective.value(sol.x);
  sol.kkt = kkt_residuals(p, sol.x, sol.lambdas, sol.nus_eq);
  detail::polish_multipliers(p, sol);
  const bool converged = br.status == barrier::Status::optimal;
  sol.status = converged && sol.kkt.max() <= opt.tol ? QcqpStatus::optimal : QcqpStatus::max_iter;
  return sol;
}

inline QcqpSolution solve(const QcqpProblem& p, double tol = 1e-8, int max_iter = 100) {
  SolveOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return solve(p, opt);
}

/// Plain-text dump of every (Q, c, d) triple and the equality block.
inline void write_debug(std::ostream& os, const QcqpProblem& p) {
  const auto old = os.precision(17);
  auto dump = [&](const Quadratic& q, const std::string& tag) {
    os << tag << "\nQ " << q.Q.rows() << ' ' << q.Q.cols() << '\n';
    for (int i = 0; i < q.Q.rows(); ++i) {
      for (int j = 0; j < q.Q.cols(); ++j) os << (j ? " " : "") << q.Q(i, j);
      os << '\n';
    }
    os << "c " << q.c.size() << '\n';
    for (int i = 0; i < q.c.size(); ++i) os << (i ? " " : "") << q.c(i);
    os << "\nd " << q.d << '\n';
  };
  os << "qcqp dim " << p.dim << " ineq " << p.ineq.size() << " eq " << p.A.rows() << '\n';
  dump(p.objective, "objective");
  for (std::size_t i = 0; i < p.ineq.size(); ++i) dump(p.ineq[i], "ineq " + std::to_string(i));
  if (p.A.rows() > 0) {
    os << "A " << p.A.rows() << ' ' << p.A.cols() << '\n';
    for (int i = 0; i < p.A.rows(); ++i) {
      for (int j = 0; j < p.A.cols(); ++j) os << (j ? " " : "") << p.A(i, j);
      os << '\n';
    }
    os << "b " << p.b.size() << '\n';
    for (int i = 0; i < p.b.size(); ++i) os << (i ? " " : "") << p.b(i);
    os << '\n';
  }
  os.precision(old);
}

}  // namespace uavmec::qcqp
