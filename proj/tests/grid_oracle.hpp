#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "uavmec/qcqp.hpp"

namespace testing_fixtures {

using uavmec::qcqp::QcqpProblem;
using uavmec::qcqp::Quadratic;

/**
 * Brute-force reference minimiser for small inequality-constrained QCQPs.
 *
 * The constraints are folded into the smooth surrogate
 * f(x) - (1/t) sum log(-g_i(x)) and t is raised tenfold per stage up to t_max,
 * so the result is within m / t_max of the optimum. Each stage is a grid
 * refinement: the 2 dim points x +- h b_i along the columns of an orthonormal
 * basis B are evaluated, the best one becomes the new centre and h doubles, or
 * h is halved when the centre is already best. Once h drops below h_min the
 * stage restarts from the incumbent with a fresh random orthonormal B, until a
 * restart brings no improvement. Starts from a strictly feasible x0.
 */
struct GridOptions {
  double h0 = 1.0;
  double h_min = 1e-8;
  double t_max = 1e6;
  int max_restarts = 20;
  unsigned seed = 1;
};

struct GridResult {
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::infinity();  ///< true objective at x
  long evaluations = 0;
};

inline GridResult grid_refine(const QcqpProblem& p, const Eigen::VectorXd& x0, const GridOptions& opt = {}) {
  const int d = p.dim;
  std::mt19937 rng(opt.seed);
  std::normal_distribution<double> N01(0.0, 1.0);
  GridResult r;
  r.x = x0;
  Eigen::VectorXd y(d);
  for (double t = 1.0; t <= opt.t_max * (1.0 + 1e-12); t *= 10.0) {
    auto phi = [&](const Eigen::VectorXd& x) {
      double b = 0.0;
      for (const Quadratic& q : p.ineq) {
        const double g = q.value(x);
        if (!(g < 0.0)) return std::numeric_limits<double>::infinity();
        b -= std::log(-g);
      }
      return p.objective.value(x) + b / t;
    };
    double f_cur = phi(r.x);
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(d, d);
    double h = opt.h0;
    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
      const double f_start = f_cur;
      while (h > opt.h_min) {
        Eigen::VectorXd best = r.x;
        double f_best = f_cur;
        for (int i = 0; i < d; ++i) {
          for (int sgn = -1; sgn <= 1; sgn += 2) {
            y.noalias() = r.x + (sgn * h) * B.col(i);
            ++r.evaluations;
            const double f = phi(y);
            if (f < f_best) {
              f_best = f;
              best = y;
            }
          }
        }
        if (f_best < f_cur) {
          r.x = best;
          f_cur = f_best;
          h = std::min(2.0 * h, opt.h0);
        } else {
          h *= 0.5;
        }
      }
      if (restart > 0 && !(f_cur < f_start)) break;
      const Eigen::MatrixXd G = Eigen::MatrixXd::NullaryExpr(d, d, [&] { return N01(rng); });
      B = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ() * Eigen::MatrixXd::Identity(d, d);
      h = 1e-3 * opt.h0;
    }
  }
  r.objective = p.objective.value(r.x);
  return r;
}

/**
 * Random convex instance: PSD objective, `m` random ellipsoidal constraints
 * and one bounding ball, all strictly satisfied at the origin.
 */
inline QcqpProblem random_qcqp(int dim, int m, std::mt19937& rng, double box = 3.0) {
  std::normal_distribution<double> N01(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  QcqpProblem p;
  p.dim = dim;
  const Eigen::MatrixXd G = Eigen::MatrixXd::NullaryExpr(dim, dim, [&] { return N01(rng); });
  p.objective.Q = G * G.transpose() / dim + 0.1 * Eigen::MatrixXd::Identity(dim, dim);
  p.objective.c = Eigen::VectorXd::NullaryExpr(dim, [&] { return 4.0 * N01(rng); });
  p.objective.d = 0.0;
  for (int i = 0; i < m; ++i) {
    const Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(dim, dim, [&] { return N01(rng); });
    Quadratic q;
    q.Q = B * B.transpose() / dim + Eigen::MatrixXd::Identity(dim, dim) * (2.0 / (box * box));
    q.c = Eigen::VectorXd::NullaryExpr(dim, [&] { return 0.5 * N01(rng); });
    q.d = -(0.2 + U(rng));
    p.ineq.push_back(q);
  }
  // The ball of radius `box` keeps the feasible set inside the box.
  Quadratic ball;
  ball.Q = Eigen::MatrixXd::Identity(dim, dim) * (2.0 / (box * box));
  ball.c = Eigen::VectorXd::Zero(dim);
  ball.d = -1.0;
  p.ineq.push_back(ball);
  p.A.resize(0, dim);
  p.b.resize(0);
  return p;
}

}  // namespace testing_fixtures
