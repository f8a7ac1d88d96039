#pragma once

// Slow, independent reference solvers used only by tests. They share no code
// path with the production solver: coordinate descent on the exact nonsmooth
// objective (lasso + ridge, Theta = R^p) and the ridge closed form.

#include <cmath>

#include "lorisk/common.hpp"
#include "lorisk/model.hpp"

namespace lorisk::reference {

// Minimize g(t) = sum_i l(y_i, c_i + x_ij t) + a |t| + b t^2 over t, where
// l is convex in its second argument. Solved by bisection on the subgradient
// condition; at t = 0 the minimum requires |sum_i x_ij l'(y_i, c_i)| <= a.
inline double coordinate_minimize(const LossFamily& loss, const Vector& y,
                                  const Vector& c, const Vector& xj, double a,
                                  double b, double bracket = 1e3,
                                  double tol = 1e-14) {
  auto smooth_grad = [&](double t) {
    double g = 2.0 * b * t;
    for (int i = 0; i < y.size(); ++i)
      g += xj[i] * loss.grad(y[i], c[i] + xj[i] * t);
    return g;
  };
  double g0 = smooth_grad(0.0);
  if (std::abs(g0) <= a) return 0.0;
  // optimal t has sign opposite to g0; on that side subgradient is
  // smooth_grad(t) + sign(t) * a, monotone in t
  double sgn = g0 > 0.0 ? -1.0 : 1.0;
  auto total_grad = [&](double t) { return smooth_grad(t) + sgn * a; };
  double lo = 0.0, hi = sgn * bracket;
  // expand bracket until the subgradient changes sign at hi
  for (int k = 0; k < 60 && total_grad(hi) * sgn < 0.0; ++k) hi *= 2.0;
  for (int k = 0; k < 200; ++k) {
    double mid = 0.5 * (lo + hi);
    if (total_grad(mid) * sgn < 0.0)
      lo = mid;
    else
      hi = mid;
    if (std::abs(hi - lo) < tol * (1.0 + std::abs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

// Exact minimizer of sum_i l(y_i, x_i^T beta) + lambda(1-eta)||beta||_1
// + lambda eta ||beta||^2 over R^p by cyclic coordinate descent.
inline Vector coordinate_descent_lasso(const LossFamily& loss, const Matrix& X,
                                       const Vector& y, double lambda,
                                       double eta, int max_sweeps = 100000,
                                       double tol = 1e-12, int exclude = -1) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  const double a = lambda * (1.0 - eta);
  const double b = lambda * eta;
  Vector yy = y;
  Matrix XX = X;
  if (exclude >= 0) {
    // drop the excluded row entirely
    Matrix Xs(n - 1, p);
    Vector ys(n - 1);
    int r = 0;
    for (int i = 0; i < n; ++i) {
      if (i == exclude) continue;
      Xs.row(r) = X.row(i);
      ys[r] = y[i];
      ++r;
    }
    XX = Xs;
    yy = ys;
  }
  Vector beta = Vector::Zero(p);
  Vector z = Vector::Zero(XX.rows());
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < p; ++j) {
      Vector c = z - XX.col(j) * beta[j];
      double t = coordinate_minimize(loss, yy, c, XX.col(j), a, b);
      max_change = std::max(max_change, std::abs(t - beta[j]));
      z = c + XX.col(j) * t;
      beta[j] = t;
    }
    if (max_change < tol) return beta;
  }
  throw NonConvergence("coordinate_descent_lasso: sweep cap reached", -1.0);
}

// Closed form for squared loss with pure ridge penalty lambda ||beta||^2:
// beta = (X^T X + 2 lambda I)^{-1} X^T y  (loss is 1/2 sum (y - x^T b)^2).
inline Vector ridge_closed_form(const Matrix& X, const Vector& y,
                                double lambda) {
  const int p = static_cast<int>(X.cols());
  Matrix A = X.transpose() * X + 2.0 * lambda * Matrix::Identity(p, p);
  return A.ldlt().solve(X.transpose() * y);
}

}  // namespace lorisk::reference
