#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "lorisk/common.hpp"
#include "lorisk/model.hpp"
#include "lorisk/parallel.hpp"
#include "lorisk/penalty.hpp"

namespace lorisk {

enum class StepRule { FixedInverseLipschitz, BacktrackingArmijo };

struct SolverConfig {
  int max_iters = 200000;
  double tol = 1e-8;  // fixed-point residual ||beta - P(beta - grad)||
  StepRule step_rule = StepRule::BacktrackingArmijo;
  bool acceleration = true;
  // smoothing continuation: alpha0 * growth^k up to alpha_max
  double alpha0 = 100.0;
  double alpha_max = 100.0;
  double alpha_growth = 4.0;

  void validate() const {
    if (tol <= 0.0) throw DomainError("solver tol must be positive");
    if (max_iters < 1) throw DomainError("solver max_iters must be >= 1");
    if (alpha0 <= 0.0 || alpha_max < alpha0 || alpha_growth <= 1.0)
      throw DomainError("invalid alpha schedule");
  }

  std::vector<double> alpha_schedule() const {
    std::vector<double> alphas{alpha0};
    while (alphas.back() < alpha_max) {
      double next = std::min(alphas.back() * alpha_growth, alpha_max);
      alphas.push_back(next);
    }
    return alphas;
  }
};

struct FitResult {
  Vector beta_hat;
  double objective = 0.0;    // exact (unsmoothed) objective at beta_hat
  double fp_residual = 0.0;  // ||beta - P(beta - grad h^alpha(beta))||
  int iters = 0;
  bool converged = false;
  double alpha_used = 0.0;
};

struct LooFits {
  FitResult full;
  std::vector<FitResult> per_i;
  bool warm_start_used = true;
};

// h(beta) = sum_j l_j(beta) + lambda (1-eta) r0(beta) + lambda eta beta^T beta,
// optionally with r0 replaced by its smoothed version.
inline double objective(const ModelSpec& model, const PenaltySpec& penalty,
                        const Dataset& data, const Vector& beta, bool smoothed,
                        double alpha, int exclude = -1) {
  if (beta.size() != model.p) throw ShapeError("objective: beta length mismatch");
  Vector z = data.X * beta;
  double acc = 0.0;
  for (int i = 0; i < model.n; ++i) {
    if (i == exclude) continue;
    acc += model.loss.value(data.y[i], z[i]);
  }
  double r0v;
  if (smoothed) {
    r0v = penalty.make_smoothed(alpha).value(beta);
  } else {
    r0v = eval_r0(penalty.r0, beta);
  }
  return acc + penalty.lambda * (1.0 - penalty.eta) * r0v +
         penalty.lambda * penalty.eta * beta.squaredNorm();
}

namespace detail {

// largest eigenvalue of X^T W X via power iteration (W = row mask)
inline double power_iteration_xtx(const Matrix& X, const Vector& mask,
                                  int iters = 20) {
  Vector v = Vector::Ones(X.cols()).normalized();
  double lam = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vector u = (X * v).cwiseProduct(mask);
    Vector w = X.transpose() * u;
    lam = w.norm();
    if (lam <= 0.0) return 0.0;
    v = w / lam;
  }
  return lam;
}

struct SmoothProblem {
  const ModelSpec* model;
  const PenaltySpec* penalty;
  const Dataset* data;
  const SmoothedPenalty* smoothed;
  Vector mask;  // 1 for active rows, 0 for the excluded one

  double value(const Vector& beta) const {
    Vector z = data->X * beta;
    double acc = 0.0;
    for (int i = 0; i < z.size(); ++i)
      if (mask[i] != 0.0) acc += model->loss.value(data->y[i], z[i]);
    double w = penalty->lambda * (1.0 - penalty->eta);
    double ridge = penalty->lambda * penalty->eta;
    if (w > 0.0) acc += w * smoothed->value(beta);
    return acc + ridge * beta.squaredNorm();
  }

  Vector gradient(const Vector& beta) const {
    Vector z = data->X * beta;
    Vector g(z.size());
    for (int i = 0; i < z.size(); ++i)
      g[i] = mask[i] != 0.0 ? model->loss.grad(data->y[i], z[i]) : 0.0;
    Vector grad = data->X.transpose() * g;
    double w = penalty->lambda * (1.0 - penalty->eta);
    if (w > 0.0) grad += w * smoothed->grad(beta);
    grad += (2.0 * penalty->lambda * penalty->eta) * beta;
    return grad;
  }

  double loss_hess_bound() const {
    double hb = model->loss.hess_bound();
    if (hb < 0.0) {
      // Poisson: l'' <= 1 + y_i on the relevant range
      hb = 0.0;
      for (int i = 0; i < data->y.size(); ++i)
        if (mask[i] != 0.0) hb = std::max(hb, 1.0 + data->y[i]);
    }
    return hb;
  }
};

}  // namespace detail

// Projected gradient on the smoothed objective: the minimizer is the fixed
// point beta = P_Theta(beta - grad h^alpha(beta)). Nesterov acceleration with
// objective restart; monotone in the accepted iterates.
inline FitResult fit_single_alpha(const detail::SmoothProblem& prob,
                                  const ConstraintSet& theta,
                                  const SolverConfig& config, Vector beta,
                                  double alpha) {
  const double ridge = 2.0 * prob.penalty->lambda * prob.penalty->eta;
  double lmax_data = detail::power_iteration_xtx(prob.data->X, prob.mask);
  double lip = lmax_data * prob.loss_hess_bound() +
               prob.penalty->lambda * (1.0 - prob.penalty->eta) *
                   prob.smoothed->grad_lipschitz_bound() +
               ridge;
  double step = 1.0 / std::max(lip, 1e-12);
  const bool backtrack = config.step_rule == StepRule::BacktrackingArmijo;

  // Achievable residual floor: the gradient changes by ~lip per unit of beta,
  // so beta can only be resolved to ~lip * ulp; below that the residual is
  // rounding noise. Matters only at very large smoothing alpha.
  auto effective_tol = [&](const Vector& b) {
    double floor = 64.0 * std::numeric_limits<double>::epsilon() * lip *
                   std::sqrt(static_cast<double>(b.size())) * (1.0 + b.norm());
    return std::max(config.tol, floor);
  };

  beta = theta.project(beta);
  Vector y = beta;  // extrapolation point
  double t_acc = 1.0;

  FitResult result;
  result.alpha_used = alpha;
  int it = 0;
  for (; it < config.max_iters; ++it) {
    Vector g = prob.gradient(y);
    if (!g.allFinite())
      throw NonConvergence("fit: non-finite gradient", std::nan(""));

    double s = step;
    Vector cand = theta.project(y - s * g);
    if (backtrack) {
      double f_eval = prob.value(y);
      for (int bt = 0; bt < 60; ++bt) {
        Vector d = cand - y;
        double quad = f_eval + g.dot(d) + d.squaredNorm() / (2.0 * s);
        if (prob.value(cand) <= quad + 1e-10 * (1.0 + std::abs(quad))) break;
        s *= 0.5;
        cand = theta.project(y - s * g);
      }
    }

    // gradient-based restart (objective-free, robust to rounding): restart
    // when the momentum direction opposes the latest step
    if (config.acceleration && (y - cand).dot(cand - beta) > 0.0) {
      t_acc = 1.0;
      y = beta;
      g = prob.gradient(y);
      s = step;
      cand = theta.project(y - s * g);
    }

    Vector beta_prev = beta;
    beta = cand;
    if (config.acceleration) {
      double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
      y = beta + ((t_acc - 1.0) / t_next) * (beta - beta_prev);
      t_acc = t_next;
    } else {
      y = beta;
    }

    // fixed-point residual at the current iterate, unit step
    if (it % 5 == 0 || it == config.max_iters - 1) {
      Vector gr = prob.gradient(beta);
      double res = (beta - theta.project(beta - gr)).norm();
      result.fp_residual = res;
      if (res <= effective_tol(beta)) {
        result.converged = true;
        break;
      }
    }
  }
  result.iters = it;
  result.beta_hat = beta;
  return result;
}

// Davis-Yin three-operator splitting for the exact non-smooth objective
// f + g + h with f = losses + ridge (smooth), g = lambda (1 - eta) r0
// (prox_r0), h = indicator of Theta (projection). Used for penalties whose
// Gaussian convolution has no analytic form (group lasso, Schatten): the
// sampled Monte Carlo surrogate is itself non-smooth, so this solves the
// alpha -> infinity problem directly with a splitting fixed-point
// certificate instead.
inline FitResult fit_exact_splitting(const ModelSpec& model,
                                     const PenaltySpec& penalty,
                                     const Dataset& data,
                                     const SolverConfig& config, Vector z,
                                     const Vector& mask) {
  const double w = penalty.lambda * (1.0 - penalty.eta);
  const double ridge = 2.0 * penalty.lambda * penalty.eta;
  double hb = model.loss.hess_bound();
  if (hb < 0.0) {
    hb = 0.0;
    for (int i = 0; i < data.y.size(); ++i)
      if (mask[i] != 0.0) hb = std::max(hb, 1.0 + data.y[i]);
  }
  const double lip =
      detail::power_iteration_xtx(data.X, mask) * hb + ridge;
  // The splitting's tail contraction (driven by the geometry of the two
  // nonsmooth sets near the solution) improves markedly with a step well
  // below the classical 2/L stability limit; 0.01/L was fastest across the
  // loss/penalty/constraint instances measured.
  const double gamma = 0.01 / std::max(lip, 1e-12);

  auto grad_f = [&](const Vector& b) {
    Vector zz = data.X * b;
    Vector g(zz.size());
    for (int i = 0; i < zz.size(); ++i)
      g[i] = mask[i] != 0.0 ? model.loss.grad(data.y[i], zz[i]) : 0.0;
    return Vector(data.X.transpose() * g + ridge * b);
  };

  FitResult result;
  result.alpha_used = std::numeric_limits<double>::infinity();
  Vector xh, xg;
  int it = 0;
  for (; it < config.max_iters; ++it) {
    xh = penalty.theta.project(z);
    Vector u = 2.0 * xh - z - gamma * grad_f(xh);
    xg = w > 0.0 ? prox_r0(penalty.r0, u, gamma * w) : u;
    z += xg - xh;
    if (it % 5 == 0 || it == config.max_iters - 1) {
      double res = (xg - xh).norm() / gamma;
      result.fp_residual = res;
      if (res <= config.tol) {
        result.converged = true;
        break;
      }
    }
  }
  result.iters = it;
  result.beta_hat = penalty.theta.project(z);
  return result;
}

// Full fit. Penalties with an analytic Gaussian convolution (lasso,
// generalized lasso) run projected gradient on the smoothed objective with
// alpha continuation; group lasso and Schatten penalties are solved exactly
// by Davis-Yin splitting (alpha_used = infinity). The returned FitResult
// reports the exact (unsmoothed) objective.
inline FitResult fit(const ModelSpec& model, const PenaltySpec& penalty,
                     const Dataset& data, const SolverConfig& config,
                     std::optional<Vector> init = std::nullopt,
                     int exclude = -1) {
  model.validate();
  penalty.validate();
  config.validate();
  if (data.X.rows() != model.n || data.X.cols() != model.p)
    throw ShapeError("fit: dataset inconsistent with model spec");

  Vector beta = init ? penalty.theta.project(*init) : Vector::Zero(model.p);
  Vector mask = Vector::Ones(model.n);
  if (exclude >= 0) mask[exclude] = 0.0;

  FitResult result;
  const bool pure_ridge = penalty.eta >= 1.0;
  if (!pure_ridge && !penalty.closed_form_smoothable()) {
    result = fit_exact_splitting(model, penalty, data, config, beta, mask);
  } else {
    for (double alpha : config.alpha_schedule()) {
      SmoothedPenalty sp(penalty.r0, alpha,
                         penalty.closed_form_smoothable()
                             ? SmoothingMode::ClosedForm
                             : SmoothingMode::MonteCarlo,
                         std::max(penalty.smoothing_samples, 100),
                         penalty.smoothing_seed);
      detail::SmoothProblem prob{&model, &penalty, &data, &sp, mask};
      result = fit_single_alpha(prob, penalty.theta, config, beta, alpha);
      beta = result.beta_hat;
      if (pure_ridge) break;  // smoothing is inert when (1 - eta) = 0
    }
  }
  result.objective = objective(model, penalty, data, result.beta_hat, false,
                               result.alpha_used, exclude);
  if (!result.converged)
    throw NonConvergence("fit: solver did not reach tolerance",
                         result.fp_residual, exclude);
  return result;
}

namespace detail {

// All n leave-one-out refits advanced in lockstep as the columns of a p x n
// matrix, so each FISTA iteration is two GEMMs (X * Y and X^T * W) instead of
// 2n matrix-vector products. Restricted to the closed-form lasso smoothing
// where the penalty gradient is elementwise. Each column carries its own
// momentum state and restart; a column is frozen once its fixed-point
// residual passes the tolerance.
inline std::vector<FitResult> loo_batched(const ModelSpec& model,
                                          const PenaltySpec& penalty,
                                          const Dataset& data,
                                          const SolverConfig& config,
                                          const Vector& warm, double alpha) {
  const int n = model.n, p = model.p;
  const double lam1 = penalty.lambda * (1.0 - penalty.eta);
  const double ridge = 2.0 * penalty.lambda * penalty.eta;
  const double hb = model.loss.hess_bound() > 0.0
                        ? model.loss.hess_bound()
                        : 1.0 + data.y.maxCoeff();
  const double lip = power_iteration_xtx(data.X, Vector::Ones(n)) * hb +
                     lam1 * 2.0 * alpha * norm_pdf(0.0) + ridge;
  const double step = 1.0 / std::max(lip, 1e-12);
  const double tol = std::max(
      config.tol, 64.0 * std::numeric_limits<double>::epsilon() * lip *
                      std::sqrt(static_cast<double>(p)) * (1.0 + warm.norm()));

  Matrix B = warm.replicate(1, n);   // accepted iterates
  Matrix Y = B;                      // extrapolation points
  Vector t_acc = Vector::Ones(n);
  std::vector<char> done(n, 0);
  std::vector<FitResult> out(n);
  for (int i = 0; i < n; ++i) out[i].alpha_used = alpha;

  auto smoothed_grad_elem = [&](double b) {
    return 1.0 - 2.0 * norm_cdf(-b * alpha);
  };
  // gradient of column i's objective at P(:, i), written into G(:, i)
  auto gradient_all = [&](const Matrix& P, Matrix& G) {
    Matrix Z = data.X * P;  // n x n
    Matrix W(n, n);
    for (int i = 0; i < n; ++i) {
      if (done[i]) {
        W.col(i).setZero();
        continue;
      }
      for (int j = 0; j < n; ++j)
        W(j, i) = j == i ? 0.0 : model.loss.grad(data.y[j], Z(j, i));
    }
    G.noalias() = data.X.transpose() * W;
    for (int i = 0; i < n; ++i) {
      if (done[i]) continue;
      for (int k = 0; k < p; ++k)
        G(k, i) += lam1 * smoothed_grad_elem(P(k, i)) + ridge * P(k, i);
    }
  };

  Matrix G(p, n), C(p, n);
  int remaining = n;
  for (int it = 0; it < config.max_iters && remaining > 0; ++it) {
    gradient_all(Y, G);
    for (int i = 0; i < n; ++i) {
      if (done[i]) continue;
      C.col(i) = penalty.theta.project(Y.col(i) - step * G.col(i));
      // objective-free restart: momentum opposes the step direction
      if (config.acceleration &&
          (Y.col(i) - C.col(i)).dot(C.col(i) - B.col(i)) > 0.0) {
        t_acc[i] = 1.0;
        Y.col(i) = C.col(i);
      } else if (config.acceleration) {
        double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc[i] * t_acc[i]));
        Y.col(i) = C.col(i) + ((t_acc[i] - 1.0) / t_next) * (C.col(i) - B.col(i));
        t_acc[i] = t_next;
      } else {
        Y.col(i) = C.col(i);
      }
      B.col(i) = C.col(i);
      out[i].iters = it + 1;
    }
    if (it % 5 == 4 || it == config.max_iters - 1) {
      gradient_all(B, G);
      for (int i = 0; i < n; ++i) {
        if (done[i]) continue;
        double res =
            (B.col(i) - penalty.theta.project(B.col(i) - G.col(i))).norm();
        out[i].fp_residual = res;
        if (res <= tol) {
          done[i] = 1;
          out[i].converged = true;
          out[i].beta_hat = B.col(i);
          --remaining;
        }
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!out[i].converged)
      throw NonConvergence("fit_loo: batched refit did not converge",
                           out[i].fp_residual, i);
    out[i].objective =
        objective(model, penalty, data, out[i].beta_hat, false, alpha, i);
  }
  return out;
}

}  // namespace detail

// Leave-one-out refits, warm-started at the full-data solution. The lasso /
// closed-form-smoothing case uses the batched matrix iteration; everything
// else refits one observation at a time (concurrently when threads > 1, with
// results identical to the sequential order).
inline LooFits fit_loo(const ModelSpec& model, const PenaltySpec& penalty,
                       const Dataset& data, const SolverConfig& config,
                       int threads = 1) {
  if (model.n < 2) throw DomainError("fit_loo: need n >= 2");
  LooFits out;
  out.full = fit(model, penalty, data, config);
  const bool batched = penalty.r0.kind == R0Kind::Lasso &&
                       penalty.smoothing_mode == SmoothingMode::ClosedForm &&
                       penalty.eta < 1.0;
  if (batched) {
    out.per_i = detail::loo_batched(model, penalty, data, config,
                                    out.full.beta_hat, out.full.alpha_used);
    return out;
  }
  out.per_i.resize(model.n);
  parallel_for(model.n, threads, [&](int i) {
    out.per_i[i] = fit(model, penalty, data, config, out.full.beta_hat, i);
  });
  return out;
}

// One fit per alpha, each warm-started at the previous solution.
inline std::vector<FitResult> fit_smoothing_path(const ModelSpec& model,
                                                 const PenaltySpec& penalty,
                                                 const Dataset& data,
                                                 const SolverConfig& config,
                                                 const std::vector<double>& alphas) {
  if (alphas.empty()) throw DomainError("fit_smoothing_path: empty alpha list");
  if (!penalty.closed_form_smoothable())
    throw DomainError(
        "fit_smoothing_path: requires a penalty with analytic smoothing");
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    if (alphas[k] < 1.0 || (k > 0 && alphas[k] <= alphas[k - 1]))
      throw DomainError("fit_smoothing_path: alphas must be >= 1 and increasing");
  }
  std::vector<FitResult> path;
  Vector beta = Vector::Zero(model.p);
  Vector mask = Vector::Ones(model.n);
  for (double alpha : alphas) {
    SmoothedPenalty sp(penalty.r0, alpha, SmoothingMode::ClosedForm,
                       penalty.smoothing_samples, penalty.smoothing_seed);
    detail::SmoothProblem prob{&model, &penalty, &data, &sp, mask};
    FitResult r = fit_single_alpha(prob, penalty.theta, config, beta, alpha);
    r.objective = objective(model, penalty, data, r.beta_hat, false, alpha);
    if (!r.converged)
      throw NonConvergence("fit_smoothing_path: stage did not converge",
                           r.fp_residual);
    beta = r.beta_hat;
    path.push_back(std::move(r));
  }
  return path;
}

}  // namespace lorisk
