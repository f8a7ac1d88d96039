#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lorisk/common.hpp"
#include "lorisk/model.hpp"
#include "lorisk/parallel.hpp"
#include "lorisk/penalty.hpp"
#include "lorisk/reference.hpp"
#include "lorisk/risk.hpp"
#include "lorisk/rng.hpp"
#include "lorisk/solver.hpp"

namespace lorisk {

struct RateExperiment {
  double gamma0 = 2.0;
  std::vector<int> n_grid{100, 200, 400, 800};
  int replicates = 50;
  // template model/penalty; model.n/p/beta_star are re-derived per grid point
  ModelSpec model;
  PenaltySpec penalty;
  // rebuilds the penalty at dimension p (r0 variants are dimension-bound);
  // defaults to re-dimensioning the template's r0 kind
  std::function<PenaltySpec(int)> penalty_factory;
  SolverConfig solver;
  int m_oo = 100000;
  std::uint64_t base_seed = 1;
  double signal_scale = 1.0;  // p^{-1}||beta*||^2 for the per-n beta*

  void validate() const {
    if (replicates < 10) throw DomainError("rate experiment: R >= 10 required");
    if (gamma0 <= 0.0) throw DomainError("rate experiment: gamma0 > 0");
    int prev = 0;
    for (int n : n_grid) {
      if (n <= prev) throw DomainError("rate experiment: n_grid must ascend");
      if (static_cast<int>(std::llround(n / gamma0)) < 2)
        throw DomainError("rate experiment: p = round(n/gamma0) must be >= 2");
      prev = n;
    }
    if (m_oo < 1000) throw DomainError("rate experiment: m_oo >= 1000");
  }
};

struct RatePoint {
  int n = 0;
  int p = 0;
  double mse = 0.0;      // bias-corrected mean sq_err
  double mse_se = 0.0;   // SE of mean sq_err over replicates
  double mc_bias = 0.0;  // subtracted Var-hat(phi)/m_oo
  int failures = 0;
  std::vector<double> sq_errs;  // per surviving replicate, replicate order
  std::vector<double> v1s, v2s;
};

struct RateReport {
  std::vector<RatePoint> points;
  double slope = 0.0;
  double intercept = 0.0;  // fitted log C
  double slope_ci_lo = 0.0;
  double slope_ci_hi = 0.0;
  int m_oo_used = 0;
  bool m_oo_raised = false;
};

struct BoundAuditRecord {
  std::string instance;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool pass = false;
};

struct BoundAuditReport {
  std::vector<BoundAuditRecord> records;
  double pass_rate = 0.0;
  bool all_pass = false;
  std::string note;

  void finalize() {
    int ok = 0;
    for (auto& r : records) {
      r.pass = r.lhs <= r.rhs + r.slack;
      if (r.pass) ++ok;
    }
    pass_rate = records.empty() ? 1.0 : static_cast<double>(ok) / records.size();
    all_pass = ok == static_cast<int>(records.size());
  }
};

namespace detail {

// OLS slope/intercept of y on x
inline std::pair<double, double> ols(const std::vector<double>& x,
                                     const std::vector<double>& y) {
  const int k = static_cast<int>(x.size());
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < k; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < k; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

}  // namespace detail

// Convergence-rate harness: per n, R replicates of generate -> fit -> LOO ->
// LO/OO -> sq_err; MSE_n = mean(sq_err) - Var-hat(phi)/m_oo; OLS slope of
// log MSE on log n with a bootstrap CI over replicates.
inline RateReport run_rate_experiment(RateExperiment exp, int threads = 1,
                                      bool with_decomposition = false,
                                      int m_cond = 0) {
  exp.validate();
  if (!exp.penalty_factory) {
    PenaltySpec tmpl = exp.penalty;
    exp.penalty_factory = [tmpl](int p) {
      PenaltySpec pen = tmpl;
      if (pen.r0.kind != R0Kind::Lasso)
        throw DomainError(
            "rate experiment: non-lasso templates need an explicit "
            "penalty_factory");
      pen.r0 = R0Variant::lasso(p);
      return pen;
    };
  }
  RateReport report;
  report.m_oo_used = exp.m_oo;

  for (bool retry_allowed = true;;) {
    report.points.clear();
    for (std::size_t gi = 0; gi < exp.n_grid.size(); ++gi) {
      const int n = exp.n_grid[gi];
      const int p = static_cast<int>(std::llround(n / exp.gamma0));
      RatePoint pt;
      pt.n = n;
      pt.p = p;
      std::vector<double> sq(exp.replicates, std::nan(""));
      std::vector<double> bias(exp.replicates, 0.0);
      std::vector<double> v1(exp.replicates, std::nan(""));
      std::vector<double> v2(exp.replicates, std::nan(""));
      std::vector<char> failed(exp.replicates, 0);

      parallel_for(exp.replicates, threads, [&](int r) {
        std::uint64_t seed =
            mix_seed(exp.base_seed, 1000 + gi, static_cast<std::uint64_t>(r));
        ModelSpec model = exp.model;
        model.n = n;
        model.p = p;
        model.gamma0 = exp.gamma0;
        model.beta_star =
            ModelSpec::rademacher_beta(p, exp.signal_scale, seed);
        PenaltySpec pen = exp.penalty_factory(p);
        try {
          Dataset data = generate_dataset(model, seed);
          LooFits loo = fit_loo(model, pen, data, exp.solver, 1);
          RiskReport rr = compute_risk(loo, data, model, exp.m_oo, seed);
          sq[r] = rr.sq_err;
          bias[r] = rr.mc_bias;
          if (with_decomposition && m_cond >= 1000) {
            DecompositionReport dec =
                compute_decomposition(loo, data, model, m_cond, seed);
            v1[r] = dec.v1;
            v2[r] = dec.v2;
          }
        } catch (const NonConvergence&) {
          failed[r] = 1;
        }
      });

      double acc = 0.0, acc_b = 0.0;
      for (int r = 0; r < exp.replicates; ++r) {
        if (failed[r]) {
          ++pt.failures;
          continue;
        }
        pt.sq_errs.push_back(sq[r]);
        if (with_decomposition && std::isfinite(v1[r])) {
          pt.v1s.push_back(v1[r]);
          pt.v2s.push_back(v2[r]);
        }
        acc += sq[r];
        acc_b += bias[r];
      }
      if (pt.failures > exp.replicates / 20)
        throw NonConvergence("rate experiment: > 5% replicate failures at n=" +
                                 std::to_string(n),
                             static_cast<double>(pt.failures));
      const int k = static_cast<int>(pt.sq_errs.size());
      double mean_sq = acc / k;
      pt.mc_bias = acc_b / k;
      pt.mse = std::max(mean_sq - pt.mc_bias, 1e-300);
      double var = 0.0;
      for (double s : pt.sq_errs) var += (s - mean_sq) * (s - mean_sq);
      pt.mse_se = std::sqrt(var / (k - 1) / k);
      report.points.push_back(std::move(pt));
    }

    // bias discipline at the largest n
    const RatePoint& last = report.points.back();
    if (retry_allowed && last.mc_bias > 0.1 * last.mse) {
      exp.m_oo *= 4;
      report.m_oo_used = exp.m_oo;
      report.m_oo_raised = true;
      retry_allowed = false;
      continue;
    }
    break;
  }

  std::vector<double> lx, ly;
  for (const auto& pt : report.points) {
    lx.push_back(std::log(static_cast<double>(pt.n)));
    ly.push_back(std::log(pt.mse));
  }
  auto [slope, intercept] = detail::ols(lx, ly);
  report.slope = slope;
  report.intercept = intercept;

  // bootstrap over replicates (resample sq_errs per n, re-fit the line)
  const int B = 400;
  std::vector<double> slopes(B);
  RngStream brng(exp.base_seed, stream::kBootstrap);
  for (int b = 0; b < B; ++b) {
    std::vector<double> by;
    for (const auto& pt : report.points) {
      const int k = static_cast<int>(pt.sq_errs.size());
      double acc = 0.0;
      for (int j = 0; j < k; ++j)
        acc += pt.sq_errs[static_cast<int>(brng.uniform() * k)];
      by.push_back(std::log(std::max(acc / k - pt.mc_bias, 1e-300)));
    }
    slopes[b] = detail::ols(lx, by).first;
  }
  std::sort(slopes.begin(), slopes.end());
  report.slope_ci_lo = slopes[static_cast<int>(0.025 * B)];
  report.slope_ci_hi = slopes[static_cast<int>(0.975 * B) - 1];
  return report;
}

// Lemma-4 displacement audit: for each i,
// ||beta - beta_{/i}|| <= |l'(y_i, x_i^T beta_{/i})| ||x_i|| / (2 lambda eta ^ 1)
// with solver slack 100 tol / (2 lambda eta). The inequality holds exactly at
// every finite smoothing level, so it is audited at the working alpha.
inline BoundAuditReport audit_lemma4(const ModelSpec& model,
                                     const PenaltySpec& penalty,
                                     const Dataset& data, const LooFits& loo,
                                     double tol,
                                     const std::string& instance_tag = "") {
  BoundAuditReport rep;
  const double mod = 2.0 * penalty.lambda * penalty.eta;
  const double denom = std::min(mod, 1.0);
  const double slack = 100.0 * tol / mod;
  for (std::size_t i = 0; i < loo.per_i.size(); ++i) {
    BoundAuditRecord rec;
    rec.instance = instance_tag + "/i=" + std::to_string(i);
    rec.lhs = (loo.full.beta_hat - loo.per_i[i].beta_hat).norm();
    double z = data.X.row(static_cast<int>(i)).dot(loo.per_i[i].beta_hat);
    double ldot = model.loss.grad(data.y[static_cast<int>(i)], z);
    rec.rhs = std::abs(ldot) * data.X.row(static_cast<int>(i)).norm() / denom;
    rec.slack = slack;
    rep.records.push_back(rec);
  }
  rep.finalize();
  return rep;
}

// Lemma-8 smoothing-error audit for Lasso on the full space:
// ||beta^alpha - beta_ref|| <= sqrt(2(1-eta)/eta * gap(alpha)),
// gap(alpha) = p sqrt(2/pi) / alpha, beta_ref from the coordinate-descent
// oracle. Other penalties report upper-bound-only mode.
inline BoundAuditReport audit_lemma8(const ModelSpec& model,
                                     const PenaltySpec& penalty,
                                     const Dataset& data,
                                     const SolverConfig& solver,
                                     const std::vector<double>& alphas,
                                     double solver_slack = 1e-6) {
  BoundAuditReport rep;
  if (penalty.r0.kind != R0Kind::Lasso ||
      penalty.theta.kind != ConstraintKind::FullSpace) {
    rep.note = "bound check unavailable, upper-bound-only mode";
    double lip = penalty.r0.lipschitz();
    for (double a : alphas) {
      BoundAuditRecord rec;
      rec.instance = "alpha=" + std::to_string(a);
      rec.lhs = 0.0;
      rec.rhs = std::sqrt(2.0 * (1.0 - penalty.eta) / penalty.eta *
                          lip * expected_gaussian_norm(model.p) / a);
      rec.slack = 0.0;
      rep.records.push_back(rec);
    }
    rep.finalize();
    return rep;
  }
  Vector beta_ref = reference::coordinate_descent_lasso(
      model.loss, data.X, data.y, penalty.lambda, penalty.eta);
  auto path = fit_smoothing_path(model, penalty, data, solver, alphas);
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    BoundAuditRecord rec;
    rec.instance = "alpha=" + std::to_string(alphas[k]);
    rec.lhs = (path[k].beta_hat - beta_ref).norm();
    double gap = model.p * std::sqrt(2.0 / M_PI) / alphas[k];
    rec.rhs = std::sqrt(2.0 * (1.0 - penalty.eta) / penalty.eta * gap);
    rec.slack = solver_slack;
    rep.records.push_back(rec);
  }
  rep.finalize();
  return rep;
}

struct MomentAuditReport {
  double mean_x8 = 0.0;       // mean ||x_i||^8
  double mean_x8_se = 0.0;
  double bound_x8 = 0.0;      // 24 C_X^4
  bool x8_pass = false;
  // per n-grid point: sample moments of p^{-1}||beta||^2, t in {1, 2}
  std::vector<int> n_grid;
  std::vector<double> beta_m1, beta_m1_se;
  std::vector<double> beta_m2, beta_m2_se;
  std::vector<double> phi2_m1, phi2_m1_se;  // sample mean of phi0^2(beta)
  bool beta_stable = false;
  bool phi_stable = false;
};

namespace detail {

// no growth trend beyond 3 SE: last grid value <= first + 3 combined SE
inline bool stable(const std::vector<double>& m, const std::vector<double>& se) {
  if (m.size() < 2) return true;
  double combined =
      std::sqrt(se.front() * se.front() + se.back() * se.back());
  return m.back() <= m.front() + 3.0 * combined;
}

}  // namespace detail

// Design-moment check (mean ||x||^8 against the 24 C_X^4 cap) plus
// stability probes for p^{-1}||beta||^2 and phi0^2 across an n-grid.
inline MomentAuditReport audit_moments(const ModelSpec& model_template,
                                       const std::function<PenaltySpec(int)>& penalty_at,
                                       const SolverConfig& solver,
                                       const std::vector<int>& n_grid,
                                       double gamma0, int n_draws,
                                       int replicates, std::uint64_t base_seed,
                                       int threads = 1) {
  if (n_draws < 10000) throw DomainError("audit_moments: n_draws >= 1e4");
  MomentAuditReport rep;

  // (i) mean ||x||^8 against 24 C_X^4 using the largest grid point's p
  {
    int p = static_cast<int>(std::llround(n_grid.back() / gamma0));
    Matrix chol = model_template.covariance.cholesky_factor(p);
    RngStream rng(base_seed, stream::kProbe, 11);
    double acc = 0.0, acc2 = 0.0;
    Vector z(p);
    for (int k = 0; k < n_draws; ++k) {
      for (int j = 0; j < p; ++j) z[j] = rng.normal();
      double nrm2 =
          (chol.template triangularView<Eigen::Lower>() * z).squaredNorm();
      double v = nrm2 * nrm2 * nrm2 * nrm2;  // ||x||^8
      acc += v;
      acc2 += v * v;
    }
    rep.mean_x8 = acc / n_draws;
    double var = std::max(acc2 / n_draws - rep.mean_x8 * rep.mean_x8, 0.0);
    rep.mean_x8_se = std::sqrt(var / n_draws);
    double cx = model_template.covariance.c_upper();
    rep.bound_x8 = 24.0 * cx * cx * cx * cx;
    rep.x8_pass = rep.mean_x8 <= rep.bound_x8 + 3.0 * rep.mean_x8_se;
  }

  // (ii)/(iii) fitted-coefficient and metric moments across the n-grid
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    const int n = n_grid[gi];
    const int p = static_cast<int>(std::llround(n / gamma0));
    std::vector<double> b2(replicates), phi2(replicates);
    parallel_for(replicates, threads, [&](int r) {
      std::uint64_t seed =
          mix_seed(base_seed, 2000 + gi, static_cast<std::uint64_t>(r));
      ModelSpec model = model_template;
      model.n = n;
      model.p = p;
      model.gamma0 = gamma0;
      model.beta_star = ModelSpec::rademacher_beta(p, 1.0, seed);
      Dataset data = generate_dataset(model, seed);
      FitResult fit_r = fit(model, penalty_at(p), data, solver);
      b2[r] = fit_r.beta_hat.squaredNorm() / p;
      auto [oo, se] = compute_oo(fit_r, model, 2000, seed);
      (void)se;
      phi2[r] = oo * oo;
    });
    auto mean_se = [&](const std::vector<double>& v, double power) {
      double acc = 0.0, acc2 = 0.0;
      for (double x : v) {
        double t = std::pow(x, power);
        acc += t;
        acc2 += t * t;
      }
      double m = acc / v.size();
      double var = std::max(acc2 / v.size() - m * m, 0.0);
      return std::make_pair(m, std::sqrt(var / v.size()));
    };
    rep.n_grid.push_back(n);
    auto [m1, s1] = mean_se(b2, 1.0);
    auto [m2, s2] = mean_se(b2, 2.0);
    auto [f1, fs1] = mean_se(phi2, 1.0);
    rep.beta_m1.push_back(m1);
    rep.beta_m1_se.push_back(s1);
    rep.beta_m2.push_back(m2);
    rep.beta_m2_se.push_back(s2);
    rep.phi2_m1.push_back(f1);
    rep.phi2_m1_se.push_back(fs1);
  }
  rep.beta_stable = detail::stable(rep.beta_m1, rep.beta_m1_se) &&
                    detail::stable(rep.beta_m2, rep.beta_m2_se);
  rep.phi_stable = detail::stable(rep.phi2_m1, rep.phi2_m1_se);
  return rep;
}

}  // namespace lorisk
