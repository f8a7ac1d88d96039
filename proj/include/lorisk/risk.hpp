#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lorisk/common.hpp"
#include "lorisk/model.hpp"
#include "lorisk/rng.hpp"
#include "lorisk/solver.hpp"

namespace lorisk {

struct RiskReport {
  double lo = 0.0;
  double oo_mc = 0.0;
  double oo_mc_se = 0.0;
  std::vector<double> per_i_phi;  // phi(y_i, x_i^T beta_{/i})
  double sq_err = 0.0;            // (lo - oo_mc)^2
  double mc_bias = 0.0;           // Var-hat(phi)/m, the additive bias in sq_err
  int n = 0;
  int p = 0;
  std::uint64_t seed = 0;
  bool degraded = false;  // some LOO refit missed tolerance but was usable
};

struct DecompositionReport {
  double v1 = 0.0;
  double v2 = 0.0;
  std::vector<double> cond_mean_per_i;  // MC E[phi_i(beta_{/i}) | D_{/i}]
};

// LO = n^{-1} sum_i phi(y_i, x_i^T beta_{/i}), evaluated with the metric
// (which may differ from the training loss).
inline std::pair<double, std::vector<double>> compute_lo(
    const LooFits& loo, const Dataset& data, const ErrorMetric& metric) {
  const int n = static_cast<int>(loo.per_i.size());
  if (n == 0) throw ShapeError("compute_lo: empty LOO fits");
  std::vector<double> per_i(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = data.X.row(i).dot(loo.per_i[i].beta_hat);
    per_i[i] = metric.value(data.y[i], z);
    acc += per_i[i];
  }
  return {acc / n, per_i};
}

namespace detail {

// Mean and SE of phi(y0, x0^T b) over m fresh draws. Because x0 ~ N(0, Sigma),
// the pair (x0^T beta*, x0^T b) is exactly bivariate normal; sampling that
// two-dimensional law directly gives draws with the same distribution as
// sampling x0 in R^p, at O(1) cost per draw.
inline void oo_mean_se(const ModelSpec& spec, const Matrix& sigma,
                       const Vector& b, int m, std::uint64_t seed,
                       std::uint64_t substream, double& mean, double& se) {
  Vector sb_star = sigma * spec.beta_star;
  double a = spec.beta_star.dot(sb_star);        // var(x0^T beta*)
  double vbb = b.dot(sigma * b);                 // var(x0^T b)
  double c = b.dot(sb_star);                     // covariance
  double sa = std::sqrt(std::max(a, 0.0));
  double slope = sa > 0.0 ? c / sa : 0.0;
  double resid = std::sqrt(std::max(vbb - slope * slope, 0.0));

  RngStream rng(seed, stream::kOutOfSample, substream);
  double acc = 0.0, acc2 = 0.0;
  for (int k = 0; k < m; ++k) {
    double z1 = rng.normal();
    double z2 = rng.normal();
    double u = sa * z1;                 // x0^T beta*
    double v = slope * z1 + resid * z2; // x0^T b
    double y0 = draw_response(rng, spec.loss, u, spec.noise_sigma);
    double phi = spec.metric.value(y0, v);
    acc += phi;
    acc2 += phi * phi;
  }
  mean = acc / m;
  double var = std::max(acc2 / m - mean * mean, 0.0) * m / std::max(m - 1, 1);
  se = std::sqrt(var / m);
}

}  // namespace detail

inline std::pair<double, double> compute_oo(const FitResult& fit,
                                            const ModelSpec& spec, int m,
                                            std::uint64_t seed) {
  if (m < 1000) throw DomainError("compute_oo: m must be >= 1000");
  Matrix sigma = spec.covariance.materialize(spec.p);
  double mean, se;
  detail::oo_mean_se(spec, sigma, fit.beta_hat, m, seed, 0, mean, se);
  return {mean, se};
}

inline RiskReport compute_risk(const LooFits& loo, const Dataset& data,
                               const ModelSpec& spec, int m_oo,
                               std::uint64_t seed) {
  RiskReport rep;
  rep.n = spec.n;
  rep.p = spec.p;
  rep.seed = seed;
  auto [lo, per_i] = compute_lo(loo, data, spec.metric);
  rep.lo = lo;
  rep.per_i_phi = std::move(per_i);
  auto [oo, se] = compute_oo(loo.full, spec, m_oo, seed);
  rep.oo_mc = oo;
  rep.oo_mc_se = se;
  rep.sq_err = (rep.lo - rep.oo_mc) * (rep.lo - rep.oo_mc);
  rep.mc_bias = se * se;  // Var-hat(phi)/m
  for (const auto& f : loo.per_i)
    if (!f.converged) rep.degraded = true;
  return rep;
}

// V1 = LO - mean_i E[phi(y0, x0^T beta_{/i}) | D_{/i}]
// V2 = mean_i E[...] - OO
inline DecompositionReport compute_decomposition(const LooFits& loo,
                                                 const Dataset& data,
                                                 const ModelSpec& spec,
                                                 int m_cond,
                                                 std::uint64_t seed) {
  if (m_cond < 1000)
    throw DomainError("compute_decomposition: m_cond must be >= 1000");
  const int n = static_cast<int>(loo.per_i.size());
  Matrix sigma = spec.covariance.materialize(spec.p);
  DecompositionReport rep;
  rep.cond_mean_per_i.resize(n);
  for (int i = 0; i < n; ++i) {
    double mean, se;
    detail::oo_mean_se(spec, sigma, loo.per_i[i].beta_hat, m_cond, seed,
                       static_cast<std::uint64_t>(i) + 1, mean, se);
    rep.cond_mean_per_i[i] = mean;
  }
  auto [lo, per_i] = compute_lo(loo, data, spec.metric);
  auto [oo, oo_se] = compute_oo(loo.full, spec, std::max(m_cond, 1000), seed);
  (void)oo_se;
  double cm = 0.0;
  for (double v : rep.cond_mean_per_i) cm += v;
  cm /= n;
  rep.v1 = lo - cm;
  rep.v2 = cm - oo;
  return rep;
}

// Analytic conditional risk for the Gaussian linear model with squared error:
// E phi(y0, x0^T b) = (sigma^2 + (b - beta*)^T Sigma (b - beta*)) / 2.
inline double gaussian_linear_oo(const ModelSpec& spec, const Vector& b) {
  if (spec.metric.kind != LossKind::SquaredError)
    throw DomainError("gaussian_linear_oo: squared-error metric only");
  Matrix sigma = spec.covariance.materialize(spec.p);
  Vector d = b - spec.beta_star;
  return 0.5 * (spec.noise_sigma * spec.noise_sigma + d.dot(sigma * d));
}

}  // namespace lorisk
