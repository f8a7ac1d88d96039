#include <doctest.h>

#include <cmath>

#include "lorisk/model.hpp"
#include "lorisk/risk.hpp"
#include "lorisk/solver.hpp"

using namespace lorisk;

namespace {

ModelSpec make_spec(LossKind kind, int n, int p, std::uint64_t seed,
                    double signal = 1.0) {
  ModelSpec m;
  m.n = n;
  m.p = p;
  m.gamma0 = static_cast<double>(n) / p;
  m.covariance.kind = CovarianceKind::ScaledIdentity;
  m.covariance.c = 1.0;
  m.loss.kind = kind;
  m.metric.kind = kind;
  if (signal == 0.0)
    m.beta_star = Vector::Zero(p);
  else
    m.beta_star = ModelSpec::rademacher_beta(p, signal, seed);
  m.signal_lo = 0.0;
  return m;
}

PenaltySpec lasso_pen(int p, double lambda, double eta) {
  PenaltySpec pen;
  pen.r0 = R0Variant::lasso(p);
  pen.lambda = lambda;
  pen.eta = eta;
  return pen;
}

SolverConfig solver() {
  SolverConfig cfg;
  cfg.tol = 1e-9;
  cfg.alpha0 = 100.0;
  cfg.alpha_max = 100.0;
  return cfg;
}

}  // namespace

TEST_CASE("out-of-sample risk: exact trivial values") {
  // logistic, beta* = 0, b = 0: phi(y, 0) = log 2 for both y values
  ModelSpec m = make_spec(LossKind::LogisticNLL, 20, 10, 1, 0.0);
  FitResult fr;
  fr.beta_hat = Vector::Zero(10);
  auto [oo, se] = compute_oo(fr, m, 2000, 3);
  CHECK(oo == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(se == doctest::Approx(0.0));

  // squared, b = beta*: E phi = sigma^2 / 2 exactly in expectation
  ModelSpec s = make_spec(LossKind::SquaredError, 20, 10, 1);
  FitResult fs;
  fs.beta_hat = s.beta_star;
  auto [oos, ses] = compute_oo(fs, s, 200000, 3);
  CHECK(gaussian_linear_oo(s, fs.beta_hat) == doctest::Approx(0.5));
  CHECK(std::abs(oos - 0.5) <= 3.0 * ses + 1e-12);

  CHECK_THROWS_AS(compute_oo(fs, s, 500, 3), DomainError);
}

TEST_CASE("monte carlo OO agrees with the analytic gaussian risk") {
  ModelSpec m = make_spec(LossKind::SquaredError, 30, 15, 2);
  m.noise_sigma = 0.7;
  RngStream rng(3, stream::kProbe, 50);
  for (int k = 0; k < 5; ++k) {
    FitResult fr;
    fr.beta_hat = Vector(15);
    for (int j = 0; j < 15; ++j) fr.beta_hat[j] = rng.normal();
    auto [oo, se] = compute_oo(fr, m, 100000, 4 + k);
    double exact = gaussian_linear_oo(m, fr.beta_hat);
    CHECK(std::abs(oo - exact) <= 4.0 * se);
  }
  ModelSpec logit = make_spec(LossKind::LogisticNLL, 30, 15, 2);
  FitResult fr;
  fr.beta_hat = Vector::Zero(15);
  CHECK_THROWS_AS(gaussian_linear_oo(logit, fr.beta_hat), DomainError);
}

TEST_CASE("OO standard error shrinks like 1/sqrt(m)") {
  ModelSpec m = make_spec(LossKind::SquaredError, 30, 15, 5);
  FitResult fr;
  fr.beta_hat = Vector::Zero(15);
  auto [oo1, se1] = compute_oo(fr, m, 10000, 9);
  auto [oo4, se4] = compute_oo(fr, m, 40000, 9);
  (void)oo1;
  (void)oo4;
  CHECK(se1 / se4 == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("risk report wiring: LO, sq_err, mc_bias") {
  ModelSpec m = make_spec(LossKind::LogisticNLL, 30, 15, 6);
  Dataset data = generate_dataset(m, 6);
  PenaltySpec pen = lasso_pen(m.p, 1.0, 0.3);
  LooFits loo = fit_loo(m, pen, data, solver());
  RiskReport rep = compute_risk(loo, data, m, 5000, 6);
  REQUIRE(static_cast<int>(rep.per_i_phi.size()) == m.n);
  double acc = 0.0;
  for (int i = 0; i < m.n; ++i) {
    double z = data.X.row(i).dot(loo.per_i[i].beta_hat);
    CHECK(rep.per_i_phi[i] == doctest::Approx(m.metric.value(data.y[i], z)));
    acc += rep.per_i_phi[i];
  }
  CHECK(rep.lo == doctest::Approx(acc / m.n).epsilon(1e-12));
  CHECK(rep.sq_err ==
        doctest::Approx((rep.lo - rep.oo_mc) * (rep.lo - rep.oo_mc)));
  CHECK(rep.mc_bias == doctest::Approx(rep.oo_mc_se * rep.oo_mc_se));
  CHECK_FALSE(rep.degraded);
  CHECK(rep.n == m.n);

  LooFits empty;
  CHECK_THROWS_AS(compute_lo(empty, data, m.metric), ShapeError);
}

TEST_CASE("V1 + V2 reproduces LO - OO exactly") {
  ModelSpec m = make_spec(LossKind::SquaredError, 20, 10, 7);
  Dataset data = generate_dataset(m, 7);
  PenaltySpec pen = lasso_pen(m.p, 1.0, 0.3);
  LooFits loo = fit_loo(m, pen, data, solver());
  const int mc = 2000;
  RiskReport rep = compute_risk(loo, data, m, mc, 7);
  DecompositionReport dec = compute_decomposition(loo, data, m, mc, 7);
  // identical m and seed: the OO draw stream is shared, so the identity is
  // exact up to rounding
  CHECK(dec.v1 + dec.v2 ==
        doctest::Approx(rep.lo - rep.oo_mc).epsilon(1e-12));
  CHECK_THROWS_AS(compute_decomposition(loo, data, m, 500, 7), DomainError);
}

TEST_CASE("huge lambda collapses the fit and the decomposition") {
  ModelSpec m = make_spec(LossKind::LogisticNLL, 40, 20, 8);
  Dataset data = generate_dataset(m, 8);
  PenaltySpec pen = lasso_pen(m.p, 50.0, 0.5);
  LooFits loo = fit_loo(m, pen, data, solver());
  // at the working smoothing level the l1 gradient vanishes at the origin,
  // so the collapsed fit is near zero rather than exactly zero
  CHECK(loo.full.beta_hat.norm() <= 0.01);
  DecompositionReport dec = compute_decomposition(loo, data, m, 5000, 8);
  // all refits coincide, so the stability term V2 is pure MC noise
  CHECK(std::abs(dec.v2) <= 0.05);
}

TEST_CASE("metric can differ from the training loss") {
  ModelSpec m = make_spec(LossKind::LogisticNLL, 20, 10, 9);
  m.metric.kind = LossKind::SquaredError;  // Brier-style squared metric on z
  Dataset data = generate_dataset(m, 9);
  PenaltySpec pen = lasso_pen(m.p, 1.0, 0.3);
  LooFits loo = fit_loo(m, pen, data, solver());
  auto [lo, per_i] = compute_lo(loo, data, m.metric);
  (void)per_i;
  double z0 = data.X.row(0).dot(loo.per_i[0].beta_hat);
  CHECK(per_i[0] == doctest::Approx(0.5 * (data.y[0] - z0) * (data.y[0] - z0)));
  CHECK(std::isfinite(lo));
}
