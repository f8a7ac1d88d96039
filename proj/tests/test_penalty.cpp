#include <doctest.h>

#include <cmath>
#include <vector>

#include "lorisk/penalty.hpp"
#include "lorisk/rng.hpp"

using namespace lorisk;

namespace {

Vector random_vector(RngStream& rng, int p, double scale = 2.0) {
  Vector v(p);
  for (int j = 0; j < p; ++j) v[j] = scale * rng.normal();
  return v;
}

std::vector<ConstraintSet> all_constraints(int p) {
  return {ConstraintSet::full_space(), ConstraintSet::nonneg(),
          ConstraintSet::box(Vector::Constant(p, -1.0), Vector::Constant(p, 1.0)),
          ConstraintSet::ball(1.5), ConstraintSet::isotone()};
}

std::vector<R0Variant> all_r0(int p) {
  std::vector<std::vector<int>> gs;
  for (int s = 0; s < p; s += 2) gs.push_back({s, s + 1});
  return {R0Variant::lasso(p), R0Variant::fused(p), R0Variant::group(gs),
          R0Variant::nuclear(2, p / 2), R0Variant::schatten(2, p / 2, 2)};
}

// prox objective t r0(x) + 0.5 ||u - x||^2
double prox_obj(const R0Variant& r0, const Vector& u, const Vector& x, double t) {
  return t * eval_r0(r0, x) + 0.5 * (u - x).squaredNorm();
}

}  // namespace

TEST_CASE("pava known value and monotone output") {
  Vector u(3);
  u << 3.0, 1.0, 2.0;
  Vector v = pava_isotonic(u);
  CHECK(v[0] == doctest::Approx(2.0));
  CHECK(v[1] == doctest::Approx(2.0));
  CHECK(v[2] == doctest::Approx(2.0));
  RngStream rng(1, stream::kProbe, 20);
  for (int k = 0; k < 100; ++k) {
    Vector w = pava_isotonic(random_vector(rng, 12));
    for (int j = 0; j + 1 < 12; ++j) CHECK(w[j] <= w[j + 1] + 1e-12);
  }
}

TEST_CASE("projections: known values, idempotence, firm nonexpansiveness") {
  const int p = 8;
  Vector u(2);
  u << -1.0, 2.0;
  CHECK(ConstraintSet::nonneg().project(u)[0] == 0.0);
  CHECK(ConstraintSet::nonneg().project(u)[1] == 2.0);
  Vector b = ConstraintSet::ball(1.0).project(u);
  CHECK(b.norm() == doctest::Approx(1.0));
  CHECK(b[1] / b[0] == doctest::Approx(-2.0));

  RngStream rng(2, stream::kProbe, 21);
  for (const auto& theta : all_constraints(p)) {
    for (int k = 0; k < 1000; ++k) {
      Vector x = random_vector(rng, p);
      Vector y = random_vector(rng, p);
      Vector px = theta.project(x);
      Vector py = theta.project(y);
      CHECK((theta.project(px) - px).norm() <= 1e-12);   // idempotent
      CHECK(theta.contains(px, 1e-10));
      // firm nonexpansiveness: ||Px - Py||^2 <= <Px - Py, x - y>
      CHECK((px - py).squaredNorm() <= (px - py).dot(x - y) + 1e-10);
    }
  }
}

TEST_CASE("eval_r0 known values") {
  Vector u(4);
  u << 1.0, -2.0, 0.5, 0.0;
  CHECK(eval_r0(R0Variant::lasso(4), u) == doctest::Approx(3.5));
  // fused: |1-(-2)| + |-2-0.5| + |0.5-0| = 3 + 2.5 + 0.5
  CHECK(eval_r0(R0Variant::fused(4), u) == doctest::Approx(6.0));
  // groups {0,1},{2,3}: sqrt(5) + 0.5
  CHECK(eval_r0(R0Variant::group({{0, 1}, {2, 3}}), u) ==
        doctest::Approx(std::sqrt(5.0) + 0.5));
  // 2x2 diag(3,4) stored column-major
  Vector d(4);
  d << 3.0, 0.0, 0.0, 4.0;
  CHECK(eval_r0(R0Variant::nuclear(2, 2), d) == doctest::Approx(7.0));
  CHECK(eval_r0(R0Variant::schatten(2, 2, 2), d) == doctest::Approx(5.0));
  CHECK_THROWS_AS(eval_r0(R0Variant::lasso(3), u), ShapeError);
  CHECK_THROWS_AS(R0Variant::schatten(2, 2, 3), DomainError);
}

TEST_CASE("subgradient inequality r0(v) >= r0(u) + g.(v-u)") {
  const int p = 8;
  RngStream rng(3, stream::kProbe, 22);
  for (const auto& r0 : all_r0(p)) {
    for (int k = 0; k < 300; ++k) {
      Vector u = random_vector(rng, p);
      Vector v = random_vector(rng, p);
      Vector g = subgrad_r0(r0, u);
      CHECK(eval_r0(r0, v) >= eval_r0(r0, u) + g.dot(v - u) - 1e-9);
    }
  }
}

TEST_CASE("declared Lipschitz constants are valid over random pairs") {
  const int p = 8;
  RngStream rng(4, stream::kProbe, 23);
  for (const auto& r0 : all_r0(p)) {
    double L = r0.lipschitz();
    for (int k = 0; k < 1000; ++k) {
      Vector u = random_vector(rng, p);
      Vector v = random_vector(rng, p);
      CHECK(std::abs(eval_r0(r0, u) - eval_r0(r0, v)) <=
            L * (u - v).norm() * (1.0 + 1e-12) + 1e-12);
    }
  }
}

TEST_CASE("prox known values") {
  Vector u(2);
  u << 2.0, -0.5;
  Vector x = prox_r0(R0Variant::lasso(2), u, 1.0);
  CHECK(x[0] == doctest::Approx(1.0));
  CHECK(x[1] == doctest::Approx(0.0));

  // nuclear prox of diag(3,4) with t=1 soft-thresholds the singular values
  Vector d(4);
  d << 3.0, 0.0, 0.0, 4.0;
  Vector nd = prox_r0(R0Variant::nuclear(2, 2), d, 1.0);
  CHECK(nd[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(nd[3] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(std::abs(nd[1]) < 1e-9);

  // fused p=3, u=(0,1,10), t=1: verify against a brute-force grid refinement
  Vector fu(3);
  fu << 0.0, 1.0, 10.0;
  R0Variant fused = R0Variant::fused(3);
  Vector fx = prox_r0(fused, fu, 1.0);
  double best = prox_obj(fused, fu, fx, 1.0);
  RngStream rng(5, stream::kProbe, 24);
  for (int k = 0; k < 20000; ++k) {
    Vector cand = fx + random_vector(rng, 3, 0.05);
    CHECK(prox_obj(fused, fu, cand, 1.0) >= best - 1e-8);
  }
  CHECK_THROWS_AS(prox_r0(fused, fu, -1.0), DomainError);
}

TEST_CASE("prox optimality certificates for every variant") {
  const int p = 8;
  RngStream rng(6, stream::kProbe, 25);
  // include a group variant with a non-identity SPD K to cover the
  // eigen-decomposition + bisection path
  Matrix K(2, 2);
  K << 2.0, 0.5, 0.5, 1.0;
  auto variants = all_r0(p);
  variants.push_back(
      R0Variant::group({{0, 1}, {2, 3}, {4, 5}, {6, 7}}, {K, K, K, K}));
  for (const auto& r0 : variants) {
    for (int k = 0; k < 100; ++k) {
      Vector u = random_vector(rng, p);
      double t = 0.1 + 2.0 * rng.uniform();
      Vector x = prox_r0(r0, u, t);
      double fx = prox_obj(r0, u, x, t);
      for (int j = 0; j < 20; ++j) {
        Vector cand = x + random_vector(rng, p, 1e-3);
        CHECK(prox_obj(r0, u, cand, t) >= fx - 1e-9);
      }
    }
  }
}

TEST_CASE("group prox zeroes small groups and keeps K-certificates") {
  // identity-K group prox is block soft-thresholding
  R0Variant g = R0Variant::group({{0, 1}, {2, 3}});
  Vector u(4);
  u << 0.3, 0.4, 3.0, 4.0;  // norms 0.5 and 5
  Vector x = prox_r0(g, u, 1.0);
  CHECK(x.head(2).norm() == doctest::Approx(0.0));
  CHECK(x.tail(2).norm() == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(x[2] / x[3] == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("smoothed lasso closed form: frozen value, gradient, limits") {
  SmoothedPenalty s(R0Variant::lasso(1), 1.0, SmoothingMode::ClosedForm);
  Vector b(1);
  b << 3.0;
  CHECK(s.value(b) == doctest::Approx(3.000764308634096).epsilon(1e-12));

  // gradient vs central differences
  RngStream rng(7, stream::kProbe, 26);
  SmoothedPenalty s5(R0Variant::lasso(5), 7.0, SmoothingMode::ClosedForm);
  for (int k = 0; k < 100; ++k) {
    Vector x = random_vector(rng, 5);
    Vector g = s5.grad(x);
    for (int j = 0; j < 5; ++j) {
      Vector e = Vector::Zero(5);
      e[j] = 1e-6;
      double fd = (s5.value(x + e) - s5.value(x - e)) / 2e-6;
      CHECK(std::abs(g[j] - fd) <= 1e-4 * (1.0 + std::abs(fd)));
    }
  }

  // smoothing gap: r0 <= r0^alpha <= r0 + sup_gap_bound, decreasing in alpha
  R0Variant l5 = R0Variant::lasso(5);
  for (int k = 0; k < 50; ++k) {
    Vector x = random_vector(rng, 5);
    double exact = eval_r0(l5, x);
    double prev = std::numeric_limits<double>::infinity();
    for (double alpha : {2.0, 8.0, 32.0}) {
      SmoothedPenalty sa(l5, alpha, SmoothingMode::ClosedForm);
      double v = sa.value(x);
      CHECK(v >= exact - 1e-10);
      CHECK(v <= exact + sa.sup_gap_bound() + 1e-10);
      CHECK(v <= prev + 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("generalized-lasso closed-form smoothing agrees with Monte Carlo") {
  R0Variant fused = R0Variant::fused(6);
  SmoothedPenalty cf(fused, 3.0, SmoothingMode::ClosedForm);
  SmoothedPenalty mc(fused, 3.0, SmoothingMode::MonteCarlo, 20000, 5);
  RngStream rng(8, stream::kProbe, 27);
  for (int k = 0; k < 10; ++k) {
    Vector x = random_vector(rng, 6);
    // MC error on each |.| term is O(sigma/sqrt(S)); 3 sigma comfort margin
    CHECK(cf.value(x) == doctest::Approx(mc.value(x)).epsilon(0.02));
  }
  // closed-form gradient vs finite differences of the closed-form value
  for (int k = 0; k < 50; ++k) {
    Vector x = random_vector(rng, 6);
    Vector g = cf.grad(x);
    for (int j = 0; j < 6; ++j) {
      Vector e = Vector::Zero(6);
      e[j] = 1e-6;
      double fd = (cf.value(x + e) - cf.value(x - e)) / 2e-6;
      CHECK(std::abs(g[j] - fd) <= 1e-4 * (1.0 + std::abs(fd)));
    }
  }
}

TEST_CASE("monte carlo smoothing stays within the sup-gap bound") {
  RngStream rng(9, stream::kProbe, 28);
  const int p = 8;
  std::vector<std::vector<int>> gs{{0, 1, 2, 3}, {4, 5, 6, 7}};
  for (const auto& r0 : {R0Variant::group(gs), R0Variant::nuclear(2, 4)}) {
    SmoothedPenalty sm(r0, 10.0, SmoothingMode::MonteCarlo, 2000, 3);
    for (int k = 0; k < 20; ++k) {
      Vector x = random_vector(rng, p);
      double exact = eval_r0(r0, x);
      // MC average of a convex function: above r0 up to sampling noise,
      // below r0 + gap bound
      CHECK(sm.value(x) >= exact - 0.1);
      CHECK(sm.value(x) <= exact + sm.sup_gap_bound() + 0.1);
    }
  }
  CHECK_THROWS_AS(
      SmoothedPenalty(R0Variant::lasso(2), 1.0, SmoothingMode::MonteCarlo, 50),
      DomainError);
  CHECK_THROWS_AS(
      SmoothedPenalty(R0Variant::nuclear(1, 2), 1.0, SmoothingMode::ClosedForm),
      DomainError);
}

TEST_CASE("penalty spec validation and smoothing dispatch") {
  PenaltySpec pen;
  pen.r0 = R0Variant::lasso(4);
  pen.lambda = 1.0;
  pen.eta = 0.3;
  CHECK_NOTHROW(pen.validate());
  CHECK(pen.closed_form_smoothable());
  pen.eta = 0.0;
  CHECK_THROWS_AS(pen.validate(), DomainError);
  pen.eta = 1.1;
  CHECK_THROWS_AS(pen.validate(), DomainError);
  pen.eta = 0.3;
  pen.lambda = 0.0;
  CHECK_THROWS_AS(pen.validate(), DomainError);

  PenaltySpec grp;
  grp.r0 = R0Variant::group({{0, 1}, {2, 3}});
  grp.smoothing_mode = SmoothingMode::ClosedForm;  // not available: forced MC
  CHECK_FALSE(grp.closed_form_smoothable());
  CHECK(grp.make_smoothed(10.0).mode() == SmoothingMode::MonteCarlo);
}
