#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <string>

#include "lorisk/common.hpp"
#include "lorisk/rng.hpp"

namespace lorisk {

enum class LossKind { SquaredError, LogisticNLL, PoissonNLL };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::SquaredError: return "squared";
    case LossKind::LogisticNLL: return "logistic";
    case LossKind::PoissonNLL: return "poisson";
  }
  return "?";
}

// Scalar loss l(y, z) with derivatives in z. All three families are
// non-negative, convex in z and grow polynomially with the (C, s) pair
// reported by growth_constant()/growth_exponent().
struct LossFamily {
  LossKind kind = LossKind::SquaredError;

  void check_domain(double y) const {
    switch (kind) {
      case LossKind::SquaredError:
        if (!std::isfinite(y)) throw DomainError("squared loss: y must be finite");
        break;
      case LossKind::LogisticNLL:
        if (y != 0.0 && y != 1.0)
          throw DomainError("logistic loss: y must be 0 or 1");
        break;
      case LossKind::PoissonNLL:
        if (y < 0.0 || y != std::floor(y))
          throw DomainError("poisson loss: y must be a nonnegative integer");
        break;
    }
  }

  double value(double y, double z) const {
    check_domain(y);
    switch (kind) {
      case LossKind::SquaredError:
        return 0.5 * (y - z) * (y - z);
      case LossKind::LogisticNLL:
        return log1pexp(z) - y * z;
      case LossKind::PoissonNLL: {
        double mu = log1pexp(z);
        // log(y!) via lgamma; exact factorials overflow past y = 170
        return mu - y * std::log(mu) + std::lgamma(y + 1.0);
      }
    }
    return 0.0;
  }

  double grad(double y, double z) const {
    check_domain(y);
    switch (kind) {
      case LossKind::SquaredError:
        return z - y;
      case LossKind::LogisticNLL:
        return sigmoid(z) - y;
      case LossKind::PoissonNLL: {
        double mu = log1pexp(z);
        return sigmoid(z) * (1.0 - y / mu);
      }
    }
    return 0.0;
  }

  double hess(double y, double z) const {
    check_domain(y);
    switch (kind) {
      case LossKind::SquaredError:
        return 1.0;
      case LossKind::LogisticNLL: {
        double s = sigmoid(z);
        return s * (1.0 - s);
      }
      case LossKind::PoissonNLL: {
        double mu = log1pexp(z);
        double s = sigmoid(z);
        return s * (1.0 - s) * (1.0 - y / mu) + y * s * s / (mu * mu);
      }
    }
    return 0.0;
  }

  // growth bound max{|l|,|l'|} <= C (1 + |y|^s + |z|^s)
  double growth_exponent() const {
    return kind == LossKind::LogisticNLL ? 1.0 : 2.0;
  }
  double growth_constant() const {
    switch (kind) {
      case LossKind::SquaredError: return 2.0;
      case LossKind::LogisticNLL: return 2.0;
      case LossKind::PoissonNLL: return 3.0;
    }
    return 0.0;
  }

  // Uniform-in-data upper bound on l''(y, z); the Poisson bound is
  // data-dependent and handled by the solver.
  double hess_bound() const {
    switch (kind) {
      case LossKind::SquaredError: return 1.0;
      case LossKind::LogisticNLL: return 0.25;
      case LossKind::PoissonNLL: return -1.0;  // unbounded, needs data
    }
    return 1.0;
  }
};

// Error metric phi(y, z); usually the same function as the training loss but
// the two are kept separate in every interface.
using ErrorMetric = LossFamily;

enum class CovarianceKind { ScaledIdentity, ScaledDiagonal, ScaledAR1 };

// Feature covariance with every eigenvalue a multiple of 1/p. c_X and C_X are
// the declared eigenvalue bracket before the division by p.
struct CovarianceSpec {
  CovarianceKind kind = CovarianceKind::ScaledIdentity;
  double c = 1.0;       // overall scale
  double rho = 0.0;     // AR1 correlation
  Vector diag;          // ScaledDiagonal entries (pre-division by p)

  double c_lower() const {
    switch (kind) {
      case CovarianceKind::ScaledIdentity: return c;
      case CovarianceKind::ScaledDiagonal: return diag.minCoeff();
      case CovarianceKind::ScaledAR1: return c * (1.0 - rho) / (1.0 + rho);
    }
    return 0.0;
  }
  double c_upper() const {
    switch (kind) {
      case CovarianceKind::ScaledIdentity: return c;
      case CovarianceKind::ScaledDiagonal: return diag.maxCoeff();
      case CovarianceKind::ScaledAR1: return c * (1.0 + rho) / (1.0 - rho);
    }
    return 0.0;
  }

  Matrix materialize(int p) const {
    Matrix sigma = Matrix::Zero(p, p);
    switch (kind) {
      case CovarianceKind::ScaledIdentity:
        sigma = (c / p) * Matrix::Identity(p, p);
        break;
      case CovarianceKind::ScaledDiagonal:
        if (diag.size() != p) throw ShapeError("diagonal covariance: size != p");
        sigma = (diag / p).asDiagonal();
        break;
      case CovarianceKind::ScaledAR1:
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < p; ++j)
            sigma(i, j) = (c / p) * std::pow(rho, std::abs(i - j));
        break;
    }
    return sigma;
  }

  // Lower-triangular factor L with L L^T = Sigma
  Matrix cholesky_factor(int p) const {
    Matrix sigma = materialize(p);
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("covariance not positive definite");
    return llt.matrixL();
  }
};

struct ModelSpec {
  int n = 0;
  int p = 0;
  double gamma0 = 1.0;  // n / p
  Vector beta_star;
  CovarianceSpec covariance;
  LossFamily loss;
  ErrorMetric metric;
  double noise_sigma = 1.0;  // SquaredError only
  // configured bracket for p^{-1} ||beta*||^2 (bounded-SNR regime)
  double signal_lo = 0.0;
  double signal_hi = 4.0;

  void validate() const {
    if (gamma0 <= 0.0) throw DomainError("gamma0 must be positive");
    if (p < 1) throw DomainError("p must be >= 1");
    if (n != static_cast<int>(std::llround(gamma0 * p)))
      throw DomainError("n must equal round(gamma0 * p)");
    if (beta_star.size() != p) throw ShapeError("beta_star must have length p");
    double sig = beta_star.squaredNorm() / p;
    if (sig < signal_lo - 1e-12 || sig > signal_hi + 1e-12)
      throw DomainError("p^{-1}||beta*||^2 outside configured signal bracket");
    if (loss.kind == LossKind::SquaredError && noise_sigma <= 0.0)
      throw DomainError("noise_sigma must be positive");
  }

  // default beta*: i.i.d. +-xi entries with p^{-1}||beta*||^2 = signal_scale
  static Vector rademacher_beta(int p, double signal_scale, std::uint64_t seed) {
    double xi = std::sqrt(signal_scale);
    RngStream rng(seed, stream::kProbe, 77);
    Vector b(p);
    for (int j = 0; j < p; ++j) b[j] = rng.bernoulli(0.5) ? xi : -xi;
    return b;
  }
};

struct Dataset {
  Matrix X;  // n x p
  Vector y;  // n
  std::uint64_t seed = 0;
};

inline double conditional_mean_response(const LossFamily& loss, double z,
                                        double /*sigma*/) {
  switch (loss.kind) {
    case LossKind::SquaredError: return z;
    case LossKind::LogisticNLL: return sigmoid(z);
    case LossKind::PoissonNLL: return log1pexp(z);
  }
  return 0.0;
}

inline double conditional_variance_response(const LossFamily& loss, double z,
                                            double sigma) {
  switch (loss.kind) {
    case LossKind::SquaredError: return sigma * sigma;
    case LossKind::LogisticNLL: {
      double q = sigmoid(z);
      return q * (1.0 - q);
    }
    case LossKind::PoissonNLL: return log1pexp(z);
  }
  return 0.0;
}

inline double draw_response(RngStream& rng, const LossFamily& loss, double z,
                            double sigma) {
  switch (loss.kind) {
    case LossKind::SquaredError: return z + sigma * rng.normal();
    case LossKind::LogisticNLL: return rng.bernoulli(sigmoid(z)) ? 1.0 : 0.0;
    case LossKind::PoissonNLL:
      return static_cast<double>(rng.poisson(log1pexp(z)));
  }
  return 0.0;
}

// X rows i.i.d. N(0, Sigma); y_i from the GLM law given x_i^T beta*.
// Deterministic given (spec, seed).
inline Dataset generate_dataset(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int n = spec.n, p = spec.p;
  Matrix chol = spec.covariance.cholesky_factor(p);

  Dataset data;
  data.seed = seed;
  data.X.resize(n, p);
  data.y.resize(n);

  RngStream xrng(seed, stream::kDesign);
  Vector z(p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) z[j] = xrng.normal();
    data.X.row(i) = (chol.template triangularView<Eigen::Lower>() * z).transpose();
  }
  RngStream yrng(seed, stream::kResponse);
  Vector lin = data.X * spec.beta_star;
  for (int i = 0; i < n; ++i)
    data.y[i] = draw_response(yrng, spec.loss, lin[i], spec.noise_sigma);
  return data;
}

struct SnrReport {
  double signal_var = 0.0;
  double mean_noise_var = 0.0;
  double noise_var_se = 0.0;  // MC standard error of mean_noise_var
  double snr = 0.0;
  double snr_se = 0.0;  // delta-method SE of the ratio
  bool infinite = false;
};

// SNR = var(x^T beta*) / E var(y | x^T beta*). The signal variance is exact;
// the mean conditional variance is Monte Carlo over x^T beta* ~ N(0, signal).
inline SnrReport compute_snr(const ModelSpec& spec, int mc_samples,
                             std::uint64_t seed) {
  if (mc_samples < 1000) throw DomainError("compute_snr: mc_samples >= 1000");
  spec.validate();
  Matrix sigma = spec.covariance.materialize(spec.p);
  SnrReport rep;
  rep.signal_var = spec.beta_star.dot(sigma * spec.beta_star);
  double sd = std::sqrt(std::max(rep.signal_var, 0.0));
  RngStream rng(seed, stream::kProbe);
  double acc = 0.0, acc2 = 0.0;
  for (int k = 0; k < mc_samples; ++k) {
    double z = sd * rng.normal();
    double v = conditional_variance_response(spec.loss, z, spec.noise_sigma);
    acc += v;
    acc2 += v * v;
  }
  rep.mean_noise_var = acc / mc_samples;
  double var = std::max(acc2 / mc_samples - rep.mean_noise_var * rep.mean_noise_var, 0.0);
  rep.noise_var_se = std::sqrt(var / mc_samples);
  if (rep.mean_noise_var < 1e-12) {
    rep.infinite = true;
    rep.snr = std::numeric_limits<double>::infinity();
  } else {
    rep.snr = rep.signal_var / rep.mean_noise_var;
    rep.snr_se = rep.signal_var * rep.noise_var_se /
                 (rep.mean_noise_var * rep.mean_noise_var);
  }
  return rep;
}

}  // namespace lorisk
