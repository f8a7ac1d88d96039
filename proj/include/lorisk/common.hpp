#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lorisk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when an iterative solver hits its iteration cap. Carries the final
// residual so callers can decide whether the result is still usable.
struct NonConvergence : std::runtime_error {
  double residual;
  int index;  // LOO index when applicable, -1 otherwise
  NonConvergence(const std::string& msg, double res, int idx = -1)
      : std::runtime_error(msg), residual(res), index(idx) {}
};

inline double norm_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// log(1 + e^z), stable for large |z|
inline double log1pexp(double z) {
  if (z > 30.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// E||z||_2 for z ~ N(0, I_p): sqrt(2) * Gamma((p+1)/2) / Gamma(p/2)
inline double expected_gaussian_norm(int p) {
  return std::sqrt(2.0) *
         std::exp(std::lgamma(0.5 * (p + 1)) - std::lgamma(0.5 * p));
}

}  // namespace lorisk
