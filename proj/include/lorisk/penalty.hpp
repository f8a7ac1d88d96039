#pragma once

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lorisk/common.hpp"
#include "lorisk/rng.hpp"

namespace lorisk {

// ---------------------------------------------------------------------------
// Constraint sets and metric projection
// ---------------------------------------------------------------------------

enum class ConstraintKind {
  FullSpace,
  NonnegativeOrthant,
  Box,
  EuclideanBall,
  IsotoneCone
};

inline std::string to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::FullSpace: return "full";
    case ConstraintKind::NonnegativeOrthant: return "nonneg";
    case ConstraintKind::Box: return "box";
    case ConstraintKind::EuclideanBall: return "ball";
    case ConstraintKind::IsotoneCone: return "isotone";
  }
  return "?";
}

// Pool-adjacent-violators: nearest nondecreasing sequence in least squares.
inline Vector pava_isotonic(const Vector& u) {
  const int n = static_cast<int>(u.size());
  std::vector<double> level(n), weight(n);
  std::vector<int> size(n);
  int blocks = 0;
  for (int i = 0; i < n; ++i) {
    level[blocks] = u[i];
    weight[blocks] = 1.0;
    size[blocks] = 1;
    ++blocks;
    while (blocks > 1 && level[blocks - 2] > level[blocks - 1]) {
      double w = weight[blocks - 2] + weight[blocks - 1];
      level[blocks - 2] =
          (weight[blocks - 2] * level[blocks - 2] +
           weight[blocks - 1] * level[blocks - 1]) / w;
      weight[blocks - 2] = w;
      size[blocks - 2] += size[blocks - 1];
      --blocks;
    }
  }
  Vector out(n);
  int pos = 0;
  for (int b = 0; b < blocks; ++b)
    for (int k = 0; k < size[b]; ++k) out[pos++] = level[b];
  return out;
}

struct ConstraintSet {
  ConstraintKind kind = ConstraintKind::FullSpace;
  Vector lo, hi;        // Box
  double radius = 1.0;  // EuclideanBall, centered at origin

  static ConstraintSet full_space() { return {}; }
  static ConstraintSet nonneg() { return {ConstraintKind::NonnegativeOrthant, {}, {}, 0.0}; }
  static ConstraintSet box(Vector l, Vector h) {
    return {ConstraintKind::Box, std::move(l), std::move(h), 0.0};
  }
  static ConstraintSet ball(double r) {
    return {ConstraintKind::EuclideanBall, {}, {}, r};
  }
  static ConstraintSet isotone() { return {ConstraintKind::IsotoneCone, {}, {}, 0.0}; }

  Vector project(const Vector& u) const {
    switch (kind) {
      case ConstraintKind::FullSpace:
        return u;
      case ConstraintKind::NonnegativeOrthant:
        return u.cwiseMax(0.0);
      case ConstraintKind::Box:
        if (lo.size() != u.size() || hi.size() != u.size())
          throw ShapeError("box constraint: bound size mismatch");
        return u.cwiseMax(lo).cwiseMin(hi);
      case ConstraintKind::EuclideanBall: {
        double nrm = u.norm();
        if (nrm <= radius) return u;
        return (radius / nrm) * u;
      }
      case ConstraintKind::IsotoneCone:
        return pava_isotonic(u);
    }
    return u;
  }

  bool contains(const Vector& u, double tol = 1e-12) const {
    return (project(u) - u).norm() <= tol;
  }
};

// ---------------------------------------------------------------------------
// r0 variants
// ---------------------------------------------------------------------------

enum class R0Kind { Lasso, GeneralizedLasso, GroupLasso, Schatten };

inline std::string to_string(R0Kind k) {
  switch (k) {
    case R0Kind::Lasso: return "lasso";
    case R0Kind::GeneralizedLasso: return "generalized_lasso";
    case R0Kind::GroupLasso: return "group_lasso";
    case R0Kind::Schatten: return "schatten";
  }
  return "?";
}

// Raised by prox_r0 when an inner solver fails to reach tolerance.
struct ProxNonConvergence : NonConvergence {
  using NonConvergence::NonConvergence;
};

struct R0Variant {
  R0Kind kind = R0Kind::Lasso;
  int dim = 0;

  // GeneralizedLasso
  Matrix D;
  // GroupLasso: index sets partitioning [p] and one SPD matrix per group
  std::vector<std::vector<int>> groups;
  std::vector<Matrix> group_K;
  // Schatten: beta reshaped to rows x cols (row-major), order q in {1, 2}
  int rows = 0, cols = 0;
  int order = 1;

  static R0Variant lasso(int p) {
    R0Variant r;
    r.kind = R0Kind::Lasso;
    r.dim = p;
    return r;
  }

  static R0Variant generalized(Matrix d) {
    R0Variant r;
    r.kind = R0Kind::GeneralizedLasso;
    r.dim = static_cast<int>(d.cols());
    r.D = std::move(d);
    return r;
  }

  // fused-difference matrix on p coordinates: (p-1) x p
  static R0Variant fused(int p) {
    Matrix d = Matrix::Zero(p - 1, p);
    for (int i = 0; i + 1 < p; ++i) {
      d(i, i) = 1.0;
      d(i, i + 1) = -1.0;
    }
    return generalized(std::move(d));
  }

  static R0Variant group(std::vector<std::vector<int>> gs,
                         std::vector<Matrix> Ks = {}) {
    R0Variant r;
    r.kind = R0Kind::GroupLasso;
    int p = 0;
    for (const auto& g : gs) p += static_cast<int>(g.size());
    r.dim = p;
    if (Ks.empty())
      for (const auto& g : gs) Ks.push_back(Matrix::Identity(g.size(), g.size()));
    r.groups = std::move(gs);
    r.group_K = std::move(Ks);
    return r;
  }

  static R0Variant schatten(int p1, int p2, int q = 1) {
    if (q != 1 && q != 2) throw DomainError("schatten order must be 1 or 2");
    R0Variant r;
    r.kind = R0Kind::Schatten;
    r.dim = p1 * p2;
    r.rows = p1;
    r.cols = p2;
    r.order = q;
    return r;
  }

  static R0Variant nuclear(int p1, int p2) { return schatten(p1, p2, 1); }

  // Lipschitz constant of r0 w.r.t. the Euclidean norm
  double lipschitz() const {
    switch (kind) {
      case R0Kind::Lasso:
        return std::sqrt(static_cast<double>(dim));
      case R0Kind::GeneralizedLasso: {
        // |r0(x)-r0(y)| <= ||D(x-y)||_1 <= sqrt(m) sigma_max(D) ||x-y||_2;
        // sigma_max alone is not a valid constant (take D = I, p large).
        Eigen::JacobiSVD<Matrix> svd(D);
        return std::sqrt(static_cast<double>(D.rows())) * svd.singularValues()(0);
      }
      case R0Kind::GroupLasso: {
        double acc = 0.0;
        for (const auto& K : group_K) {
          Eigen::SelfAdjointEigenSolver<Matrix> es(K);
          acc += es.eigenvalues().maxCoeff();
        }
        return std::sqrt(acc);
      }
      case R0Kind::Schatten:
        if (order >= 2) return 1.0;
        return std::sqrt(static_cast<double>(std::min(rows, cols)));
    }
    return 0.0;
  }

  Eigen::Map<const Matrix> as_matrix(const Vector& beta) const {
    return Eigen::Map<const Matrix>(beta.data(), rows, cols);
  }
};

inline double eval_r0(const R0Variant& r0, const Vector& beta) {
  if (beta.size() != r0.dim) throw ShapeError("eval_r0: beta length mismatch");
  switch (r0.kind) {
    case R0Kind::Lasso:
      return beta.lpNorm<1>();
    case R0Kind::GeneralizedLasso:
      return (r0.D * beta).lpNorm<1>();
    case R0Kind::GroupLasso: {
      double acc = 0.0;
      for (std::size_t g = 0; g < r0.groups.size(); ++g) {
        const auto& idx = r0.groups[g];
        Vector b(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) b[k] = beta[idx[k]];
        acc += std::sqrt(b.dot(r0.group_K[g] * b));
      }
      return acc;
    }
    case R0Kind::Schatten: {
      Eigen::JacobiSVD<Matrix> svd(r0.as_matrix(beta));
      const Vector& sv = svd.singularValues();
      if (r0.order == 1) return sv.sum();
      return sv.norm();
    }
  }
  return 0.0;
}

// An element of the subdifferential; the minimal-norm selection at kinks
// (0 for the l1 norm at 0, and groupwise/spectral analogues).
inline Vector subgrad_r0(const R0Variant& r0, const Vector& beta) {
  if (beta.size() != r0.dim) throw ShapeError("subgrad_r0: beta length mismatch");
  auto sgn = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };
  switch (r0.kind) {
    case R0Kind::Lasso: {
      Vector g(beta.size());
      for (int j = 0; j < beta.size(); ++j) g[j] = sgn(beta[j]);
      return g;
    }
    case R0Kind::GeneralizedLasso: {
      Vector db = r0.D * beta;
      Vector s(db.size());
      for (int j = 0; j < db.size(); ++j) s[j] = sgn(db[j]);
      return r0.D.transpose() * s;
    }
    case R0Kind::GroupLasso: {
      Vector g = Vector::Zero(beta.size());
      for (std::size_t gi = 0; gi < r0.groups.size(); ++gi) {
        const auto& idx = r0.groups[gi];
        Vector b(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) b[k] = beta[idx[k]];
        Vector kb = r0.group_K[gi] * b;
        double nrm = std::sqrt(b.dot(kb));
        if (nrm > 0.0)
          for (std::size_t k = 0; k < idx.size(); ++k) g[idx[k]] = kb[k] / nrm;
      }
      return g;
    }
    case R0Kind::Schatten: {
      Eigen::JacobiSVD<Matrix> svd(r0.as_matrix(beta),
                                   Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Vector& sv = svd.singularValues();
      Matrix G;
      if (r0.order == 1) {
        Vector s(sv.size());
        for (int k = 0; k < sv.size(); ++k) s[k] = sv[k] > 1e-14 ? 1.0 : 0.0;
        G = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
      } else {
        double nrm = sv.norm();
        if (nrm <= 1e-14) return Vector::Zero(beta.size());
        G = r0.as_matrix(beta) / nrm;
      }
      return Eigen::Map<const Vector>(G.data(), G.size());
    }
  }
  return Vector::Zero(beta.size());
}

namespace detail {

// prox of t * sqrt(x^T K x): either 0 (when ||K^{-1/2} u|| <= t) or
// x = (I + (t/s) K)^{-1} u where s = ||K^{1/2} x|| solves a scalar equation.
inline Vector prox_group_quadratic_norm(const Matrix& K, const Vector& u,
                                        double t) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(K);
  const Vector lam = es.eigenvalues();
  const Vector ut = es.eigenvectors().transpose() * u;
  double zero_check = 0.0;  // ||K^{-1/2} u||^2
  for (int k = 0; k < lam.size(); ++k) zero_check += ut[k] * ut[k] / lam[k];
  if (zero_check <= t * t) return Vector::Zero(u.size());

  // g(s) = sum lam_k ut_k^2 / (s + t lam_k)^2 = 1, g decreasing in s > 0
  auto g = [&](double s) {
    double acc = 0.0;
    for (int k = 0; k < lam.size(); ++k) {
      double d = s + t * lam[k];
      acc += lam[k] * ut[k] * ut[k] / (d * d);
    }
    return acc;
  };
  double slo = 0.0, shi = 1.0;
  while (g(shi) > 1.0) shi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (slo + shi);
    (g(mid) > 1.0 ? slo : shi) = mid;
  }
  double s = 0.5 * (slo + shi);
  Vector xt(ut.size());
  for (int k = 0; k < lam.size(); ++k) xt[k] = ut[k] * s / (s + t * lam[k]);
  return es.eigenvectors() * xt;
}

// ADMM for argmin_x t ||D x||_1 + 0.5 ||u - x||^2
inline Vector prox_generalized_lasso(const Matrix& D, const Vector& u, double t,
                                     double tol = 1e-10, int max_iters = 10000) {
  const int m = static_cast<int>(D.rows());
  double rho = 1.0;
  Matrix A = Matrix::Identity(u.size(), u.size()) + rho * D.transpose() * D;
  Eigen::LLT<Matrix> llt(A);
  Vector x = u, z = D * u, w = Vector::Zero(m);
  for (int it = 0; it < max_iters; ++it) {
    x = llt.solve(u + rho * D.transpose() * (z - w));
    Vector dx = D * x;
    Vector z_old = z;
    for (int j = 0; j < m; ++j) z[j] = soft_threshold(dx[j] + w[j], t / rho);
    w += dx - z;
    double primal = (dx - z).norm();
    double dual = rho * (D.transpose() * (z - z_old)).norm();
    if (primal < tol && dual < tol) return x;
  }
  double res = (D * x - z).norm();
  throw ProxNonConvergence("generalized lasso prox: ADMM did not converge", res);
}

}  // namespace detail

// argmin_x { t r0(x) + 0.5 ||u - x||^2 }
inline Vector prox_r0(const R0Variant& r0, const Vector& u, double t) {
  if (t <= 0.0) throw DomainError("prox_r0: t must be positive");
  if (u.size() != r0.dim) throw ShapeError("prox_r0: u length mismatch");
  switch (r0.kind) {
    case R0Kind::Lasso: {
      Vector x(u.size());
      for (int j = 0; j < u.size(); ++j) x[j] = soft_threshold(u[j], t);
      return x;
    }
    case R0Kind::GeneralizedLasso:
      return detail::prox_generalized_lasso(r0.D, u, t);
    case R0Kind::GroupLasso: {
      Vector x = Vector::Zero(u.size());
      for (std::size_t g = 0; g < r0.groups.size(); ++g) {
        const auto& idx = r0.groups[g];
        Vector ug(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) ug[k] = u[idx[k]];
        Vector xg;
        if (r0.group_K[g].isIdentity(1e-14)) {
          double nrm = ug.norm();
          xg = nrm <= t ? Vector::Zero(ug.size())
                        : Vector((1.0 - t / nrm) * ug);
        } else {
          xg = detail::prox_group_quadratic_norm(r0.group_K[g], ug, t);
        }
        for (std::size_t k = 0; k < idx.size(); ++k) x[idx[k]] = xg[k];
      }
      return x;
    }
    case R0Kind::Schatten: {
      Eigen::JacobiSVD<Matrix> svd(r0.as_matrix(u),
                                   Eigen::ComputeThinU | Eigen::ComputeThinV);
      Vector sv = svd.singularValues();
      if (r0.order == 1) {
        for (int k = 0; k < sv.size(); ++k) sv[k] = soft_threshold(sv[k], t);
      } else {
        double nrm = sv.norm();
        double scale = nrm <= t ? 0.0 : 1.0 - t / nrm;
        sv *= scale;
      }
      Matrix X = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
      return Eigen::Map<const Vector>(X.data(), X.size());
    }
  }
  return u;
}

// ---------------------------------------------------------------------------
// Gaussian smoothing r0^alpha
// ---------------------------------------------------------------------------

enum class SmoothingMode { ClosedForm, MonteCarlo };

// r0^alpha(beta) = E r0(beta - w / alpha), w standard normal. The l1 norm has
// an analytic convolution, and so does ||D .||_1: each term |d_j^T beta -
// d_j^T w / alpha| only involves the Gaussian marginal d_j^T w ~
// N(0, ||d_j||^2), so the expectation splits into exact univariate pieces.
// Everything else uses common-random-number Monte Carlo so repeated calls see
// the same sample.
class SmoothedPenalty {
 public:
  SmoothedPenalty() = default;
  SmoothedPenalty(R0Variant base, double alpha, SmoothingMode mode,
                  int samples = 256, std::uint64_t seed = 0)
      : base_(std::move(base)), alpha_(alpha), mode_(mode), samples_(samples),
        seed_(seed) {
    if (alpha_ <= 0.0) throw DomainError("smoothing: alpha must be positive");
    if (mode_ == SmoothingMode::ClosedForm && base_.kind != R0Kind::Lasso &&
        base_.kind != R0Kind::GeneralizedLasso)
      throw DomainError(
          "closed-form smoothing only available for lasso and generalized lasso");
    if (mode_ == SmoothingMode::ClosedForm &&
        base_.kind == R0Kind::GeneralizedLasso) {
      row_norms_ = base_.D.rowwise().norm();
      for (int j = 0; j < row_norms_.size(); ++j)
        if (row_norms_[j] <= 0.0)
          throw DomainError("generalized lasso smoothing: zero row in D");
    }
    if (mode_ == SmoothingMode::MonteCarlo) {
      if (samples_ < 100)
        throw DomainError("monte carlo smoothing needs >= 100 samples");
      RngStream rng(seed_, stream::kSmoothing);
      W_.resize(base_.dim, samples_);
      for (int k = 0; k < samples_; ++k)
        for (int j = 0; j < base_.dim; ++j) W_(j, k) = rng.normal();
    }
  }

  const R0Variant& base() const { return base_; }
  double alpha() const { return alpha_; }
  SmoothingMode mode() const { return mode_; }

  double value(const Vector& beta) const {
    if (beta.size() != base_.dim) throw ShapeError("eval_smoothed: length mismatch");
    if (mode_ == SmoothingMode::ClosedForm) {
      if (base_.kind == R0Kind::Lasso) {
        double acc = 0.0;
        for (int j = 0; j < beta.size(); ++j)
          acc += smoothed_abs(beta[j], 1.0 / alpha_);
        return acc;
      }
      Vector v = base_.D * beta;
      double acc = 0.0;
      for (int j = 0; j < v.size(); ++j)
        acc += smoothed_abs(v[j], row_norms_[j] / alpha_);
      return acc;
    }
    double acc = 0.0;
    for (int k = 0; k < samples_; ++k)
      acc += eval_r0(base_, beta - W_.col(k) / alpha_);
    return acc / samples_;
  }

  Vector grad(const Vector& beta) const {
    if (beta.size() != base_.dim) throw ShapeError("grad_smoothed: length mismatch");
    if (mode_ == SmoothingMode::ClosedForm) {
      if (base_.kind == R0Kind::Lasso) {
        Vector g(beta.size());
        for (int j = 0; j < beta.size(); ++j)
          g[j] = 1.0 - 2.0 * norm_cdf(-beta[j] * alpha_);
        return g;
      }
      Vector v = base_.D * beta;
      Vector s(v.size());
      for (int j = 0; j < v.size(); ++j)
        s[j] = 1.0 - 2.0 * norm_cdf(-v[j] * alpha_ / row_norms_[j]);
      return base_.D.transpose() * s;
    }
    Vector g = Vector::Zero(beta.size());
    for (int k = 0; k < samples_; ++k)
      g += subgrad_r0(base_, beta - W_.col(k) / alpha_);
    return g / samples_;
  }

  // ||r0^alpha - r0||_inf <= L E||w|| / alpha
  double sup_gap_bound() const {
    return base_.lipschitz() * expected_gaussian_norm(base_.dim) / alpha_;
  }

  // Lipschitz constant of the smoothed gradient, used for step sizes.
  // Closed-form lasso: max curvature of the convolved |.| is 2 alpha phi(0).
  // Closed-form generalized lasso: Hess = sum_j (2 phi(.) alpha / ||d_j||)
  // d_j d_j^T <= 2 phi(0) alpha sigma_max(D)^2 / min_j ||d_j||.
  double grad_lipschitz_bound() const {
    if (mode_ == SmoothingMode::ClosedForm) {
      if (base_.kind == R0Kind::Lasso) return 2.0 * alpha_ * norm_pdf(0.0);
      Eigen::JacobiSVD<Matrix> svd(base_.D);
      double smax = svd.singularValues()(0);
      return 2.0 * norm_pdf(0.0) * alpha_ * smax * smax /
             row_norms_.minCoeff();
    }
    return alpha_ * base_.lipschitz();
  }

 private:
  // E|m + sigma Z|, Z standard normal
  double smoothed_abs(double m, double sigma) const {
    double t = m / sigma;
    return m * (1.0 - 2.0 * norm_cdf(-t)) + 2.0 * sigma * norm_pdf(t);
  }

  R0Variant base_;
  double alpha_ = 1.0;
  SmoothingMode mode_ = SmoothingMode::ClosedForm;
  int samples_ = 256;
  std::uint64_t seed_ = 0;
  Vector row_norms_;  // closed-form generalized lasso: ||d_j||
  Matrix W_;          // p x samples, fixed at construction
};

inline double eval_smoothed(const SmoothedPenalty& s, const Vector& beta) {
  return s.value(beta);
}

inline Vector grad_smoothed(const SmoothedPenalty& s, const Vector& beta) {
  return s.grad(beta);
}

// ---------------------------------------------------------------------------
// Full penalty specification r = (1 - eta) r0 + eta beta^T beta
// ---------------------------------------------------------------------------

struct PenaltySpec {
  R0Variant r0;
  double eta = 0.5;     // strictly inside (0,1) for the theory; 1.0 = pure ridge
  double lambda = 1.0;
  ConstraintSet theta;
  // smoothing defaults consumed by the solver
  double alpha = 100.0;
  SmoothingMode smoothing_mode = SmoothingMode::ClosedForm;
  int smoothing_samples = 256;
  std::uint64_t smoothing_seed = 0;

  void validate() const {
    if (!(eta > 0.0 && eta <= 1.0))
      throw DomainError("eta must lie in (0, 1]");
    if (lambda <= 0.0) throw DomainError("lambda must be positive");
    if (alpha <= 0.0) throw DomainError("alpha must be positive");
  }

  // Does this r0 admit the analytic Gaussian convolution?
  bool closed_form_smoothable() const {
    return r0.kind == R0Kind::Lasso || r0.kind == R0Kind::GeneralizedLasso;
  }

  SmoothedPenalty make_smoothed(double alpha_value) const {
    SmoothingMode mode = smoothing_mode;
    if (!closed_form_smoothable()) mode = SmoothingMode::MonteCarlo;
    return SmoothedPenalty(r0, alpha_value, mode, smoothing_samples,
                           smoothing_seed);
  }
};

inline Vector project(const ConstraintSet& theta, const Vector& u) {
  return theta.project(u);
}

}  // namespace lorisk
