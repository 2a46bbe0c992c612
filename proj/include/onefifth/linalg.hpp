#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "onefifth/rng.hpp"

namespace onefifth {

/// Symmetric positive-definite matrix with unit determinant plus its cached
/// lower Cholesky factor A (A A^T = Sigma).
class Covariance {
 public:
  static Covariance identity(Eigen::Index d) { return Covariance(Matrix::Identity(d, d)); }

  /// Validates symmetry, positive definiteness and det = 1 (1e-9 relative).
  explicit Covariance(Matrix sigma) : sigma_(std::move(sigma)) {
    if (sigma_.rows() != sigma_.cols() || sigma_.rows() == 0)
      throw std::invalid_argument("covariance must be a non-empty square matrix");
    const double scale = sigma_.norm();
    if ((sigma_ - sigma_.transpose()).norm() > 1e-12 * scale)
      throw std::invalid_argument("covariance must be symmetric");
    Eigen::LLT<Matrix> llt(sigma_);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("covariance must be positive definite");
    chol_ = llt.matrixL();
    // log det = 2 * sum log diag(A)
    const double log_det = 2.0 * chol_.diagonal().array().log().sum();
    if (std::abs(std::expm1(log_det)) > 1e-9)
      throw std::invalid_argument("covariance must have unit determinant, got det = " +
                                  std::to_string(std::exp(log_det)));
  }

  [[nodiscard]] Eigen::Index dim() const noexcept { return sigma_.rows(); }
  [[nodiscard]] const Matrix& matrix() const noexcept { return sigma_; }
  [[nodiscard]] const Matrix& cholesky_factor() const noexcept { return chol_; }
  [[nodiscard]] bool is_identity() const { return sigma_.isIdentity(0.0); }

 private:
  Matrix sigma_;
  Matrix chol_;
};

/// lambda_max / lambda_min of a symmetric positive-definite matrix.
inline double condition_number(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return ev.maxCoeff() / ev.minCoeff();
}

inline double condition_number(const Covariance& cov) {
  if (cov.is_identity()) return 1.0;
  return condition_number(cov.matrix());
}

/// Maps a symmetric positive-definite matrix into
/// S_kappa = {det = 1, cond <= kappa}: eigenvalues below lambda_max / kappa
/// are raised to that floor, then all are divided by their geometric mean.
/// Eigenvectors are preserved.
inline Covariance project_to_sk(const Matrix& sigma, double kappa) {
  if (!(kappa >= 1.0)) throw std::invalid_argument("kappa must be >= 1");
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0)
    throw std::invalid_argument("project_to_sk: matrix must be square");
  const Matrix sym = 0.5 * (sigma + sigma.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw std::invalid_argument("project_to_sk: eigensolver failed");
  Vector ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) throw std::invalid_argument("project_to_sk: matrix is not positive definite");

  const double floor = ev.maxCoeff() / kappa;
  ev = ev.cwiseMax(floor);
  const Vector log_ev = ev.array().log().matrix();
  ev = (log_ev.array() - log_ev.mean()).exp().matrix();

  const Matrix& q = es.eigenvectors();
  Matrix out = q * ev.asDiagonal() * q.transpose();
  out = 0.5 * (out + out.transpose());
  return Covariance(std::move(out));
}

/// A candidate sample together with the standard normal vector it came from.
struct Candidate {
  Vector x;
  Vector z;
};

/// x = m + sigma * A z for a given z ~ N(0, I).
inline Vector candidate_from_normal(const Vector& mean, double sigma, const Covariance& cov,
                                    const Vector& z) {
  if (cov.is_identity()) return mean + sigma * z;
  return mean + sigma * (cov.cholesky_factor() * z);
}

inline Candidate sample_candidate(const Vector& mean, double sigma, const Covariance& cov,
                                  RngStream& rng) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sample_candidate: sigma must be positive");
  Vector z = rng.standard_normal(mean.size());
  Vector x = candidate_from_normal(mean, sigma, cov, z);
  return {std::move(x), std::move(z)};
}

/// log density of N(0, Sigma) at x.
inline double log_gaussian_density(const Vector& x, const Covariance& cov) {
  const auto d = static_cast<double>(x.size());
  const Vector w = cov.cholesky_factor().triangularView<Eigen::Lower>().solve(x);
  // det(Sigma) = 1 on S_kappa, so the normaliser is (2 pi)^{-d/2}.
  return -0.5 * d * std::log(2.0 * M_PI) - 0.5 * w.squaredNorm();
}

/// log density of N(0, s I) at x.
inline double log_isotropic_density(const Vector& x, double s) {
  const auto d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * M_PI * s) - 0.5 * x.squaredNorm() / s;
}

struct DensitySandwichReport {
  bool precondition_ok = false;  ///< cov lies in S_kappa
  std::size_t points = 0;
  std::size_t violations = 0;
  [[nodiscard]] bool passed() const noexcept { return precondition_ok && violations == 0; }
};

/// Checks kappa^{-d/2} phi(x; 0, I/kappa) <= phi(x; 0, Sigma) <= kappa^{d/2} phi(x; 0, kappa I)
/// at n points drawn from N(0, kappa I), in log space with an absolute slack of 1e-9.
inline DensitySandwichReport gaussian_density_sandwich_check(const Covariance& cov, double kappa,
                                                            std::size_t n_points, RngStream& rng) {
  DensitySandwichReport report;
  report.points = n_points;
  const double cond = condition_number(cov);
  report.precondition_ok = kappa >= 1.0 && cond <= kappa * (1.0 + 1e-9);
  if (!report.precondition_ok) return report;

  const auto d = cov.dim();
  const double half_d_log_kappa = 0.5 * static_cast<double>(d) * std::log(kappa);
  constexpr double slack = 1e-9;
  for (std::size_t i = 0; i < n_points; ++i) {
    const Vector x = std::sqrt(kappa) * rng.standard_normal(d);
    const double mid = log_gaussian_density(x, cov);
    const double lo = -half_d_log_kappa + log_isotropic_density(x, 1.0 / kappa);
    const double hi = half_d_log_kappa + log_isotropic_density(x, kappa);
    if (lo > mid + slack || mid > hi + slack) ++report.violations;
  }
  return report;
}

/// Haar-distributed orthogonal matrix via QR of a Gaussian matrix.
inline Matrix random_orthogonal(Eigen::Index d, RngStream& rng) {
  Matrix g(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = rng.standard_normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace onefifth
