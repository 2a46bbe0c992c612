#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "onefifth/linalg.hpp"
#include "onefifth/rng.hpp"

using namespace onefifth;

namespace {

// Random SPD matrix with log-eigenvalues spread over [-spread, spread].
Matrix random_spd(int d, double spread, RngStream& rng) {
  const Matrix q = random_orthogonal(d, rng);
  Vector ev(d);
  for (int i = 0; i < d; ++i) ev[i] = std::exp(spread * (2.0 * rng.uniform() - 1.0));
  Matrix m = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

// Largest eigenvalue by power iteration; independent of Eigen's eigensolver.
double power_iteration(const Matrix& m, int iters = 5000) {
  Vector v = Vector::Ones(m.rows()) / std::sqrt(static_cast<double>(m.rows()));
  v[0] += 0.1;
  double lambda = 0.0;
  for (int i = 0; i < iters; ++i) {
    Vector w = m * v;
    lambda = v.dot(w) / v.dot(v);
    v = w / w.norm();
  }
  return lambda;
}

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

double det_via_lu(const Matrix& m) { return m.fullPivLu().determinant(); }

}  // namespace

TEST(RngStream, SameSeedAndStreamGiveSameSequence) {
  RngStream a(42, 7);
  RngStream b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  const Vector za = a.standard_normal(50);
  const Vector zb = b.standard_normal(50);
  EXPECT_EQ(za, zb);
}

TEST(RngStream, DifferentStreamsDiffer) {
  RngStream a(42, 7);
  RngStream b(42, 8);
  RngStream c(43, 7);
  const auto x = a.next_u64();
  EXPECT_NE(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
}

TEST(RngStream, SplitIsDeterministicAndDistinct) {
  RngStream base(5, 1);
  RngStream c1 = base.split(3);
  RngStream c2 = base.split(3);
  RngStream c3 = base.split(4);
  const auto v1 = c1.next_u64();
  EXPECT_EQ(v1, c2.next_u64());
  EXPECT_NE(v1, c3.next_u64());
}

TEST(RngStream, FirstOutputsAreFrozen) {
  // Regression pin: the stream definition must not change silently.
  RngStream a(1, 0);
  const double u = a.uniform();
  RngStream b(1, 0);
  EXPECT_EQ(u, static_cast<double>(b.next_u64() >> 11) * 0x1.0p-53);
  EXPECT_GE(u, 0.0);
  EXPECT_LT(u, 1.0);
}

TEST(RngStream, StandardNormalMoments) {
  RngStream rng(11, 0);
  const int n = 1000000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.standard_normal();
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  EXPECT_LT(std::abs(mean), 0.01);
  EXPECT_NEAR(var, 1.0, 0.01);
}

TEST(RngStream, StandardNormalPerCoordinateMoments) {
  RngStream rng(12, 0);
  const int d = 3;
  const int n = 200000;
  Vector sum = Vector::Zero(d);
  Vector sum_sq = Vector::Zero(d);
  for (int i = 0; i < n; ++i) {
    const Vector z = rng.standard_normal(d);
    sum += z;
    sum_sq += z.cwiseProduct(z);
  }
  for (int j = 0; j < d; ++j) {
    EXPECT_LT(std::abs(sum[j] / n), 3.0 / std::sqrt(static_cast<double>(n)) * 1.5);
    EXPECT_NEAR(sum_sq[j] / n, 1.0, 0.02);
  }
}

TEST(RngStream, UniformIndexCoversRangeUniformly) {
  RngStream rng(3, 3);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_index(7)];
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 5.0 * std::sqrt(n / 7.0));
}

TEST(RngStream, UnitVectorHasUnitNorm) {
  RngStream rng(4, 4);
  for (int i = 0; i < 100; ++i) EXPECT_NEAR(rng.unit_vector(7).norm(), 1.0, 1e-12);
}

TEST(RngStream, ShuffleIsAPermutation) {
  RngStream rng(9, 9);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  rng.shuffle(v.begin(), v.end());
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}

TEST(Covariance, RejectsInvalidMatrices) {
  EXPECT_THROW(Covariance(Matrix::Identity(2, 2) * 2.0), std::invalid_argument);  // det 4
  Matrix asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW((Covariance(asym)), std::invalid_argument);
  Matrix indef(2, 2);
  indef << 1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW((Covariance(indef)), std::invalid_argument);
}

TEST(Covariance, CholeskyFactorReproducesMatrix) {
  RngStream rng(21, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + static_cast<int>(rng.uniform_index(8));
    const Covariance c = project_to_sk(random_spd(d, 2.0, rng), 1e6);
    const Matrix& a = c.cholesky_factor();
    EXPECT_LE((a * a.transpose() - c.matrix()).norm(), 1e-10 * c.matrix().norm());
    EXPECT_TRUE(a.isLowerTriangular());
  }
}

TEST(ProjectToSk, IdentityIsFixed) {
  for (double kappa : {1.0, 2.0, 100.0}) {
    const Covariance c = project_to_sk(Matrix::Identity(4, 4), kappa);
    EXPECT_LE((c.matrix() - Matrix::Identity(4, 4)).norm(), 1e-14);
  }
}

TEST(ProjectToSk, DeterminantNormalisationWithoutClipping) {
  const Covariance c = project_to_sk(diag2(4.0, 1.0), 10.0);
  EXPECT_NEAR(c.matrix()(0, 0), 2.0, 1e-12);
  EXPECT_NEAR(c.matrix()(1, 1), 0.5, 1e-12);
  EXPECT_NEAR(c.matrix()(0, 1), 0.0, 1e-12);
}

TEST(ProjectToSk, ClipsSmallEigenvalues) {
  // (100, 1) -> floor 100/4 = 25 -> (100, 25) / sqrt(2500) = (2, 0.5)
  const Covariance c = project_to_sk(diag2(100.0, 1.0), 4.0);
  EXPECT_NEAR(c.matrix()(0, 0), 2.0, 1e-12);
  EXPECT_NEAR(c.matrix()(1, 1), 0.5, 1e-12);
}

TEST(ProjectToSk, RejectsNonPositiveDefinite) {
  EXPECT_THROW(project_to_sk(diag2(1.0, -1.0), 10.0), std::invalid_argument);
  EXPECT_THROW(project_to_sk(diag2(1.0, 0.0), 10.0), std::invalid_argument);
  EXPECT_THROW(project_to_sk(Matrix::Identity(2, 2), 0.5), std::invalid_argument);
}

TEST(ProjectToSk, PropertyInvariantsHoldOnRandomInputs) {
  RngStream rng(31, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_index(10));
    const double kappa = std::exp(5.0 * rng.uniform());
    const Matrix in = random_spd(d, 4.0, rng) * std::exp(3.0 * (rng.uniform() - 0.5));
    const Covariance c = project_to_sk(in, kappa);
    EXPECT_LE(std::abs(det_via_lu(c.matrix()) - 1.0), 1e-9);
    EXPECT_LE(condition_number(c), kappa * (1.0 + 1e-9));
    // Eigenvectors are preserved: the output commutes with the input.
    const Matrix comm = c.matrix() * in - in * c.matrix();
    EXPECT_LE(comm.norm(), 1e-8 * c.matrix().norm() * in.norm());
  }
}

TEST(ConditionNumber, KnownValues) {
  EXPECT_DOUBLE_EQ(condition_number(Covariance::identity(3)), 1.0);
  EXPECT_NEAR(condition_number(Covariance(diag2(2.0, 0.5))), 4.0, 1e-12);
}

TEST(ConditionNumber, AgreesWithPowerIteration) {
  RngStream rng(41, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(rng.uniform_index(5));
    const Covariance c = project_to_sk(random_spd(d, 1.0, rng), 1e3);
    const double lmax = power_iteration(c.matrix());
    const double lmin = 1.0 / power_iteration(c.matrix().inverse());
    EXPECT_NEAR(condition_number(c), lmax / lmin, 1e-6 * lmax / lmin);
  }
}

TEST(SampleCandidate, IdentityUnitStepReturnsZ) {
  RngStream rng(51, 0);
  const Candidate c = sample_candidate(Vector::Zero(4), 1.0, Covariance::identity(4), rng);
  EXPECT_EQ(c.x, c.z);
  EXPECT_THROW(sample_candidate(Vector::Zero(4), 0.0, Covariance::identity(4), rng), std::invalid_argument);
}

TEST(SampleCandidate, ScaledIdentityVariance) {
  RngStream rng(52, 0);
  const int n = 100000;
  Vector m(2);
  m << 1.0, -3.0;
  Vector sum_sq = Vector::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Candidate c = sample_candidate(m, 2.0, Covariance::identity(2), rng);
    const Vector y = c.x - m;
    sum_sq += y.cwiseProduct(y);
  }
  EXPECT_NEAR(sum_sq[0] / n, 4.0, 0.05);
  EXPECT_NEAR(sum_sq[1] / n, 4.0, 0.05);
}

TEST(SampleCandidate, EmpiricalCovarianceMatchesSigma) {
  RngStream rng(53, 0);
  const Covariance cov(diag2(2.0, 0.5));
  const double sigma = 1.5;
  const int n = 200000;
  Matrix acc = Matrix::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Candidate c = sample_candidate(Vector::Zero(2), sigma, cov, rng);
    acc += c.x * c.x.transpose();
  }
  acc /= n;
  const Matrix expected = sigma * sigma * cov.matrix();
  EXPECT_NEAR(acc(0, 0), expected(0, 0), 0.02 * expected(0, 0));
  EXPECT_NEAR(acc(1, 1), expected(1, 1), 0.02 * expected(1, 1));
  EXPECT_NEAR(acc(0, 1), 0.0, 0.02 * expected(0, 0));
}

TEST(SampleCandidate, ReplayFromZIsExact) {
  RngStream rng(54, 0);
  const Covariance cov(diag2(2.0, 0.5));
  Vector m(2);
  m << 0.3, 0.7;
  const Candidate c = sample_candidate(m, 0.25, cov, rng);
  EXPECT_EQ(candidate_from_normal(m, 0.25, cov, c.z), c.x);
}

TEST(DensitySandwich, IdentityWithUnitKappa) {
  RngStream rng(61, 0);
  const auto rep = gaussian_density_sandwich_check(Covariance::identity(3), 1.0, 1000, rng);
  EXPECT_TRUE(rep.precondition_ok);
  EXPECT_EQ(rep.violations, 0u);
  // The three densities coincide: compare directly.
  const Vector x = Vector::Constant(3, 0.7);
  EXPECT_NEAR(log_gaussian_density(x, Covariance::identity(3)), log_isotropic_density(x, 1.0), 1e-14);
}

TEST(DensitySandwich, DiagonalWithinCap) {
  RngStream rng(62, 0);
  const auto rep = gaussian_density_sandwich_check(Covariance(diag2(2.0, 0.5)), 4.0, 10000, rng);
  EXPECT_TRUE(rep.passed());
  EXPECT_EQ(rep.points, 10000u);
}

TEST(DensitySandwich, ReportsPreconditionViolation) {
  RngStream rng(63, 0);
  const auto rep = gaussian_density_sandwich_check(Covariance(diag2(2.0, 0.5)), 2.0, 100, rng);
  EXPECT_FALSE(rep.precondition_ok);
  EXPECT_FALSE(rep.passed());
}

TEST(DensitySandwich, PropertyRandomCovariances) {
  RngStream rng(64, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_index(6));
    const double kappa = 1.0 + 20.0 * rng.uniform();
    const Covariance c = project_to_sk(random_spd(d, 3.0, rng), kappa);
    const auto rep = gaussian_density_sandwich_check(c, kappa, 500, rng);
    EXPECT_TRUE(rep.passed()) << "d=" << d << " kappa=" << kappa;
  }
}

TEST(DensitySandwich, LogDensityMatchesClosedForm) {
  // Independent oracle: explicit inverse and determinant.
  const Covariance c(diag2(2.0, 0.5));
  Vector x(2);
  x << 0.4, -1.1;
  const double quad = x.dot(c.matrix().inverse() * x);
  const double expected = -std::log(2.0 * M_PI) - 0.5 * quad;
  EXPECT_NEAR(log_gaussian_density(x, c), expected, 1e-13);
}

TEST(RandomOrthogonal, IsOrthogonal) {
  RngStream rng(71, 0);
  for (int d : {1, 2, 5, 12}) {
    const Matrix q = random_orthogonal(d, rng);
    EXPECT_LE((q.transpose() * q - Matrix::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-12);
  }
}
