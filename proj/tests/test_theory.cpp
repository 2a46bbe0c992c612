#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "onefifth/objectives.hpp"
#include "onefifth/strategies.hpp"
#include "onefifth/theory.hpp"

using namespace onefifth;

namespace {

// Standard normal CDF by composite Simpson integration of the density over
// [-12, x]: independent of erfc.
double simpson_normal_cdf(double x) {
  const double lo = -12.0;
  if (x <= lo) return 0.0;
  const int n = 20000;
  const double h = (x - lo) / n;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
  double s = pdf(lo) + pdf(x);
  for (int i = 1; i < n; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * pdf(lo + i * h);
  return s * h / 3.0;
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST(NormalCdf, AgreesWithQuadrature) {
  for (double x : {-5.0, -2.0, -1.5, -1.0, -0.25, 0.0, 0.5, 1.0, 3.0})
    EXPECT_NEAR(normal_cdf(x), simpson_normal_cdf(x), 1e-10) << x;
}

TEST(ChiSquareCdf, ClosedForms) {
  for (double x : {0.1, 0.5, 1.0, 2.0, 5.0, 20.0}) {
    EXPECT_NEAR(chi_square_cdf(x, 1), std::erf(std::sqrt(x / 2.0)), 1e-13);
    EXPECT_NEAR(chi_square_cdf(x, 2), 1.0 - std::exp(-x / 2.0), 1e-13);
    EXPECT_NEAR(chi_square_cdf(x, 4), 1.0 - std::exp(-x / 2.0) * (1.0 + x / 2.0), 1e-13);
  }
  EXPECT_EQ(chi_square_cdf(0.0, 3), 0.0);
  EXPECT_EQ(chi_square_cdf(INFINITY, 3), 1.0);
}

TEST(NormalizedStepSize, Examples) {
  const Objective s = make_sphere(2);
  StrategyState st = StrategyState::initial(s, vec({1.0, 0.0}), 1.0);
  EXPECT_NEAR(normalized_step_size(st, s), 1.0 / std::sqrt(M_PI), 1e-15);
  st.sigma = 2.0;
  EXPECT_NEAR(normalized_step_size(st, s), 2.0 / std::sqrt(M_PI), 1e-15);
  st.sigma = 1.0;
  st.mean = vec({2.0, 0.0});
  EXPECT_NEAR(normalized_step_size(st, s), 0.5 / std::sqrt(M_PI), 1e-15);
  st.mean = vec({0.0, 0.0});
  EXPECT_THROW(normalized_step_size(st, s), std::domain_error);
}

TEST(McSuccess, SphereSmallStepIsOneHalf) {
  RngStream rng(1, 0);
  const Objective s = make_sphere(10);
  const auto e = mc_success_probability(s, Vector::Ones(10), Covariance::identity(10), 1e-4, 0.0, 100000, rng);
  EXPECT_NEAR(e.probability, 0.5, 0.01);
  EXPECT_GT(e.std_error, 0.0);
}

TEST(McSuccess, LinfSmallStepIsOneQuarter) {
  RngStream rng(2, 0);
  const Objective l = make_linf(2);
  const auto e = mc_success_probability(l, vec({0.3, 0.3}), Covariance::identity(2), 1e-4, 0.0, 100000, rng);
  EXPECT_NEAR(e.probability, 0.25, 0.01);
}

TEST(McSuccess, RateOneIsImpossibleAndErrors) {
  RngStream rng(3, 0);
  const Objective s = make_sphere(3);
  EXPECT_EQ(mc_success_probability(s, Vector::Ones(3), Covariance::identity(3), 0.1, 1.0, 1000, rng).probability,
            0.0);
  EXPECT_THROW(mc_success_probability(with_monte_carlo_suboptimality(s), Vector::Ones(3), Covariance::identity(3),
                                      0.1, 0.0, 10, rng),
               UnsupportedError);
  EXPECT_THROW(mc_success_probability(s, Vector::Zero(3), Covariance::identity(3), 0.1, 0.0, 10, rng),
               std::domain_error);
}

TEST(SphereSuccess, AgreesWithGenericEstimator) {
  for (int d : {2, 10}) {
    const double vd = unit_ball_root(d);
    for (double c : {0.1, 1.0}) {
      for (double rr : {0.0, 0.1 / d}) {
        const double sbar = c / (d * vd);
        RngStream a(4, static_cast<std::uint64_t>(d));
        RngStream b(5, static_cast<std::uint64_t>(d));
        const auto e1 = sphere_success_probability(sbar, rr, d, 100000, a);
        Vector m = Vector::Zero(d);
        m[1] = 3.0;
        const auto e2 = mc_success_probability(make_sphere(d), m, Covariance::identity(d), sbar, rr, 100000, b);
        const double se = std::hypot(e1.std_error, e2.std_error);
        EXPECT_LE(std::abs(e1.probability - e2.probability), 3.0 * se) << d << ' ' << c << ' ' << rr;
      }
    }
  }
}

TEST(SphereSuccess, LargeStepAndMonotonicity) {
  RngStream rng(6, 0);
  const int d = 10;
  const double base = 1.0 / (d * unit_ball_root(d));
  EXPECT_LT(sphere_success_probability(1e3 * base, 0.0, d, 100000, rng).probability, 0.01);
  const auto a = sphere_success_probability(base, 0.0, d, 100000, rng);
  const auto b = sphere_success_probability(2.0 * base, 0.0, d, 100000, rng);
  EXPECT_GT(a.probability - b.probability, 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST(SphereSuccessLimit, Values) {
  EXPECT_NEAR(sphere_success_limit(2.0, 0.0), 0.158655, 1e-6);
  EXPECT_NEAR(sphere_success_limit(1.0, 1.0), 0.066807, 1e-6);
  EXPECT_NEAR(sphere_success_limit(1e-8, 0.0), 0.5, 1e-8);
  EXPECT_NEAR(sphere_success_limit(0.5, 0.0), simpson_normal_cdf(-0.25), 1e-10);
  EXPECT_THROW(sphere_success_limit(0.0, 0.0), std::invalid_argument);
}

TEST(SuccessBounds, ClosedFormUpper) {
  RngStream rng(7, 0);
  const auto b = success_probability_bounds(0.7, 0.7, 0.7, 1.0, 2, 1000, rng);
  EXPECT_NEAR(b.upper, 1.0 - std::exp(-0.5), 1e-12);
  EXPECT_NEAR(b.upper, 0.39347, 1e-5);
  const auto far = success_probability_bounds(1e6, 0.7, 0.7, 1.0, 2, 1000, rng);
  EXPECT_LT(far.upper, 1e-10);
  EXPECT_EQ(far.lower, 0.0);
  EXPECT_THROW(success_probability_bounds(1.0, 2.0, 1.0, 1.0, 2, 10, rng), std::invalid_argument);
}

TEST(SuccessBounds, SandwichOnSphere) {
  RngStream rng(8, 0);
  const int d = 5;
  const Objective s = make_sphere(d);
  const double cu = s.geometry->C_upper;
  for (double c : {0.5, 1.0, 2.0}) {
    const double sbar = c * cu;
    const auto b = success_probability_bounds(sbar, s.geometry->C_lower, cu, 1.0, d, 100000, rng);
    const auto e = sphere_success_probability(sbar, 0.0, d, 100000, rng);
    EXPECT_LE(b.lower - 3.0 * b.lower_std_error, e.probability + 3.0 * e.std_error) << c;
    EXPECT_LE(e.probability - 3.0 * e.std_error, b.upper) << c;
  }
}

TEST(SuccessBounds, SandwichOnRotatedEllipsoidWithCovariance) {
  RngStream rng(9, 0);
  const int d = 3;
  const Objective e = parse_objective("ellipsoid:kappa=20|rot=2", d);
  const double kappa = 4.0;
  for (int trial = 0; trial < 6; ++trial) {
    Matrix raw = Matrix::Identity(d, d);
    const Vector y = rng.standard_normal(d);
    raw += 3.0 * y * y.transpose();
    const Covariance cov(project_to_sk(raw, kappa));
    const Vector m = rng.standard_normal(d);
    const double sbar = std::exp(4.0 * rng.uniform() - 3.0);
    const auto b = success_probability_bounds(sbar, e.geometry->C_lower, e.geometry->C_upper, kappa, d, 50000, rng);
    const auto p = mc_success_probability(e, m, cov, sbar, 0.0, 50000, rng);
    EXPECT_LE(b.lower - 3.0 * b.lower_std_error, p.probability + 3.0 * p.std_error);
    EXPECT_LE(p.probability - 3.0 * p.std_error, b.upper);
  }
}

TEST(Potential, PenaltyBoundaries) {
  const PotentialParams p{0.4, std::exp(-1.0), std::exp(0.25)};
  const double au = std::exp(0.1);
  const double ad = std::exp(-0.025);
  const double fm = 3.0;
  EXPECT_NEAR(potential(fm, au * p.ell * fm, p, au, ad), std::log(fm), 1e-14);
  EXPECT_NEAR(potential(fm, au * p.ell * fm / M_E, p, au, ad), std::log(fm) + p.v, 1e-14);
  EXPECT_NEAR(potential(fm, ad * p.u * fm * M_E, p, au, ad), std::log(fm) + p.v, 1e-14);
  EXPECT_THROW(potential(0.0, 1.0, p, au, ad), std::domain_error);
}

TEST(Potential, StandardParametersAndValidation) {
  const double au = std::exp(0.1);
  const double ad = std::exp(-0.025);
  const PotentialParams p = PotentialParams::standard(10, au, ad);
  EXPECT_NEAR(p.v, 0.4, 1e-15);
  EXPECT_NEAR(std::log(p.ell), -1.0, 1e-14);
  EXPECT_NEAR(std::log(p.u), 0.25, 1e-14);
  EXPECT_NO_THROW(p.validate(au, ad));
  EXPECT_THROW((PotentialParams{0.4, 1.0, 1.0}).validate(au, ad), std::invalid_argument);
  EXPECT_THROW((PotentialParams{1.5, 0.1, 10.0}).validate(au, ad), std::invalid_argument);
}

TEST(Potential, NeverBelowLogSuboptimality) {
  RngStream rng(10, 0);
  const double au = std::exp(0.1);
  const double ad = std::exp(-0.025);
  const PotentialParams p = PotentialParams::standard(10, au, ad);
  for (int i = 0; i < 2000; ++i) {
    const double fm = std::exp(10.0 * rng.uniform() - 5.0);
    const double sbar = std::exp(12.0 * rng.uniform() - 6.0);
    const double v = potential(fm, sbar * fm, p, au, ad);
    const bool inside = sbar >= au * p.ell && sbar <= ad * p.u;
    EXPECT_GE(v, std::log(fm) - 1e-12);
    if (inside) EXPECT_NEAR(v, std::log(fm), 1e-12);
    else EXPECT_GT(v, std::log(fm));
  }
}

TEST(DriftBound, Arithmetic) {
  DriftBoundInputs in;
  in.A = 1.0;
  in.p_star_r = 0.5;
  in.v = 0.1;
  in.alpha_up = std::exp(0.8);
  in.alpha_down = std::exp(-0.2);
  in.p_ell = 0.3;
  in.p_u = 0.1;
  in.r = truncation_rate(in.A, in.v);
  EXPECT_NO_THROW(in.validate());
  EXPECT_NEAR(drift_bound_B(in), 0.01, 1e-14);
  in.v = 1e-12;
  EXPECT_LT(drift_bound_B(in), 1e-12);
  in.r = 0.3;
  EXPECT_THROW(in.validate(), std::invalid_argument);
}

TEST(DriftBound, TruncationRate) {
  EXPECT_NEAR(truncation_rate(1.0, 0.0), 1.0 - std::exp(-1.0), 1e-15);
  EXPECT_NEAR(truncation_rate(0.1, 0.5), 1.0 - std::exp(-0.2), 1e-15);
  EXPECT_THROW(truncation_rate(0.0, 0.5), std::invalid_argument);
}

TEST(HittingTimeBounds, UpperArithmetic) {
  EXPECT_NEAR(hitting_time_upper_bound(0.0, std::exp(-10.0), 1.0, 0.01), 1100.0, 1e-9);
  EXPECT_NEAR(hitting_time_upper_bound(2.0, std::exp(2.0), 1.0, 0.01), 100.0, 1e-9);
  const double a = hitting_time_upper_bound(0.5, 1e-3, 1.0, 0.05);
  const double b = hitting_time_upper_bound(0.5, 1e-3 / M_E, 1.0, 0.05);
  EXPECT_NEAR(b - a, 20.0, 1e-9);
  EXPECT_THROW(hitting_time_upper_bound(0.0, 0.1, 1.0, 0.0), std::domain_error);
  EXPECT_THROW(hitting_time_upper_bound(0.0, 0.1, 0.01, 0.1), std::domain_error);
}

TEST(HittingTimeBounds, LowerArithmetic) {
  EXPECT_NEAR(hitting_time_lower_bound(2, 1.0, M_E, 1.0), 0.0, 1e-15);
  EXPECT_NEAR(hitting_time_lower_bound(10, 1.0, std::exp(10.0), 1.0), 24.5, 1e-12);
  EXPECT_NEAR(hitting_time_lower_bound(2, 4.0, M_E, 1.0) + 0.5, 1.0 / 8.0, 1e-15);
  EXPECT_THROW(hitting_time_lower_bound(1, 1.0, 2.0, 1.0), std::invalid_argument);
}

TEST(SphereDriftSetup, RecipeGivesPositiveB) {
  const RngStream rng(11, 0);
  const int d = 10;
  const StrategyParams scaled = StrategyParams::dimension_scaled(d);
  const auto s = sphere_drift_setup(d, scaled.alpha_up, scaled.alpha_down, 20000, rng);
  EXPECT_NEAR(s.A, 0.1, 1e-15);
  EXPECT_GT(s.B, 0.0);
  EXPECT_LE(s.B, s.A);
  EXPECT_GE(s.B, s.B_floor * (1.0 - 1e-12));
  EXPECT_LT(s.ell, s.u);
  EXPECT_GE(s.u / s.ell, std::exp(0.5) * (1.0 - 1e-12));
  // p_0(ell) is close to p_ell by construction.
  RngStream check(12, 0);
  const auto pe = sphere_success_probability(s.ell, 0.0, d, 100000, check);
  EXPECT_NEAR(pe.probability, s.p_ell, 0.01);
}

TEST(SphereDriftSetup, TruncationLevelMustStayBelowLogRatio) {
  const RngStream rng(13, 0);
  const double au = std::exp(0.1);
  const double ad = std::exp(-0.025);
  // d log(alpha_up / alpha_down) = 1.25: A = 1/d is too coarse, A = 0.05 works.
  EXPECT_THROW(sphere_drift_setup(10, au, ad, 20000, rng, 0.1, 0.2), std::domain_error);
  const auto s = sphere_drift_setup(10, au, ad, 20000, rng, 0.1, 0.05);
  EXPECT_GT(s.B, 0.0);
  EXPECT_NEAR(s.r_prime, 1.0 - std::exp(-0.05 / 0.6), 1e-12);
}

TEST(SphereSuccessInverse, InvertsEstimator) {
  RngStream a(13, 0);
  RngStream b(14, 0);
  const int d = 6;
  const double sbar = sphere_success_inverse(0.3, d, 200000, a);
  EXPECT_NEAR(sphere_success_probability(sbar, 0.0, d, 200000, b).probability, 0.3, 0.005);
  EXPECT_THROW(sphere_success_inverse(0.6, d, 100, a), std::invalid_argument);
}

TEST(EstimatePStar, IsBelowEveryGridPoint) {
  const RngStream rng(15, 0);
  const auto p = estimate_p_star(0.1, 0.4, 0.01, 5, 20000, rng, 8);
  EXPECT_LE(p.value, p.grid_minimum);
  EXPECT_GE(p.argmin, 0.1);
  EXPECT_LE(p.argmin, 0.4 * (1.0 + 1e-12));
  // The success probability decreases in sigma_bar, so the minimum sits at the top.
  EXPECT_NEAR(p.argmin, 0.4, 1e-12);
}

TEST(DriftVerifiers, DeterministicDecrement) {
  RngStream rng(16, 0);
  const auto up = verify_additive_drift_upper(ProcessSpec::deterministic(0.125), 1.0, 0.125, 1.25, 0.0, 100, rng);
  EXPECT_TRUE(up.admissible);
  EXPECT_TRUE(up.passed);
  EXPECT_EQ(up.mean, 10.0);
  EXPECT_EQ(up.bound, 18.0);
  const auto lo = verify_additive_drift_lower(ProcessSpec::deterministic(0.125), 0.125, 1.25, 0.0, 100, rng);
  EXPECT_TRUE(lo.passed);
  EXPECT_EQ(lo.mean, 10.0);
  EXPECT_EQ(lo.bound, 2.0);
}

TEST(DriftVerifiers, TwoPointAndExponential) {
  RngStream rng(17, 0);
  const auto tp = verify_additive_drift_upper(ProcessSpec::two_point(1.0, 0.1), 1.0, 0.1, 1.0, 0.0, 10000, rng);
  EXPECT_TRUE(tp.passed);
  EXPECT_LE(tp.mean, 20.0);
  EXPECT_NEAR(tp.mean, 10.0, 0.5);  // geometric with p = 0.1
  const auto ex = verify_additive_drift_lower(ProcessSpec::exponential(0.1), 0.1, 1.0, 0.0, 10000, rng);
  EXPECT_TRUE(ex.passed);
  EXPECT_NEAR(ex.mean, 11.0, 0.3);  // 1 + Poisson(10)
  const auto zero = verify_additive_drift_lower(ProcessSpec::exponential(0.1), 0.1, 1.0, 1.0, 100, rng);
  EXPECT_EQ(zero.mean, 0.0);
  EXPECT_LE(zero.bound, 0.0);
  EXPECT_TRUE(zero.passed);
}

TEST(DriftVerifiers, RareJumpIsInadmissible) {
  RngStream rng(18, 0);
  const ProcessSpec rj = ProcessSpec::rare_jump(0.001);
  EXPECT_EQ(rj.untruncated_drift(), -1.0);
  EXPECT_NEAR(rj.truncated_drift(1.0), -0.001, 1e-15);
  const auto rep = verify_additive_drift_upper(rj, 1.0, 1.0, 1.0, 0.0, 100, rng);
  EXPECT_FALSE(rep.admissible);
  EXPECT_FALSE(rep.passed);
  EXPECT_EQ(rep.runs, 0u);
}

TEST(DriftVerifiers, ExponentialTruncatedDriftMatchesMonteCarlo) {
  RngStream rng(19, 0);
  const ProcessSpec ex = ProcessSpec::exponential(0.7);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += std::max(ex.sample(rng), -0.5);
  EXPECT_NEAR(sum / n, ex.truncated_drift(0.5), 3e-3);
}

TEST(DriftVerifiers, BuiltinSuite) {
  const auto checks = builtin_drift_checks(10000, RngStream(20, 0));
  EXPECT_EQ(checks.size(), 7u);
  for (const auto& c : checks) {
    EXPECT_EQ(c.report.admissible, c.expect_admissible) << c.name;
    if (c.expect_admissible) EXPECT_TRUE(c.report.passed) << c.theorem << ' ' << c.name;
  }
}

TEST(EmpiricalDrift, ConstantAndSphereRuns) {
  std::vector<Trace> traces;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    RngStream rng(21, rep);
    RunConfig c;
    c.m0 = Vector::Ones(10);
    c.max_evals = 500;
    traces.push_back(run("es", make_sphere(10), c, rng));
  }
  const auto zero = empirical_drift(traces, [](const TraceRow&) { return 1.0; });
  EXPECT_EQ(zero.mean, 0.0);
  const auto lf = empirical_drift(traces, [](const TraceRow& r) { return std::log(r.f_mu); });
  EXPECT_LT(lf.mean, 0.0);
  EXPECT_TRUE(lf.excludes_zero());
  EXPECT_EQ(lf.n, 20u * 500u);
  const auto head = empirical_drift(traces, [](const TraceRow& r) { return r.sigma; }, 11);
  EXPECT_EQ(head.n, 20u * 10u);
  std::vector<Trace> bad(1);
  bad[0].rows.resize(1);
  EXPECT_THROW(empirical_drift(bad, [](const TraceRow&) { return 0.0; }), std::invalid_argument);
}

TEST(AlmostSureRate, GeometricSequence) {
  Trace t;
  for (int i = 0; i <= 100; ++i) {
    TraceRow r;
    r.t = i;
    r.f_mu = 5.0 * std::exp(-0.03 * i);
    t.rows.push_back(r);
  }
  EXPECT_NEAR(almost_sure_rate(t, 0), -0.03, 1e-12);
  EXPECT_NEAR(almost_sure_rate(t, 50), -0.03, 1e-12);
  EXPECT_THROW(almost_sure_rate(t, 100), std::invalid_argument);
}

TEST(AlmostSureRate, IndependentOfInitialStepSize) {
  std::vector<double> rates;
  for (double s0 : {1e-4, 1.0, 1e4}) {
    RngStream rng(22, 0);
    RunConfig c;
    c.m0 = Vector::Ones(10);
    c.sigma0 = s0;
    c.max_evals = 6000;
    const Trace t = run("es", make_sphere(10), c, rng);
    rates.push_back(almost_sure_rate(t, 2000));
  }
  for (double r : rates) EXPECT_LT(r, 0.0);
  const auto [lo, hi] = std::minmax_element(rates.begin(), rates.end());
  EXPECT_LE(*lo / *hi, 2.0);
}

TEST(TheoryReport, SphereEntries) {
  TheoryInputs in;
  in.m0 = Vector::Ones(10);
  in.samples = 20000;
  const TheoryReport rep = theory_report(make_sphere(10), in, RngStream(23, 0));
  EXPECT_NEAR(*rep.get("p_target"), 0.2, 1e-12);
  ASSERT_TRUE(rep.get("drift_B"));
  EXPECT_GT(*rep.get("drift_B"), 0.0);
  ASSERT_TRUE(rep.get("hitting_time_upper_bound"));
  ASSERT_TRUE(rep.get("hitting_time_lower_bound"));
  EXPECT_LT(*rep.get("hitting_time_lower_bound"), *rep.get("hitting_time_upper_bound"));
  EXPECT_NE(rep.to_text().find("p_target=0.2"), std::string::npos);
  EXPECT_EQ(rep.to_csv().rfind("quantity,value,std_error,tag\n", 0), 0u);
}

TEST(TheoryReport, MonteCarloObjectiveSkipsAnalyticEntries) {
  TheoryInputs in;
  in.m0 = Vector::Ones(3);
  const TheoryReport rep = theory_report(with_monte_carlo_suboptimality(make_linf(3)), in, RngStream(24, 0));
  EXPECT_TRUE(rep.get("p_target"));
  EXPECT_FALSE(rep.get("V_0"));
}
