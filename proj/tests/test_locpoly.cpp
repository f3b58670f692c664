#include "oracles.hpp"

#include <npinfer/errors.hpp>
#include <npinfer/locpoly.hpp>
#include <npinfer/normal.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

using namespace npinfer;

namespace {

const KernelSpec kEpa = KernelSpec::builtin(KernelName::Epanechnikov);
const KernelSpec kTri = KernelSpec::builtin(KernelName::Triangular);

struct Design
{
  std::vector<double> X, Y;
};

Design noisy_design(std::size_t n, unsigned seed, double lo = -1.0, double hi = 1.0)
{
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ux(lo, hi);
  std::normal_distribution<double> noise;
  Design d;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ux(gen);
    d.X.push_back(x);
    d.Y.push_back(std::sin(3.0 * x) + 0.3 * x * x + 0.4 * noise(gen));
  }
  return d;
}

std::vector<double> evaluate_at(const std::vector<double>& X, double (*f)(double))
{
  std::vector<double> Y(X.size());
  std::transform(X.begin(), X.end(), Y.begin(), f);
  return Y;
}

const VarianceMethod kMethods[] = { VarianceMethod{ VarianceKind::HC0, 3 },
                                    VarianceMethod{ VarianceKind::HC1, 3 },
                                    VarianceMethod{ VarianceKind::HC2, 3 },
                                    VarianceMethod{ VarianceKind::HC3, 3 },
                                    VarianceMethod{ VarianceKind::NN, 3 } };

bool close_rel(double got, double want, double tol)
{
  return std::abs(got - want) <= tol * std::max(std::abs(want), 1e-300) || got == want;
}

} // namespace

TEST(RegressionSample, ValidatesInput)
{
  EXPECT_THROW(RegressionSample({ 0.0, 1.0 }, { 1.0 }), std::invalid_argument);
  EXPECT_THROW(RegressionSample({ 0.0 }, { 1.0 }), std::invalid_argument);
  EXPECT_THROW(RegressionSample({ 0.0, NAN }, { 1.0, 2.0 }), std::invalid_argument);
}

TEST(LpFit, ReproducesLinearData)
{
  const auto d = noisy_design(80, 1);
  const auto Y = evaluate_at(d.X, [](double x) { return 2.0 * x + 1.0; });
  for (double x : { -0.6, 0.0, 0.35 }) {
    const auto fit = lp_fit(RegressionSample(d.X, Y), x, 1, 0.4, kEpa);
    EXPECT_NEAR(fit.m_hat(), 2.0 * x + 1.0, 1e-12);
    EXPECT_NEAR(fit.beta_hat(1), 2.0, 1e-11);
    for (double e : fit.residuals)
      EXPECT_EQ(e, 0.0);
  }
}

TEST(LpFit, ReproducesConstantForEveryDegree)
{
  const auto d = noisy_design(60, 2);
  const std::vector<double> Y(d.X.size(), -4.25);
  for (int p = 0; p <= 3; ++p)
    EXPECT_NEAR(lp_fit(RegressionSample(d.X, Y), 0.1, p, 0.6, kEpa).m_hat(), -4.25, 1e-12) << p;
}

TEST(LpFit, MatchesNormalEquationsOracle)
{
  for (unsigned seed = 0; seed < 10; ++seed) {
    const auto d = noisy_design(50, 100 + seed);
    for (int p : { 0, 1, 2 }) {
      const double x = -0.2 + 0.05 * seed, h = 0.7;
      const auto fit = lp_fit(RegressionSample(d.X, d.Y), x, p, h, kEpa);
      const Eigen::VectorXd want = oracle::normal_equations_fit(d.X, d.Y, x, p, h, kEpa);
      for (int j = 0; j <= p; ++j)
        EXPECT_LT(oracle::relative_error(fit.beta_hat(j), want(j)), 1e-10) << "seed " << seed << " p " << p;
    }
  }
}

TEST(LpFit, StoresDesignMatrices)
{
  const auto d = noisy_design(70, 3);
  const double x = 0.2, h = 0.5;
  const auto fit = lp_fit(RegressionSample(d.X, d.Y), x, 1, h, kEpa);
  double g00 = 0.0, g11 = 0.0, l0 = 0.0;
  std::size_t count = 0;
  for (double xi : d.X) {
    const double u = (xi - x) / h, w = kEpa(u) / h;
    g00 += w;
    g11 += w * u * u;
    l0 += w * u * u;
    count += w > 0.0;
  }
  const double n = static_cast<double>(d.X.size());
  EXPECT_NEAR(fit.G(0, 0), g00 / n, 1e-14);
  EXPECT_NEAR(fit.G(1, 1), g11 / n, 1e-14);
  EXPECT_NEAR(fit.Lambda1(0), l0 / n, 1e-14);
  EXPECT_EQ(fit.effective_n, count);
  EXPECT_NEAR((fit.G - fit.G.transpose()).norm(), 0.0, 1e-15);
}

TEST(LpFit, SingularDesignErrors)
{
  // Only one distinct covariate value in the window.
  EXPECT_THROW(lp_fit(RegressionSample({ 0.0, 0.0, 5.0 }, { 1.0, 2.0, 3.0 }), 0.0, 1, 0.5, kEpa), SingularDesign);
  EXPECT_THROW(lp_fit(RegressionSample({ 3.0, 4.0 }, { 1.0, 2.0 }), 0.0, 0, 0.5, kEpa), SingularDesign);
}

TEST(LpFit, RejectsBadArguments)
{
  const RegressionSample s({ 0.0, 1.0 }, { 1.0, 2.0 });
  EXPECT_THROW(lp_fit(s, 0.0, 1, 0.0, kEpa), std::invalid_argument);
  EXPECT_THROW(lp_fit(s, 0.0, -1, 1.0, kEpa), std::invalid_argument);
}

TEST(LpBias, ZeroForLowDegreeData)
{
  const auto d = noisy_design(90, 4);
  const auto Y = evaluate_at(d.X, [](double x) { return 2.0 * x + 1.0; });
  EXPECT_NEAR(lp_bias_estimate(RegressionSample(d.X, Y), 0.1, 1, 2, 0.5, 0.5, kEpa, kEpa), 0.0, 1e-12);
  const auto Yc = evaluate_at(d.X, [](double x) { return x * x - x; });
  EXPECT_NEAR(lp_bias_estimate(RegressionSample(d.X, Yc), 0.1, 2, 3, 0.6, 0.8, kEpa, kTri), 0.0, 1e-11);
}

TEST(LpBias, QuadraticDataCorrectedExactly)
{
  const auto d = noisy_design(120, 5);
  const auto Y = evaluate_at(d.X, [](double x) { return x * x; });
  const RegressionSample s(d.X, Y);
  for (double x : { -0.5, 0.0, 0.3 }) {
    const auto fit = lp_fit(s, x, 1, 0.4, kEpa);
    const double bias = lp_bias_estimate(s, x, 1, 2, 0.4, 0.7, kEpa, kTri);
    EXPECT_NEAR(fit.m_hat() - bias, x * x, 1e-12);
    // The estimate equals the true conditional bias h^2 e_0'G^{-1}Lambda.
    EXPECT_NEAR(bias, 0.16 * fit.G_inv.row(0).dot(fit.Lambda1), 1e-12);
  }
}

TEST(LpBias, HigherOrderCollapse)
{
  for (unsigned seed = 0; seed < 10; ++seed) {
    const auto d = noisy_design(150, 200 + seed);
    const RegressionSample s(d.X, d.Y);
    const int p = static_cast<int>(seed % 3);
    const double x = seed % 2 ? -1.0 : 0.25, h = 0.5;
    const double corrected = lp_fit(s, x, p, h, kEpa).m_hat() - lp_bias_estimate(s, x, p, p + 1, h, h, kEpa, kEpa);
    EXPECT_LT(oracle::relative_error(corrected, lp_fit(s, x, p + 1, h, kEpa).m_hat()), 1e-10);
  }
}

TEST(LpBias, RequiresHigherDegree)
{
  const auto d = noisy_design(40, 6);
  EXPECT_THROW(lp_bias_estimate(RegressionSample(d.X, d.Y), 0.0, 1, 1, 0.5, 0.5, kEpa, kEpa),
               std::invalid_argument);
}

TEST(ResidualWeights, ZeroForNoiseFreeData)
{
  const auto d = noisy_design(100, 7);
  const auto Y = evaluate_at(d.X, [](double x) { return 0.5 * x * x - x + 3.0; });
  const RegressionSample s(d.X, Y);
  const auto fit = lp_fit(s, 0.2, 2, 0.6, kEpa);
  for (const auto& m : kMethods) {
    if (m.kind == VarianceKind::NN)
      continue;
    for (double v : lp_residual_weights(fit, m, s))
      EXPECT_EQ(v, 0.0) << to_string(m.kind);
  }
}

TEST(ResidualWeights, NearestNeighborSingle)
{
  const RegressionSample s({ 0.0, 0.1, 5.0 }, { 2.0, 0.0, 7.0 });
  const auto fit = lp_fit(s, 0.0, 0, 0.5, kEpa);
  const auto v = lp_residual_weights(fit, { VarianceKind::NN, 1 }, s);
  EXPECT_DOUBLE_EQ(v[0], 2.0);
  EXPECT_EQ(v[2], 0.0);
}

TEST(ResidualWeights, NearestNeighborMatchesDirectFormula)
{
  const auto d = noisy_design(40, 8);
  const RegressionSample s(d.X, d.Y);
  const auto fit = lp_fit(s, 0.0, 1, 0.6, kEpa);
  const auto v = lp_residual_weights(fit, { VarianceKind::NN, 3 }, s);
  for (std::size_t i = 0; i < d.X.size(); ++i) {
    std::vector<std::size_t> idx(d.X.size());
    std::iota(idx.begin(), idx.end(), 0);
    idx.erase(idx.begin() + static_cast<long>(i));
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(d.X[a] - d.X[i]) < std::abs(d.X[b] - d.X[i]);
    });
    const double mean = (d.Y[idx[0]] + d.Y[idx[1]] + d.Y[idx[2]]) / 3.0;
    const double want = std::abs(d.X[i]) < 0.6 ? 0.75 * std::pow(d.Y[i] - mean, 2) : 0.0;
    EXPECT_NEAR(v[i], want, 1e-14) << i;
  }
}

TEST(ResidualWeights, HcOrdering)
{
  const auto d = noisy_design(120, 9);
  const RegressionSample s(d.X, d.Y);
  const auto fit = lp_fit(s, -0.1, 1, 0.3, kEpa);
  const auto q = leverages(fit);
  const auto hc0 = lp_residual_weights(fit, { VarianceKind::HC0, 3 }, s);
  const auto hc2 = lp_residual_weights(fit, { VarianceKind::HC2, 3 }, s);
  const auto hc3 = lp_residual_weights(fit, { VarianceKind::HC3, 3 }, s);
  for (std::size_t i = 0; i < hc0.size(); ++i) {
    EXPECT_GE(hc3[i], hc2[i]);
    EXPECT_GE(hc2[i], hc0[i]);
  }
  for (std::size_t k = 0; k < fit.window.size(); ++k) {
    const std::size_t i = fit.window[k];
    EXPECT_NEAR(hc3[i], hc0[i] / std::pow(1.0 - q[k], 2), 1e-15 * std::max(1.0, hc3[i]));
  }
}

TEST(ResidualWeights, LeveragesMatchOracleProjection)
{
  const auto d = noisy_design(60, 10);
  const auto fit = lp_fit(RegressionSample(d.X, d.Y), 0.3, 2, 0.5, kEpa);
  const auto q = leverages(fit);
  // Q_ii = r_i' (R'WR)^{-1} r_i W_ii with r_i = powers of (X_i - x).
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 3);
  for (double xi : d.X) {
    Eigen::Vector3d r(1.0, xi - 0.3, std::pow(xi - 0.3, 2));
    A += kEpa((xi - 0.3) / 0.5) / 0.5 * r * r.transpose();
  }
  for (std::size_t k = 0; k < fit.window.size(); ++k) {
    const double xi = d.X[fit.window[k]];
    Eigen::Vector3d r(1.0, xi - 0.3, std::pow(xi - 0.3, 2));
    EXPECT_NEAR(q[k], r.dot(A.ldlt().solve(r)) * kEpa((xi - 0.3) / 0.5) / 0.5, 1e-12);
  }
}

TEST(ResidualWeights, LeverageOneRejected)
{
  // Two in-window points with a linear fit interpolate exactly: Q_ii = 1.
  const RegressionSample s({ -0.1, 0.1, 3.0, 4.0 }, { 1.0, 2.0, 0.0, 0.0 });
  const auto fit = lp_fit(s, 0.0, 1, 0.5, kEpa);
  EXPECT_THROW(lp_residual_weights(fit, { VarianceKind::HC3, 3 }, s), LeverageOne);
  EXPECT_THROW(lp_residual_weights(fit, { VarianceKind::HC2, 3 }, s), LeverageOne);
}

TEST(ResidualWeights, NearestNeighborNeedsEnoughData)
{
  const RegressionSample s({ 0.0, 0.1 }, { 1.0, 2.0 });
  const auto fit = lp_fit(s, 0.0, 0, 0.5, kEpa);
  EXPECT_THROW(lp_residual_weights(fit, { VarianceKind::NN, 3 }, s), std::invalid_argument);
  EXPECT_THROW(VarianceMethod::from_name("nn", 0), std::invalid_argument);
  EXPECT_THROW(VarianceMethod::from_name("hc9"), std::invalid_argument);
}

TEST(LpVariance, ZeroMeat)
{
  const auto d = noisy_design(80, 11);
  const RegressionSample s(d.X, d.Y);
  const auto fp = lp_fit(s, 0.0, 1, 0.5, kEpa);
  const auto fq = lp_fit(s, 0.0, 2, 0.5, kEpa);
  const std::vector<double> zeros(d.X.size(), 0.0);
  EXPECT_EQ(lp_variance_us(fp, zeros), 0.0);
  EXPECT_EQ(lp_variance_rbc(fp, fq, 1.0, zeros), 0.0);
}

TEST(LpVariance, RbcWithRhoZeroEqualsUs)
{
  const auto d = noisy_design(80, 12);
  const RegressionSample s(d.X, d.Y);
  const auto fp = lp_fit(s, 0.0, 1, 0.5, kEpa);
  const auto fq = lp_fit(s, 0.0, 2, 0.7, kEpa);
  const auto v = lp_residual_weights(fp, { VarianceKind::HC0, 3 }, s);
  EXPECT_EQ(lp_variance_rbc(fp, fq, 0.0, v), lp_variance_us(fp, v));
}

TEST(LpVariance, SandwichMatchesOracleWeights)
{
  const auto d = noisy_design(90, 13);
  const RegressionSample s(d.X, d.Y);
  const double x = 0.15, h = 0.45, b = 0.6;
  const auto fp = lp_fit(s, x, 1, h, kEpa);
  const auto fq = lp_fit(s, x, 2, b, kEpa);
  const auto v = lp_residual_weights(fq, { VarianceKind::HC3, 3 }, s);
  const Eigen::VectorXd wp = oracle::normal_equations_weights(d.X, x, 1, h, kEpa, 0);
  const Eigen::VectorXd wp1 = oracle::normal_equations_weights(d.X, x, 1, h, kEpa, 0);
  const Eigen::VectorXd wq2 = oracle::normal_equations_weights(d.X, x, 2, b, kEpa, 2);
  const double n = static_cast<double>(d.X.size());
  double us = 0.0;
  for (int i = 0; i < wp.size(); ++i)
    us += wp(i) * wp(i) * v[i];
  EXPECT_LT(oracle::relative_error(lp_variance_us(fp, v), n * h * us), 1e-10);

  // m_hat - B_hat = sum_i (w_p,i - h^2 c w_q2,i) Y_i where c = e_0'G^{-1}Lambda.
  const double c = fp.G_inv.row(0).dot(fp.Lambda1);
  double rbc = 0.0;
  for (int i = 0; i < wp.size(); ++i) {
    const double w = wp1(i) - h * h * c * wq2(i);
    rbc += w * w * v[i];
  }
  EXPECT_LT(oracle::relative_error(lp_variance_rbc(fp, fq, h / b, v), n * h * rbc), 1e-10);
}

TEST(LpVariance, ConditionalMonteCarloOracle)
{
  const std::size_t n = 300, reps = 10000;
  const auto d = noisy_design(n, 14);
  const double x = 0.1, h = 0.4, b = 0.5;
  std::vector<double> mean(d.X.size());
  for (std::size_t i = 0; i < n; ++i)
    mean[i] = std::sin(3.0 * d.X[i]);
  const RegressionSample base(d.X, mean);
  const auto fp = lp_fit(base, x, 1, h, kEpa);
  const auto fq = lp_fit(base, x, 2, b, kEpa);
  const std::vector<double> ones(n, 1.0);
  const double want_us = lp_variance_us(fp, ones);
  const double want_rbc = lp_variance_rbc(fp, fq, h / b, ones);

  // The estimators are linear in Y, so redraws only need the weights.
  const auto wp = coefficient_weights(fp, 0);
  const auto wr = rbc_weights(fp, fq, h / b);
  std::mt19937_64 gen(15);
  std::normal_distribution<double> noise;
  double s1 = 0.0, s2 = 0.0, r1 = 0.0, r2 = 0.0;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    double a = 0.0, c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = mean[i] + noise(gen);
      a += wp[i] * y;
      c += wr[i] * y;
    }
    s1 += a;
    s2 += a * a;
    r1 += c;
    r2 += c * c;
  }
  const double var_us = (s2 - s1 * s1 / reps) / (reps - 1);
  const double var_rbc = (r2 - r1 * r1 / reps) / (reps - 1);
  EXPECT_LT(oracle::relative_error(n * h * var_us, want_us), 0.03);
  EXPECT_LT(oracle::relative_error(n * h * var_rbc, want_rbc), 0.03);
}

TEST(LpInfer, NoiseFreeLinearDegenerate)
{
  const auto d = noisy_design(100, 16);
  const auto Y = evaluate_at(d.X, [](double x) { return 2.0 * x + 1.0; });
  const auto r = lp_infer(RegressionSample(d.X, Y), 0.2, 1, 2, 0.5, 0.5, kEpa, kEpa, 0.05);
  EXPECT_TRUE(r.degenerate);
  for (auto f : { Flavor::US, Flavor::BC, Flavor::RBC }) {
    EXPECT_EQ(r.intervals.get(f).half_width, 0.0);
    EXPECT_NEAR(r.intervals.get(f).center, 1.4, 1e-12);
  }
}

TEST(LpInfer, BoundaryPointUsesWindowAndReproducesLine)
{
  const auto d = noisy_design(200, 17, 0.0, 1.0);
  const auto Y = evaluate_at(d.X, [](double x) { return 1.0 - 3.0 * x; });
  const auto r = lp_infer(RegressionSample(d.X, Y), 0.0, 1, 2, 0.3, 0.3, kEpa, kEpa, 0.05);
  EXPECT_TRUE(r.boundary_flag);
  EXPECT_NEAR(r.m_hat, 1.0, 1e-12);
  EXPECT_NEAR(r.m_hat - r.bias_hat, 1.0, 1e-12);
  for (std::size_t k = 0; k < r.fit_p.window.size(); ++k)
    EXPECT_LT(d.X[r.fit_p.window[k]], 0.3);
}

TEST(LpInfer, IntervalStructure)
{
  const auto d = noisy_design(200, 18);
  const auto r = lp_infer(RegressionSample(d.X, d.Y), 0.0, 1, 2, 0.4, 0.5, kEpa, kEpa, 0.1);
  EXPECT_FALSE(r.boundary_flag);
  EXPECT_EQ(r.intervals.us.center, r.m_hat);
  EXPECT_EQ(r.intervals.bc.center, r.m_hat - r.bias_hat);
  EXPECT_EQ(r.intervals.rbc.center, r.intervals.bc.center);
  EXPECT_EQ(r.intervals.us.half_width, r.intervals.bc.half_width);
  EXPECT_NEAR(r.intervals.rbc.half_width,
              two_sided_critical_value(0.1) * r.sigma_rbc / std::sqrt(200 * 0.4),
              1e-15);
  EXPECT_EQ(r.rho, 0.4 / 0.5);
}

TEST(LpInfer, RejectsBadArguments)
{
  const auto d = noisy_design(50, 19);
  const RegressionSample s(d.X, d.Y);
  EXPECT_THROW(lp_infer(s, 0.0, 1, 1, 0.5, 0.5, kEpa, kEpa, 0.05), std::invalid_argument);
  EXPECT_THROW(lp_infer(s, 0.0, 1, 2, 0.5, 0.0, kEpa, kEpa, 0.05), std::invalid_argument);
  EXPECT_THROW(lp_infer(s, 0.0, 1, 2, 0.5, 0.5, kEpa, kEpa, 1.5), std::invalid_argument);
}

TEST(LpInfer, AffineEquivarianceInY)
{
  std::mt19937_64 gen(20);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  for (int rep = 0; rep < 10; ++rep) {
    const auto d = noisy_design(150, 300 + rep);
    const double a = coef(gen), c = coef(gen);
    std::vector<double> Y2(d.Y);
    for (auto& y : Y2)
      y = a * y + c;
    for (const auto& m : kMethods) {
      const auto r0 = lp_infer(RegressionSample(d.X, d.Y), 0.1, 1, 2, 0.4, 0.4, kEpa, kEpa, 0.05, m);
      const auto r1 = lp_infer(RegressionSample(d.X, Y2), 0.1, 1, 2, 0.4, 0.4, kEpa, kEpa, 0.05, m);
      EXPECT_TRUE(close_rel(r1.m_hat, a * r0.m_hat + c, 1e-12)) << to_string(m.kind);
      EXPECT_TRUE(close_rel(r1.bias_hat, a * r0.bias_hat, 1e-11)) << to_string(m.kind);
      EXPECT_TRUE(close_rel(r1.sigma_us, std::abs(a) * r0.sigma_us, 1e-12)) << to_string(m.kind);
      EXPECT_TRUE(close_rel(r1.sigma_rbc, std::abs(a) * r0.sigma_rbc, 1e-12)) << to_string(m.kind);
    }
  }
}

TEST(LpInfer, TranslationEquivarianceInX)
{
  const auto d = noisy_design(150, 21);
  for (double shift : { -7.5, 0.25, 100.0 }) {
    std::vector<double> X2(d.X);
    for (auto& v : X2)
      v += shift;
    for (const auto& m : kMethods) {
      const auto r0 = lp_infer(RegressionSample(d.X, d.Y), -0.2, 1, 2, 0.4, 0.5, kEpa, kEpa, 0.05, m);
      const auto r1 = lp_infer(RegressionSample(X2, d.Y), -0.2 + shift, 1, 2, 0.4, 0.5, kEpa, kEpa, 0.05, m);
      // Shifting reorders rounding in (X_i - x), so agreement is to rounding level.
      EXPECT_TRUE(close_rel(r1.m_hat, r0.m_hat, 1e-10));
      EXPECT_TRUE(close_rel(r1.bias_hat, r0.bias_hat, 1e-8));
      EXPECT_TRUE(close_rel(r1.sigma_us, r0.sigma_us, 1e-9));
      EXPECT_TRUE(close_rel(r1.sigma_rbc, r0.sigma_rbc, 1e-9));
    }
  }
}

TEST(LpInfer, PermutationInvariance)
{
  const auto d = noisy_design(150, 22);
  std::vector<std::size_t> order(d.X.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(23));
  std::vector<double> X2, Y2;
  for (auto i : order) {
    X2.push_back(d.X[i]);
    Y2.push_back(d.Y[i]);
  }
  for (const auto& m : kMethods) {
    const auto r0 = lp_infer(RegressionSample(d.X, d.Y), 0.3, 1, 2, 0.4, 0.4, kEpa, kEpa, 0.05, m);
    const auto r1 = lp_infer(RegressionSample(X2, Y2), 0.3, 1, 2, 0.4, 0.4, kEpa, kEpa, 0.05, m);
    EXPECT_TRUE(close_rel(r1.m_hat, r0.m_hat, 1e-12));
    EXPECT_TRUE(close_rel(r1.bias_hat, r0.bias_hat, 1e-10));
    EXPECT_TRUE(close_rel(r1.sigma_us, r0.sigma_us, 1e-12));
    EXPECT_TRUE(close_rel(r1.sigma_rbc, r0.sigma_rbc, 1e-12));
  }
}

TEST(LpInfer, RbcVarianceCollapsesToHigherOrderSandwich)
{
  const auto d = noisy_design(200, 24);
  const RegressionSample s(d.X, d.Y);
  for (double x : { -1.0, 0.0, 0.6 }) {
    const auto r = lp_infer(s, x, 1, 2, 0.5, 0.5, kEpa, kEpa, 0.05, { VarianceKind::HC3, 3 });
    const auto vq = lp_residual_weights(r.fit_q, { VarianceKind::HC3, 3 }, s);
    EXPECT_LT(oracle::relative_error(r.sigma_rbc * r.sigma_rbc, lp_variance_us(r.fit_q, vq)), 1e-10);
  }
}
