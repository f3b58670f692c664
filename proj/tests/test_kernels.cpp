#include "oracles.hpp"

#include <npinfer/kernels.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

using namespace npinfer;

namespace {

const KernelName kLevelKernels[] = { KernelName::Uniform,      KernelName::Triangular,
                                     KernelName::Epanechnikov, KernelName::MinVarOrder4,
                                     KernelName::MseOptOrder4 };

const KernelName kAllKernels[] = { KernelName::Uniform,      KernelName::Triangular,
                                   KernelName::Epanechnikov, KernelName::MinVarOrder4,
                                   KernelName::MseOptOrder4, KernelName::MinVarDeriv2,
                                   KernelName::MseOptDeriv2 };

} // namespace

TEST(EvalKernel, EpanechnikovAtZero)
{
  EXPECT_DOUBLE_EQ(eval_kernel(KernelSpec::builtin(KernelName::Epanechnikov), 0.0), 0.75);
}

TEST(EvalKernel, ZeroOutsideSupport)
{
  for (auto k : kAllKernels) {
    const auto K = KernelSpec::builtin(k);
    EXPECT_EQ(eval_kernel(K, 1.5), 0.0) << K.label();
    EXPECT_EQ(eval_kernel(K, -1.0001), 0.0) << K.label();
  }
}

TEST(EvalKernel, MinVarSecondDerivativeKernelAtZero)
{
  EXPECT_DOUBLE_EQ(eval_kernel(KernelSpec::builtin(KernelName::MinVarDeriv2), 0.0), -3.75);
}

TEST(KernelMomentMu, ClosedFormValues)
{
  const auto epa = KernelSpec::builtin(KernelName::Epanechnikov);
  EXPECT_NEAR(kernel_moment_mu(epa, 2, TruncatedSupport::full()), 0.1, 1e-15);
  EXPECT_NEAR(kernel_moment_mu(epa, 1, TruncatedSupport::full()), 0.0, 1e-15);
  EXPECT_NEAR(kernel_moment_mu(KernelSpec::builtin(KernelName::Uniform), 2, TruncatedSupport::full()),
              1.0 / 6.0,
              1e-15);
}

TEST(KernelMomentMu, LevelKernelsIntegrateToOne)
{
  for (auto k : kLevelKernels)
    EXPECT_NEAR(kernel_moment_mu(KernelSpec::builtin(k), 0, TruncatedSupport::full()), 1.0, 1e-14)
      << KernelSpec::builtin(k).label();
}

TEST(KernelMomentMu, OddMomentsVanishOnSymmetricSupport)
{
  for (auto k : kAllKernels)
    for (int j = 1; j <= 8; j += 2)
      EXPECT_NEAR(kernel_moment_mu(KernelSpec::builtin(k), j, TruncatedSupport::full()), 0.0, 1e-14)
        << KernelSpec::builtin(k).label() << " j=" << j;
}

TEST(KernelMomentMu, KernelOrderDefinition)
{
  struct Case
  {
    KernelName name;
    int order;
  };
  for (auto [name, order] : { Case{ KernelName::Uniform, 2 },
                              Case{ KernelName::Triangular, 2 },
                              Case{ KernelName::Epanechnikov, 2 },
                              Case{ KernelName::MinVarOrder4, 4 },
                              Case{ KernelName::MseOptOrder4, 4 } }) {
    const auto K = KernelSpec::builtin(name);
    EXPECT_EQ(K.order(), order) << K.label();
    for (int j = 1; j < order; ++j)
      EXPECT_NEAR(kernel_raw_moment(K, j), 0.0, 1e-14) << K.label() << " j=" << j;
    EXPECT_GT(std::abs(kernel_raw_moment(K, order)), 1e-3) << K.label();
  }
}

TEST(KernelMomentMu, DerivativeKernelsReproduceTheirTargetMoment)
{
  // A kernel estimating f^(2) integrates u^2 K(u) / 2 to one and kills the
  // lower moments.
  for (auto k : { KernelName::MinVarDeriv2, KernelName::MseOptDeriv2 }) {
    const auto L = KernelSpec::builtin(k);
    EXPECT_EQ(L.derivative_target(), 2);
    EXPECT_NEAR(kernel_moment_mu(L, 0), 0.0, 1e-14);
    EXPECT_NEAR(kernel_moment_mu(L, 2), 1.0, 1e-14);
  }
}

TEST(KernelMomentMu, AgreesWithGaussLegendreOracle)
{
  const TruncatedSupport ranges[] = { { -1.0, 1.0 }, { 0.0, 1.0 }, { -1.0, 0.3 }, { -0.4, 0.7 } };
  for (auto k : kAllKernels) {
    const auto K = KernelSpec::builtin(k);
    for (const auto& t : ranges)
      for (int j = 0; j <= 6; ++j) {
        EXPECT_NEAR(kernel_moment_mu(K, j, t), oracle::mu(K, j, t.lower, t.upper), 1e-10)
          << K.label() << " j=" << j << " [" << t.lower << "," << t.upper << "]";
        if (j >= 1)
          EXPECT_NEAR(kernel_moment_theta(K, j, t), oracle::theta(K, j, t.lower, t.upper), 1e-10)
            << K.label() << " j=" << j;
      }
  }
}

TEST(KernelMomentMu, OddTruncatedMomentSurvivesAtBoundary)
{
  const auto epa = KernelSpec::builtin(KernelName::Epanechnikov);
  const double m1 = kernel_moment_mu(epa, 1, TruncatedSupport::make(0.0, 1.0));
  EXPECT_GT(std::abs(m1), 0.1);
  EXPECT_NEAR(m1, -3.0 / 16.0, 1e-15);
}

TEST(KernelMomentMu, RejectsNegativeOrder)
{
  EXPECT_THROW(kernel_moment_mu(KernelSpec::builtin(KernelName::Uniform), -1), std::invalid_argument);
}

TEST(KernelMomentTheta, EpanechnikovPowers)
{
  const auto epa = KernelSpec::builtin(KernelName::Epanechnikov);
  EXPECT_NEAR(kernel_moment_theta(epa, 2, TruncatedSupport::full()), 0.6, 1e-15);
  EXPECT_NEAR(kernel_moment_theta(epa, 3, TruncatedSupport::full()), 27.0 / 70.0, 1e-15);
  EXPECT_NEAR(kernel_moment_theta(epa, 4, TruncatedSupport::full()), 9.0 / 35.0, 1e-15);
}

TEST(KernelMomentTheta, RejectsOrderZero)
{
  EXPECT_THROW(kernel_moment_theta(KernelSpec::builtin(KernelName::Uniform), 0), std::invalid_argument);
}

TEST(TruncatedSupport, RejectsEmptyRange)
{
  EXPECT_THROW(TruncatedSupport::make(0.5, 0.5), std::invalid_argument);
  EXPECT_THROW(TruncatedSupport::make(0.5, -0.5), std::invalid_argument);
}

TEST(InducedKernel, UniformWithMinVarDerivativeIsMinVarOrder4)
{
  const auto K = KernelSpec::builtin(KernelName::Uniform);
  const auto L = KernelSpec::builtin(KernelName::MinVarDeriv2);
  for (int i = 0; i <= 1000; ++i) {
    const double u = -1.0 + 2.0 * i / 1000.0;
    EXPECT_NEAR(induced_kernel_M(K, L, 2, 1.0, u), 0.375 * (3.0 - 5.0 * u * u), 1e-12) << u;
  }
}

TEST(InducedKernel, RhoZeroReproducesK)
{
  const auto L = KernelSpec::builtin(KernelName::MseOptDeriv2);
  for (auto k : kLevelKernels) {
    const auto K = KernelSpec::builtin(k);
    for (double u : { -0.9, -0.3, 0.0, 0.4, 0.99 })
      EXPECT_EQ(induced_kernel_M(K, L, 2, 0.0, u), K(u)) << K.label();
  }
}

TEST(InducedKernel, EpanechnikovWithMinVarDerivativeAtZero)
{
  EXPECT_NEAR(induced_kernel_M(KernelSpec::builtin(KernelName::Epanechnikov),
                               KernelSpec::builtin(KernelName::MinVarDeriv2),
                               2,
                               1.0,
                               0.0),
              1.125,
              1e-15);
}

TEST(InducedKernel, RejectsNegativeRho)
{
  const auto K = KernelSpec::builtin(KernelName::Epanechnikov);
  EXPECT_THROW(induced_kernel_M(K, K, 2, -0.1, 0.0), std::invalid_argument);
  EXPECT_THROW(induced_kernel(K, K, 2, -0.1), std::invalid_argument);
}

TEST(InducedKernel, LevelKernelLIsDifferentiated)
{
  // With a level kernel L the correction uses its second derivative.
  const auto K = KernelSpec::builtin(KernelName::Epanechnikov);
  const auto L = KernelSpec::builtin(KernelName::Epanechnikov);
  EXPECT_NEAR(induced_kernel_M(K, L, 2, 1.0, 0.2), K(0.2) - 0.1 * (-1.5), 1e-15);
}

TEST(InducedKernel, SpecMatchesPointwiseValuesAndIsLevelKernel)
{
  const auto K = KernelSpec::builtin(KernelName::Epanechnikov);
  const auto L = KernelSpec::builtin(KernelName::MseOptDeriv2);
  for (double rho : { 0.5, 1.0, 2.0 }) {
    const auto M = induced_kernel(K, L, 2, rho);
    for (double u = -2.0; u <= 2.0; u += 0.01)
      EXPECT_NEAR(M(u), induced_kernel_M(K, L, 2, rho, u), 1e-12) << rho << " " << u;
    EXPECT_NEAR(kernel_moment_mu(M, 0), 1.0, 1e-12);
    // The correction removes the second moment: M is a fourth-order kernel.
    EXPECT_NEAR(kernel_moment_mu(M, 2), 0.0, 1e-12) << rho;
  }
}

TEST(KernelDerivative, QuadraticSecondDerivativeIsConstant)
{
  const auto L = KernelSpec::custom({ 0.75, 0.0, -0.75 });
  EXPECT_NEAR(kernel_derivative(L, 2, 0.5), -1.5, 1e-15);
  EXPECT_NEAR(kernel_derivative(L, 2, -0.9), -1.5, 1e-15);
  EXPECT_EQ(kernel_derivative(L, 2, 1.5), 0.0);
}

TEST(KernelDerivative, ZerothOrderIsEvaluation)
{
  for (auto k : kAllKernels) {
    const auto K = KernelSpec::builtin(k);
    for (double u : { -1.2, -0.7, 0.0, 0.25, 0.8 })
      EXPECT_EQ(kernel_derivative(K, 0, u), eval_kernel(K, u)) << K.label();
  }
}

TEST(KernelDerivative, UniformFirstDerivativeVanishes)
{
  EXPECT_EQ(kernel_derivative(KernelSpec::builtin(KernelName::Uniform), 1, 0.5), 0.0);
}

TEST(KernelDerivative, MatchesFiniteDifferences)
{
  for (auto k : kAllKernels) {
    const auto K = KernelSpec::builtin(k);
    for (double u : { -0.7, -0.2, 0.3, 0.6 }) {
      const double fd = oracle::central_difference([&](double t) { return K(t); }, u, 1e-5);
      EXPECT_NEAR(kernel_derivative(K, 1, u), fd, 1e-6) << K.label() << " " << u;
    }
  }
}

TEST(KernelSpec, CustomNormalizationChecked)
{
  EXPECT_NO_THROW(KernelSpec::custom({ 0.75, 0.0, -0.75 }));
  EXPECT_THROW(KernelSpec::custom({ 1.0 }), std::invalid_argument);
  EXPECT_THROW(KernelSpec::custom({ 0.75, 0.0, -0.7 }), std::invalid_argument);
}

TEST(KernelSpec, NamesRoundTrip)
{
  for (auto k : kAllKernels) {
    const auto K = KernelSpec::builtin(k);
    EXPECT_EQ(KernelSpec::from_name(K.label()).name(), k);
  }
  EXPECT_THROW(KernelSpec::from_name("gaussian"), std::invalid_argument);
}
