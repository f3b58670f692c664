#pragma once

#include "polynomial.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace npinfer {

enum class KernelName
{
  Uniform,
  Triangular,
  Epanechnikov,
  MinVarOrder4,
  MseOptOrder4,
  MinVarDeriv2,
  MseOptDeriv2,
  Custom
};

//! Integration range for boundary-truncated kernel moments.
struct TruncatedSupport
{
  double lower = -1.0;
  double upper = 1.0;

  static TruncatedSupport full() { return {}; }

  static TruncatedSupport make(double lower, double upper)
  {
    if (!(lower < upper))
      throw std::invalid_argument("TruncatedSupport: lower must be below upper");
    return { lower, upper };
  }
};

inline double factorial(int k)
{
  double f = 1.0;
  for (int i = 2; i <= k; ++i)
    f *= i;
  return f;
}

//! A compactly supported kernel stored as an exact piecewise polynomial.
//! derivative_target is 0 for kernels that estimate a density level and k
//! for kernels that directly estimate f^(k).
class KernelSpec
{
public:
  KernelSpec() : KernelSpec(builtin(KernelName::Epanechnikov)) {}

  static KernelSpec builtin(KernelName name)
  {
    switch (name) {
      case KernelName::Uniform:
        return KernelSpec(name, "uniform", poly({ 0.5 }), 0);
      case KernelName::Triangular:
        return KernelSpec(name,
                          "triangular",
                          PiecewisePolynomial({ -1.0, 0.0, 1.0 },
                                              { Polynomial({ 1.0, 1.0 }),
                                                Polynomial({ 1.0, -1.0 }) }),
                          0);
      case KernelName::Epanechnikov:
        return KernelSpec(name, "epanechnikov", poly({ 0.75, 0.0, -0.75 }), 0);
      case KernelName::MinVarOrder4:
        return KernelSpec(name, "minvar-order4", poly({ 9.0 / 8.0, 0.0, -15.0 / 8.0 }), 0);
      case KernelName::MseOptOrder4:
        return KernelSpec(name,
                          "mseopt-order4",
                          poly({ 45.0 / 32.0, 0.0, -150.0 / 32.0, 0.0, 105.0 / 32.0 }),
                          0);
      case KernelName::MinVarDeriv2:
        return KernelSpec(name, "minvar-deriv2", poly({ -15.0 / 4.0, 0.0, 45.0 / 4.0 }), 2);
      case KernelName::MseOptDeriv2:
        return KernelSpec(name,
                          "mseopt-deriv2",
                          poly({ -105.0 / 16.0, 0.0, 630.0 / 16.0, 0.0, -525.0 / 16.0 }),
                          2);
      case KernelName::Custom:
        break;
    }
    throw std::invalid_argument("builtin: Custom kernels need coefficients");
  }

  //! Lowercase CLI names: uniform, triangular, epanechnikov, minvar-order4,
  //! mseopt-order4, minvar-deriv2, mseopt-deriv2.
  static KernelSpec from_name(std::string_view name)
  {
    for (auto k : { KernelName::Uniform,
                    KernelName::Triangular,
                    KernelName::Epanechnikov,
                    KernelName::MinVarOrder4,
                    KernelName::MseOptOrder4,
                    KernelName::MinVarDeriv2,
                    KernelName::MseOptDeriv2 }) {
      KernelSpec spec = builtin(k);
      if (spec.label() == name)
        return spec;
    }
    throw std::invalid_argument("unknown kernel '" + std::string(name) + "'");
  }

  //! Polynomial on [-1, 1] from ascending coefficients.
  static KernelSpec custom(std::vector<double> coefficients, int derivative_target = 0)
  {
    return custom(poly(std::move(coefficients)), derivative_target);
  }

  //! Arbitrary piecewise shape. Throws std::invalid_argument unless the
  //! normalization |mu_{K,d} - 1| < 1e-8 holds for d = derivative_target.
  static KernelSpec custom(PiecewisePolynomial shape,
                           int derivative_target = 0,
                           std::string label = "custom")
  {
    return KernelSpec(KernelName::Custom, std::move(label), std::move(shape), derivative_target);
  }

  KernelName name() const { return name_; }
  const std::string& label() const { return label_; }
  const PiecewisePolynomial& shape() const { return shape_; }
  int order() const { return order_; }
  int derivative_target() const { return derivative_target_; }
  double support_lower() const { return shape_.lower(); }
  double support_upper() const { return shape_.upper(); }

  double operator()(double u) const { return shape_(u); }

private:
  KernelSpec(KernelName name, std::string label, PiecewisePolynomial shape, int target)
    : name_(name)
    , label_(std::move(label))
    , shape_(std::move(shape))
    , derivative_target_(target)
  {
    if (target < 0)
      throw std::invalid_argument("derivative_target must be nonnegative");
    const double lo = shape_.lower(), hi = shape_.upper();
    const double sign = (target % 2 == 0) ? 1.0 : -1.0;
    const double norm = sign * shape_.moment(target, lo, hi) / factorial(target);
    if (std::abs(norm - 1.0) >= 1e-8)
      throw std::invalid_argument("kernel '" + label_ + "' fails the normalization check");
    // Order: first nonvanishing raw moment beyond the target.
    order_ = 0;
    for (int j = target + 1; j <= target + 16; ++j) {
      if (std::abs(shape_.moment(j, lo, hi)) > 1e-12) {
        order_ = j - target;
        break;
      }
    }
  }

  static PiecewisePolynomial poly(std::vector<double> c)
  {
    return PiecewisePolynomial::single(Polynomial(std::move(c)));
  }

  KernelName name_ = KernelName::Custom;
  std::string label_;
  PiecewisePolynomial shape_;
  int order_ = 0;
  int derivative_target_ = 0;
};

inline double eval_kernel(const KernelSpec& spec, double u)
{
  return spec(u);
}

//! ((-1)^k / k!) times the integral of u^k K(u) over the truncated support.
inline double kernel_moment_mu(const KernelSpec& spec, int k, TruncatedSupport trunc)
{
  if (k < 0)
    throw std::invalid_argument("kernel_moment_mu: k must be nonnegative");
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return sign * spec.shape().moment(k, trunc.lower, trunc.upper) / factorial(k);
}

//! Raw moment: integral of u^k K(u) over the truncated support.
inline double kernel_raw_moment(const KernelSpec& spec, int k, TruncatedSupport trunc)
{
  return spec.shape().moment(k, trunc.lower, trunc.upper);
}

//! Integral of K(u)^k over the truncated support.
inline double kernel_moment_theta(const KernelSpec& spec, int k, TruncatedSupport trunc)
{
  if (k < 1)
    throw std::invalid_argument("kernel_moment_theta: k must be at least 1");
  return spec.shape().power_integral(k, trunc.lower, trunc.upper);
}

//! Whole-support versions (the support of an induced kernel may exceed [-1, 1]).
inline TruncatedSupport whole_support(const KernelSpec& spec)
{
  return { spec.support_lower(), spec.support_upper() };
}

inline double kernel_moment_mu(const KernelSpec& spec, int k)
{
  return kernel_moment_mu(spec, k, whole_support(spec));
}

inline double kernel_raw_moment(const KernelSpec& spec, int k)
{
  return kernel_raw_moment(spec, k, whole_support(spec));
}

inline double kernel_moment_theta(const KernelSpec& spec, int k)
{
  return kernel_moment_theta(spec, k, whole_support(spec));
}

inline double kernel_derivative(const KernelSpec& spec, int order, double u)
{
  if (order == 0)
    return spec(u);
  return spec.shape().derivative(order)(u);
}

//! The function entering the bias estimate of f^(kappa): L itself when it
//! already targets f^(kappa), otherwise the kappa-th derivative of a level
//! kernel L.
inline PiecewisePolynomial bias_kernel_shape(const KernelSpec& L, int kappa)
{
  if (L.derivative_target() == kappa)
    return L.shape();
  if (L.derivative_target() == 0)
    return L.shape().derivative(kappa);
  throw std::invalid_argument("bias kernel '" + L.label() + "' targets f^(" +
                              std::to_string(L.derivative_target()) + "), not f^(" +
                              std::to_string(kappa) + ")");
}

//! Induced kernel M(u) = K(u) - rho^(1+kappa) L^(kappa)(rho u) mu_{K,kappa}.
inline KernelSpec induced_kernel(const KernelSpec& K, const KernelSpec& L, int kappa, double rho)
{
  if (!(rho >= 0.0) || !std::isfinite(rho))
    throw std::invalid_argument("induced_kernel: rho must be nonnegative");
  if (rho == 0.0)
    return KernelSpec::custom(K.shape(), 0, "induced");
  const double mu = kernel_moment_mu(K, kappa);
  const PiecewisePolynomial correction =
    bias_kernel_shape(L, kappa).argument_scaled(rho).scaled(std::pow(rho, 1 + kappa) * mu);
  return KernelSpec::custom(K.shape() - correction, 0, "induced");
}

inline double induced_kernel_M(const KernelSpec& K,
                               const KernelSpec& L,
                               int kappa,
                               double rho,
                               double u)
{
  if (!(rho >= 0.0))
    throw std::invalid_argument("induced_kernel_M: rho must be nonnegative");
  if (rho == 0.0)
    return K(u);
  return K(u) - std::pow(rho, 1 + kappa) * bias_kernel_shape(L, kappa)(rho * u) *
                  kernel_moment_mu(K, kappa);
}

} // namespace npinfer
