#pragma once

#include "interval.hpp"
#include "kernels.hpp"
#include "normal.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace npinfer {

class DensitySample
{
public:
  explicit DensitySample(std::vector<double> observations)
    : x_(std::move(observations))
  {
    if (x_.empty())
      throw std::invalid_argument("DensitySample: need at least one observation");
    for (double v : x_)
      if (!std::isfinite(v))
        throw std::invalid_argument("DensitySample: observations must be finite");
  }

  const std::vector<double>& observations() const { return x_; }
  std::size_t n() const { return x_.size(); }

private:
  std::vector<double> x_;
};

struct DensityInference
{
  double x = 0.0;
  double h = 0.0;
  double b = 0.0;
  double rho = 0.0;
  int kappa = 2;
  std::size_t n = 0;
  double f_hat = 0.0;
  double bias_hat = 0.0;
  double sigma_us = 0.0;  //!< fixed-n scale, sqrt of the variance estimate
  double sigma_rbc = 0.0;
  double se_us = 0.0;     //!< sigma_us / sqrt(n h)
  double se_rbc = 0.0;
  double alpha = 0.05;
  IntervalSet intervals;
  bool degenerate = false;
  bool negative_estimate = false;
};

namespace detail {

inline void require_positive(double v, const char* name)
{
  if (!(v > 0.0) || !std::isfinite(v))
    throw std::invalid_argument(std::string(name) + " must be positive and finite");
}

inline void require_variance_size(const DensitySample& sample)
{
  if (sample.n() < 2)
    throw std::invalid_argument("variance estimation needs at least 2 observations");
}

//! Kernel average (n)^{-1} sum N((x - X_i)/h).
template<typename F>
double kernel_mean(const DensitySample& sample, double x, double h, F&& kernel)
{
  double s = 0.0;
  for (double xi : sample.observations())
    s += kernel((x - xi) / h);
  return s / static_cast<double>(sample.n());
}

//! h^{-1} times the centered sample variance of N((x - X_i)/h).
template<typename F>
double kernel_sample_variance(const DensitySample& sample, double x, double h, F&& kernel)
{
  const auto& obs = sample.observations();
  std::vector<double> values;
  values.reserve(obs.size());
  double mean = 0.0;
  for (double xi : obs) {
    values.push_back(kernel((x - xi) / h));
    mean += values.back();
  }
  mean /= static_cast<double>(obs.size());
  double ss = 0.0;
  for (double v : values)
    ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(obs.size()) / h;
}

} // namespace detail

inline double density_point_estimate(const DensitySample& sample,
                                     double x,
                                     double h,
                                     const KernelSpec& K)
{
  detail::require_positive(h, "h");
  return detail::kernel_mean(sample, x, h, K) / h;
}

//! Estimate of f^(kappa)(x) with bandwidth b.
inline double density_derivative_estimate(const DensitySample& sample,
                                          double x,
                                          double b,
                                          const KernelSpec& L,
                                          int kappa)
{
  detail::require_positive(b, "b");
  const PiecewisePolynomial d = bias_kernel_shape(L, kappa);
  return detail::kernel_mean(sample, x, b, d) / std::pow(b, 1 + kappa);
}

inline double density_bias_estimate(const DensitySample& sample,
                                    double x,
                                    double h,
                                    double b,
                                    const KernelSpec& K,
                                    const KernelSpec& L,
                                    int kappa)
{
  detail::require_positive(h, "h");
  detail::require_positive(b, "b");
  return std::pow(h, kappa) * density_derivative_estimate(sample, x, b, L, kappa) *
         kernel_moment_mu(K, kappa);
}

inline double density_variance_us(const DensitySample& sample,
                                  double x,
                                  double h,
                                  const KernelSpec& K)
{
  detail::require_positive(h, "h");
  detail::require_variance_size(sample);
  return detail::kernel_sample_variance(sample, x, h, K);
}

inline double density_variance_rbc(const DensitySample& sample,
                                   double x,
                                   double h,
                                   double b,
                                   const KernelSpec& K,
                                   const KernelSpec& L,
                                   int kappa)
{
  detail::require_positive(h, "h");
  detail::require_positive(b, "b");
  detail::require_variance_size(sample);
  const KernelSpec M = induced_kernel(K, L, kappa, h / b);
  return detail::kernel_sample_variance(sample, x, h, M);
}

inline DensityInference density_infer(const DensitySample& sample,
                                      double x,
                                      double h,
                                      double b,
                                      const KernelSpec& K,
                                      const KernelSpec& L,
                                      int kappa,
                                      double alpha)
{
  detail::require_positive(h, "h");
  detail::require_positive(b, "b");
  const double z = two_sided_critical_value(alpha);

  DensityInference r;
  r.x = x;
  r.h = h;
  r.b = b;
  r.rho = h / b;
  r.kappa = kappa;
  r.n = sample.n();
  r.alpha = alpha;
  r.f_hat = density_point_estimate(sample, x, h, K);
  r.bias_hat = density_bias_estimate(sample, x, h, b, K, L, kappa);
  r.sigma_us = std::sqrt(density_variance_us(sample, x, h, K));
  r.sigma_rbc = std::sqrt(density_variance_rbc(sample, x, h, b, K, L, kappa));
  const double scale = std::sqrt(static_cast<double>(sample.n()) * h);
  r.se_us = r.sigma_us / scale;
  r.se_rbc = r.sigma_rbc / scale;
  r.intervals = IntervalSet::build(r.f_hat, r.bias_hat, r.se_us, r.se_rbc, z, 1.0 - alpha);
  r.degenerate = r.sigma_us == 0.0 || r.sigma_rbc == 0.0;
  r.negative_estimate = r.f_hat - r.bias_hat < 0.0;
  return r;
}

//! Ratio R that nulls the leading bias of (f1 - R f2) / (1 - R).
inline double gj_ratio(double h1, double h2, const KernelSpec& K1, const KernelSpec& K2)
{
  return (h1 * h1 * kernel_moment_mu(K1, 2)) / (h2 * h2 * kernel_moment_mu(K2, 2));
}

inline double gj_density_estimate(const DensitySample& sample,
                                  double x,
                                  double h1,
                                  double h2,
                                  const KernelSpec& K1,
                                  const KernelSpec& K2)
{
  detail::require_positive(h1, "h1");
  detail::require_positive(h2, "h2");
  const double R = gj_ratio(h1, h2, K1, K2);
  if (std::abs(R - 1.0) < 1e-12)
    throw std::invalid_argument("gj_density_estimate: degenerate combination (R = 1)");
  const double f1 = density_point_estimate(sample, x, h1, K1);
  const double f2 = density_point_estimate(sample, x, h2, K2);
  return (f1 - R * f2) / (1.0 - R);
}

//! Equivalent kernel of the generalized jackknife, on the h1 scale:
//! M(u) = K1(u) - r^3 {(K2(r u) - r^{-1} K1(u)) / (mu_{K2,2}(1 - R))} mu_{K1,2},
//! with r = h1/h2.
inline KernelSpec gj_equivalent_kernel(double h1,
                                       double h2,
                                       const KernelSpec& K1,
                                       const KernelSpec& K2)
{
  const double r = h1 / h2;
  const double R = gj_ratio(h1, h2, K1, K2);
  if (std::abs(R - 1.0) < 1e-12)
    throw std::invalid_argument("gj_equivalent_kernel: degenerate combination (R = 1)");
  const double c = r * r * r * kernel_moment_mu(K1, 2) / (kernel_moment_mu(K2, 2) * (1.0 - R));
  const PiecewisePolynomial bracket =
    K2.shape().argument_scaled(r) - K1.shape().scaled(1.0 / r);
  return KernelSpec::custom(K1.shape() - bracket.scaled(c), 0, "jackknife");
}

} // namespace npinfer
