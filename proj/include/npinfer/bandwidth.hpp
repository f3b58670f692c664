#pragma once

#include "density.hpp"
#include "errors.hpp"
#include "kernels.hpp"
#include "locpoly.hpp"
#include "normal.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace npinfer {

//! Coverage-error polynomial values at the positive critical value
//! z = z_{1-alpha/2}. All three are odd in z, so the sign convention of z
//! does not move any minimizer built from them.
struct CoveragePolys
{
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
  double alpha = 0.05;
  double z = 0.0;
};

//! Closed forms in terms of theta_k = integral N^k.
inline CoveragePolys coverage_polys_at(double z, double theta2, double theta3, double theta4)
{
  CoveragePolys c;
  c.z = z;
  const double z3 = z * z * z, z5 = z3 * z * z;
  c.q1 = theta4 / (theta2 * theta2) * (z3 - 3.0 * z) / 6.0 -
         theta3 * theta3 / (theta2 * theta2 * theta2) *
           (2.0 * z3 / 3.0 + (z5 - 10.0 * z3 + 15.0 * z) / 9.0);
  c.q2 = -z / theta2;
  c.q3 = theta3 / (theta2 * theta2) * (2.0 * z3 / 3.0);
  return c;
}

inline CoveragePolys coverage_polys_density(const KernelSpec& N,
                                            double alpha,
                                            TruncatedSupport trunc)
{
  const double z = two_sided_critical_value(alpha);
  CoveragePolys c = coverage_polys_at(z,
                                      kernel_moment_theta(N, 2, trunc),
                                      kernel_moment_theta(N, 3, trunc),
                                      kernel_moment_theta(N, 4, trunc));
  c.alpha = alpha;
  return c;
}

inline CoveragePolys coverage_polys_density(const KernelSpec& N, double alpha)
{
  return coverage_polys_density(N, alpha, whole_support(N));
}

enum class BandwidthRule
{
  Fixed,
  MseNormalRef,
  SilvermanRot,
  Rot,
  Dpi
};

inline std::string to_string(BandwidthRule r)
{
  switch (r) {
    case BandwidthRule::Fixed:
      return "fixed";
    case BandwidthRule::MseNormalRef:
      return "mse";
    case BandwidthRule::SilvermanRot:
      return "silverman";
    case BandwidthRule::Rot:
      return "rot";
    case BandwidthRule::Dpi:
      return "dpi";
  }
  return "?";
}

struct BandwidthDiagnostics
{
  std::map<std::string, double> values;
  std::vector<std::string> flags;
  std::string note;

  bool has_flag(const std::string& f) const
  {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
  }
};

struct BandwidthChoice
{
  double value = 0.0;
  BandwidthRule rule = BandwidthRule::Fixed;
  bool valid = true;
  BandwidthDiagnostics diagnostics;
};

namespace detail {

inline double sample_mean(const std::vector<double>& v)
{
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v)
{
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v)
    ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace detail

//! MSE-optimal bandwidth from a density value and its kappa-th derivative:
//! (theta_{K,2} f / (mu_{K,kappa} f^(kappa))^2)^(1/(1+2 kappa)) n^(-1/(1+2 kappa)).
inline double mse_bandwidth_density(double f,
                                    double f_kappa,
                                    std::size_t n,
                                    const KernelSpec& K,
                                    int kappa)
{
  if (std::abs(f_kappa) < 1e-12)
    throw ZeroCurvature("density derivative vanishes; MSE-optimal bandwidth undefined");
  const double bias_const = kernel_moment_mu(K, kappa) * f_kappa;
  const double e = 1.0 / (1.0 + 2.0 * kappa);
  return std::pow(kernel_moment_theta(K, 2) * f / (bias_const * bias_const), e) *
         std::pow(static_cast<double>(n), -e);
}

inline BandwidthChoice mse_bandwidth_density_normal_ref(const DensitySample& sample,
                                                        double x,
                                                        int kappa,
                                                        const KernelSpec& K)
{
  const double mu = detail::sample_mean(sample.observations());
  const double sd = detail::sample_sd(sample.observations());
  if (!(sd > 0.0))
    throw ZeroCurvature("degenerate sample: zero standard deviation");
  BandwidthChoice c;
  c.rule = BandwidthRule::MseNormalRef;
  const double f = normal_density_derivative(x, mu, sd, 0);
  const double fk = normal_density_derivative(x, mu, sd, kappa);
  c.value = mse_bandwidth_density(f, fk, sample.n(), K, kappa);
  c.diagnostics.values = { { "reference_mean", mu },
                           { "reference_sd", sd },
                           { "reference_density", f },
                           { "reference_derivative", fk } };
  return c;
}

inline BandwidthChoice silverman_rot_density(const DensitySample& sample, int r)
{
  if (r < 2 || r % 2 != 0)
    throw std::invalid_argument("silverman_rot_density: r must be an even integer >= 2");
  const double sd = detail::sample_sd(sample.observations());
  BandwidthChoice c;
  c.rule = BandwidthRule::SilvermanRot;
  c.value = sd * 2.34 * std::pow(static_cast<double>(sample.n()), -1.0 / (2.0 * r + 1.0));
  c.valid = c.value > 0.0 && std::isfinite(c.value);
  if (!c.valid)
    c.diagnostics.flags.push_back("invalid");
  c.diagnostics.values["sample_sd"] = sd;
  return c;
}

enum class RotKind
{
  Density,
  LpInterior,
  LpBoundary
};

struct RotContext
{
  RotKind kind = RotKind::Density;
  int order = 2; //!< kappa for density, p for local polynomials

  //! Exponent of n in the rescaling factor, as a (numerator, denominator) pair.
  std::pair<int, int> exponent() const
  {
    switch (kind) {
      case RotKind::Density:
        return { -(order - 2), (1 + 2 * order) * (order + 3) };
      case RotKind::LpInterior:
        return { -(order - 1), (2 * order + 3) * (order + 4) };
      case RotKind::LpBoundary:
        return { -order, (2 * order + 3) * (order + 3) };
    }
    return { 0, 1 };
  }
};

inline BandwidthChoice rot_bandwidth(double h_mse, RotContext context, std::size_t n)
{
  if (!(h_mse > 0.0) || !std::isfinite(h_mse))
    throw std::invalid_argument("rot_bandwidth: h_mse must be positive");
  const auto [num, den] = context.exponent();
  BandwidthChoice c;
  c.rule = BandwidthRule::Rot;
  c.value = num == 0 ? h_mse : h_mse * std::pow(static_cast<double>(n), static_cast<double>(num) / den);
  c.diagnostics.values["h_mse"] = h_mse;
  return c;
}

struct CeOptimum
{
  double H = 0.0;
  double objective = 0.0;
};

//! Minimizes (a H^e1 + b H^e2 + c H^e3)^2 over [lo, hi]: 200-point log scan,
//! then golden section to 1e-6 relative. Throws Monotone when the scan
//! minimum is at an edge of the bracket.
inline CeOptimum minimize_ce_objective(std::array<double, 3> coeffs,
                                       std::array<int, 3> exponents,
                                       double lo,
                                       double hi)
{
  if (!(lo > 0.0) || !(hi / lo >= 1e4 * (1.0 - 1e-12)))
    throw std::invalid_argument("minimize_ce_objective: need lo > 0 and hi/lo >= 1e4");
  auto objective = [&](double H) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k)
      if (coeffs[k] != 0.0)
        s += coeffs[k] * std::pow(H, exponents[k]);
    return s * s;
  };
  constexpr int scan = 200;
  const double llo = std::log(lo), lhi = std::log(hi);
  std::vector<double> grid(scan), values(scan);
  int best = 0;
  for (int i = 0; i < scan; ++i) {
    grid[i] = std::exp(llo + (lhi - llo) * i / (scan - 1));
    values[i] = objective(grid[i]);
    if (values[i] < values[best])
      best = i;
  }
  if (best == 0 || best == scan - 1)
    throw Monotone("coverage-error objective has no interior minimum on the bracket");

  double a = std::log(grid[best - 1]), b = std::log(grid[best + 1]);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = objective(std::exp(c)), fd = objective(std::exp(d));
  while (b - a > 1e-7) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = objective(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = objective(std::exp(d));
    }
  }
  CeOptimum out;
  out.H = std::exp(0.5 * (a + b));
  out.objective = objective(out.H);
  if (values[best] < out.objective) {
    out.H = grid[best];
    out.objective = values[best];
  }
  return out;
}

//! Global least squares polynomial fit of Y on powers of X, computed in a
//! centered and scaled variable for conditioning.
struct GlobalPolyFit
{
  int degree = 0;
  double center = 0.0;
  double scale = 1.0;
  Eigen::VectorXd coefficients; //!< in t = (X - center)/scale
  double residual_variance = 0.0;

  double derivative(int k, double x) const
  {
    const double t = (x - center) / scale;
    double s = 0.0;
    for (int j = k; j <= degree; ++j)
      s += coefficients(j) * factorial(j) / factorial(j - k) * std::pow(t, j - k);
    return s / std::pow(scale, k);
  }
};

inline GlobalPolyFit global_poly_fit(const RegressionSample& sample, int degree)
{
  const auto& X = sample.x();
  const auto& Y = sample.y();
  const std::size_t n = sample.n();
  if (n <= static_cast<std::size_t>(degree + 1))
    throw SingularDesign("global polynomial fit needs more observations than coefficients");
  GlobalPolyFit fit;
  fit.degree = degree;
  fit.center = detail::sample_mean(X);
  fit.scale = detail::sample_sd(X);
  if (!(fit.scale > 0.0))
    throw SingularDesign("global polynomial fit: covariate has no spread");
  Eigen::MatrixXd D(n, degree + 1);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (X[i] - fit.center) / fit.scale;
    double v = 1.0;
    for (int j = 0; j <= degree; ++j) {
      D(i, j) = v;
      v *= t;
    }
    y(i) = Y[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
  qr.setThreshold(1e-12);
  if (qr.rank() < degree + 1)
    throw SingularDesign("global polynomial design is rank deficient");
  fit.coefficients = qr.solve(y);
  const Eigen::VectorXd resid = y - D * fit.coefficients;
  fit.residual_variance = resid.squaredNorm() / static_cast<double>(n - degree - 1);
  return fit;
}

//! m^(k)(x) from a global polynomial fit of degree k+2.
inline double global_poly_derivative(const RegressionSample& sample, int k, double x)
{
  if (k < 0)
    throw std::invalid_argument("global_poly_derivative: k must be nonnegative");
  if (sample.n() <= static_cast<std::size_t>(k + 6))
    throw std::invalid_argument("global_poly_derivative: need n > k + 6");
  return global_poly_fit(sample, k + 2).derivative(k, x);
}

//! Exact kernel design constants over a truncated support for degree p:
//! Gamma = int K r r', Lambda = int K r u^(p+1), Psi = int K^2 r r'.
struct KernelDesignConstants
{
  Eigen::MatrixXd Gamma;
  Eigen::VectorXd Lambda;
  Eigen::MatrixXd Psi;

  double bias_constant() const { return Gamma.llt().solve(Lambda)(0); }

  double variance_constant() const
  {
    const Eigen::VectorXd g = Gamma.llt().solve(Eigen::VectorXd::Unit(Gamma.rows(), 0));
    return g.dot(Psi * g);
  }
};

inline KernelDesignConstants kernel_design_constants(const KernelSpec& K, int p, TruncatedSupport t)
{
  const int d = p + 1;
  KernelDesignConstants c;
  c.Gamma.resize(d, d);
  c.Psi.resize(d, d);
  c.Lambda.resize(d);
  const PiecewisePolynomial K2 =
    [&] {
      std::vector<Polynomial> sq;
      for (const auto& piece : K.shape().pieces())
        sq.push_back(piece * piece);
      return PiecewisePolynomial(K.shape().knots(), sq);
    }();
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      c.Gamma(i, j) = K.shape().moment(i + j, t.lower, t.upper);
      c.Psi(i, j) = K2.moment(i + j, t.lower, t.upper);
    }
    c.Lambda(i) = K.shape().moment(i + p + 1, t.lower, t.upper);
  }
  return c;
}

//! Pilot MSE-optimal bandwidth for local polynomial estimation of degree p
//! at x: global-polynomial curvature and residual variance, boundary-aware
//! window density estimate, and kernel constants on the truncated support.
inline BandwidthChoice mse_bandwidth_lp(const RegressionSample& sample,
                                        double x,
                                        int p,
                                        const KernelSpec& K)
{
  const auto& X = sample.x();
  const auto [lo_it, hi_it] = std::minmax_element(X.begin(), X.end());
  const double xmin = *lo_it, xmax = *hi_it, range = xmax - xmin;
  const double n = static_cast<double>(sample.n());

  const GlobalPolyFit global = global_poly_fit(sample, p + 3);
  const double curvature = global.derivative(p + 1, x);
  const double sigma2 = global.residual_variance;

  const double sd = detail::sample_sd(X);
  const double width = 1.06 * sd * std::pow(n, -0.2);
  const double covered = std::min(x + width, xmax) - std::max(x - width, xmin);
  std::size_t count = 0;
  for (double xi : X)
    count += std::abs(xi - x) <= width;
  if (!(covered > 0.0) || count == 0)
    throw ZeroCurvature("no design density near the evaluation point");
  const double fx = static_cast<double>(count) / (n * covered);

  const double pf = factorial(p + 1);
  double h = range;
  TruncatedSupport t = TruncatedSupport::full();
  double B = 0.0, V = 0.0;
  for (int iter = 0; iter < 6; ++iter) {
    const KernelDesignConstants c = kernel_design_constants(K, p, t);
    B = c.bias_constant();
    V = c.variance_constant();
    const double bias = curvature * B / pf;
    if (std::abs(bias) < 1e-12)
      throw ZeroCurvature("leading local polynomial bias vanishes; MSE bandwidth undefined");
    h = std::pow(V * sigma2 / (2.0 * (p + 1) * fx * n * bias * bias), 1.0 / (2 * p + 3));
    h = std::min(h, range);
    t = { std::max(-1.0, (xmin - x) / h), std::min(1.0, (xmax - x) / h) };
    if (!(t.lower < t.upper))
      break;
  }
  BandwidthChoice out;
  out.rule = BandwidthRule::MseNormalRef;
  out.value = h;
  out.valid = h > 0.0 && std::isfinite(h);
  out.diagnostics.values = { { "curvature", curvature },
                             { "residual_variance", sigma2 },
                             { "design_density", fx },
                             { "bias_constant", B },
                             { "variance_constant", V } };
  out.diagnostics.note = "global polynomial of degree p+3 curvature and variance; window design density";
  return out;
}

//! Plug-in coverage-error constants for a local polynomial fit of degree d
//! at bandwidth h, with residuals eps and variance weights v (length n).
struct LpPluginTerms
{
  double sigma2 = 0.0;
  double third_moment = 0.0;
  std::array<double, 12> q1_terms{};
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
};

inline LpPluginTerms lp_coverage_terms(const LocPolyFit& fit,
                                       const std::vector<double>& eps,
                                       const std::vector<double>& v,
                                       double z)
{
  const int d = fit.p;
  const std::size_t nw = fit.window.size();
  const double n = static_cast<double>(fit.n);
  const double h = fit.h;

  // Per in-window observation: r_k, K_k, a_k = G^{-1} r_k, l0_k = K_k a_k(0).
  Eigen::MatrixXd R(nw, d + 1), A(nw, d + 1);
  std::vector<double> Kk(nw), l0(nw), e(nw), vv(nw);
  for (std::size_t k = 0; k < nw; ++k) {
    const Eigen::VectorXd r = poly_basis(fit.u[k], d);
    R.row(k) = r.transpose();
    A.row(k) = (fit.G_inv * r).transpose();
    Kk[k] = fit.w[k] * h;
    l0[k] = Kk[k] * A(k, 0);
    e[k] = eps[fit.window[k]];
    vv[k] = v[fit.window[k]];
  }

  LpPluginTerms t;
  double s2 = 0.0, e3 = 0.0;
  for (std::size_t k = 0; k < nw; ++k) {
    s2 += l0[k] * l0[k] * vv[k];
    e3 += l0[k] * l0[k] * l0[k] * e[k] * e[k] * e[k];
  }
  s2 /= n * h;
  e3 /= n * h;
  t.sigma2 = s2;
  t.third_moment = e3;
  if (!(s2 > 0.0))
    throw ZeroCurvature("plug-in variance is zero");
  const double hs2 = h * s2;

  const double z2 = z * z;
  const double s4 = s2 * s2, s6 = s4 * s2;
  auto& T = t.q1_terms;

  double m2 = 0, m3 = 0, m4 = 0, m8 = 0, m9 = 0, m12 = 0;
  Eigen::VectorXd v5a = Eigen::VectorXd::Zero(d + 1), v5b = Eigen::VectorXd::Zero(d + 1);
  for (std::size_t k = 0; k < nw; ++k) {
    const double e2 = e[k] * e[k], l2 = l0[k] * l0[k];
    const double cii = R.row(k).dot(A.row(k)); // r_i' G^{-1} r_i
    const double l1ii = h * l0[k] - l0[k] * Kk[k] * cii;
    m2 += l0[k] * l1ii * e2;
    m3 += l2 * l2 * (e2 * e2 - vv[k] * vv[k]);
    m4 += l2 * Kk[k] * cii * e2;
    v5a += l2 * l0[k] * e2 * e[k] * R.row(k).transpose();
    v5b += Kk[k] * l0[k] * e2 * R.row(k).transpose();
    m8 += l2 * l2 * e2 * e2;
    m9 += (l2 * vv[k] - hs2) * l2 * e2;
    m12 += (l2 * vv[k] - hs2) * (l2 * vv[k] - hs2);
  }
  // Out-of-window observations contribute (0 - h s2)^2 each to the last average.
  m12 += (n - static_cast<double>(nw)) * hs2 * hs2;
  const double inv = 1.0 / (n * h);
  m2 *= inv;
  m3 *= inv;
  m4 *= inv;
  v5a *= inv;
  v5b *= inv;
  m8 *= inv;
  m9 *= inv;
  m12 *= inv;

  // Pair and triple U-statistics over distinct indices.
  double p6 = 0, p10 = 0, p11 = 0, t7 = 0;
  for (std::size_t j = 0; j < nw; ++j) {
    double sum_a = 0.0, sum_a2 = 0.0;
    for (std::size_t i = 0; i < nw; ++i) {
      if (i == j)
        continue;
      const double c_ij = R.row(j).dot(A.row(i)); // r_j' G^{-1} r_i
      // T6 with (i <- j, j <- i): l0_j^2 (r_j'G^{-1}K_i r_i)^2 eps_i^2
      const double g = c_ij * Kk[i];
      p6 += l0[j] * l0[j] * g * g * e[i] * e[i];
      // l1(i, j) = h l0_i - l0_j K_i r_j'G^{-1}r_i
      const double l1 = h * l0[i] - l0[j] * Kk[i] * c_ij;
      p10 += l1 * l0[i] * l0[j] * l0[j] * e[j] * e[j] * vv[i];
      p11 += l1 * l0[i] * (l0[j] * l0[j] * vv[j] - hs2) * e[i] * e[i];
      const double a = g * l0[i] * e[i] * e[i];
      sum_a += a;
      sum_a2 += a * a;
    }
    t7 += l0[j] * l0[j] * (sum_a * sum_a - sum_a2);
  }
  // Pairs (i in window, j out of window): l1 = h l0_i and l0_j = 0.
  for (std::size_t i = 0; i < nw; ++i)
    p11 += (n - static_cast<double>(nw)) * (h * l0[i]) * l0[i] * (-hs2) * e[i] * e[i];
  const double pairs = n * (n - 1.0);
  const double triples = pairs * (n - 2.0);
  p6 /= pairs * h * h;
  p10 /= pairs * h * h;
  p11 /= pairs * h * h;
  t7 /= triples * h * h * h;

  const double zz3 = z * (z2 - 3.0), zz1 = z * (z2 - 1.0);
  T[0] = e3 * e3 / s6 * (z * z2 / 3.0 + 7.0 * z / 4.0 + s2 * zz3 / 4.0);
  T[1] = m2 / s2 * (-zz3 / 2.0);
  T[2] = m3 / s4 * (zz3 / 8.0);
  T[3] = -m4 / s2 * (zz1 / 2.0);
  T[4] = -v5a.dot(fit.G_inv * v5b) / s4 * zz1;
  T[5] = p6 / s2 * (zz1 / 4.0);
  T[6] = t7 / s4 * (zz1 / 2.0);
  T[7] = m8 / s4 * (-zz3 / 24.0);
  T[8] = m9 / s4 * (zz1 / 4.0);
  T[9] = p10 / s4 * zz3;
  T[10] = p11 / s4 * (-z);
  T[11] = m12 / s4 * (-z * (z2 + 1.0) / 8.0);

  // Coverage-error scaling: doubled and divided by the normal density.
  double q1 = 0.0;
  for (double term : T)
    q1 += term;
  t.q1 = 2.0 * q1;
  t.q2 = 2.0 * (-z / (2.0 * s2));
  t.q3 = 2.0 * (e3 / s4 * z * z2 / 3.0);
  return t;
}

namespace detail {

inline Eigen::VectorXd lambda_vector(const LocPolyFit& fit, int k)
{
  Eigen::VectorXd l = Eigen::VectorXd::Zero(fit.p + 1);
  for (std::size_t j = 0; j < fit.window.size(); ++j)
    l += fit.w[j] * std::pow(fit.u[j], fit.p + k) * poly_basis(fit.u[j], fit.p);
  return l / static_cast<double>(fit.n);
}

inline double bracket_scale(const std::vector<double>& X)
{
  const double sd = sample_sd(X);
  if (!(sd > 0.0))
    throw SingularDesign("sample has no spread");
  return sd;
}

} // namespace detail

//! Search bracket for the coverage-error constant, in units of the sample
//! standard deviation.
constexpr double kBracketLow = 0.01;
constexpr double kBracketHigh = 100.0;

inline BandwidthChoice dpi_bandwidth_density(const DensitySample& sample,
                                             double x,
                                             const KernelSpec& K,
                                             const KernelSpec& L,
                                             int kappa,
                                             double alpha)
{
  const auto& obs = sample.observations();
  const double n = static_cast<double>(sample.n());
  const int r = kappa + 2;
  BandwidthChoice out;
  out.rule = BandwidthRule::Dpi;
  auto& diag = out.diagnostics;

  auto fallback = [&](const std::string& reason) {
    BandwidthChoice rot;
    try {
      rot = rot_bandwidth(mse_bandwidth_density_normal_ref(sample, x, kappa, K).value,
                          { RotKind::Density, kappa },
                          sample.n());
    } catch (const EstimationError&) {
      rot = silverman_rot_density(sample, kappa);
      rot.rule = BandwidthRule::Rot;
      rot.diagnostics.flags.push_back("silverman_pilot");
    }
    rot.diagnostics.flags.push_back("dpi_fallback");
    rot.diagnostics.note = reason;
    for (const auto& [k, v] : diag.values)
      rot.diagnostics.values.emplace(k, v);
    return rot;
  };

  try {
    // Pilot: (1 - u^2)^r kernel differentiated r times, bandwidth from the
    // normal-reference MSE for the r-th derivative.
    Polynomial base({ 1.0, 0.0, -1.0 });
    base = base.power(r);
    const double norm = base.moment(0, -1.0, 1.0);
    const KernelSpec pilot = KernelSpec::custom(PiecewisePolynomial::single(base.scaled(1.0 / norm)), 0, "pilot");
    const PiecewisePolynomial pilot_r = pilot.shape().derivative(r);
    const double theta = pilot_r.power_integral(2, -1.0, 1.0);
    const double mu2 = kernel_moment_mu(pilot, 2);
    const double sd = detail::sample_sd(obs);
    const int s = r + 2;
    const double psi = factorial(2 * s) /
                       (std::pow(2.0 * sd, 2 * s + 1) * factorial(s) * std::sqrt(std::numbers::pi));
    const double b = std::pow((2.0 * r + 1.0) * theta / (4.0 * mu2 * mu2 * psi * n), 1.0 / (2 * r + 5));
    double sum = 0.0;
    for (double xi : obs)
      sum += pilot_r((x - xi) / b);
    const double f_r = sum / (n * std::pow(b, r + 1));
    diag.values["pilot_bandwidth"] = b;
    diag.values["pilot_derivative"] = f_r;
    if (std::abs(f_r) < 1e-12)
      throw ZeroCurvature("pilot derivative estimate is zero");

    const KernelSpec M = induced_kernel(K, L, kappa, 1.0);
    const CoveragePolys q = coverage_polys_density(M, alpha);
    const double mu_m = kernel_moment_mu(M, r);
    const std::array<double, 3> coeffs = { q.q1, f_r * f_r * mu_m * mu_m * q.q2, f_r * mu_m * q.q3 };
    const std::array<int, 3> exps = { -1, 1 + 2 * r, r };
    const CeOptimum opt = minimize_ce_objective(coeffs, exps, kBracketLow * sd, kBracketHigh * sd);
    out.value = opt.H * std::pow(n, -1.0 / (kappa + 3));
    diag.values["H"] = opt.H;
    diag.values["objective"] = opt.objective;
    diag.values["coef_a"] = coeffs[0];
    diag.values["coef_b"] = coeffs[1];
    diag.values["coef_c"] = coeffs[2];
    diag.note = "pilot: normal-reference MSE bandwidth for the derivative, (1-u^2)^(kappa+2) kernel";
    return out;
  } catch (const std::exception& e) {
    return fallback(e.what());
  }
}

//! Coverage-error objective pieces for the local polynomial DPI rule.
struct LpDpiPieces
{
  double h_pilot = 0.0;
  LpPluginTerms terms;
  double eta = 0.0;
  std::array<double, 3> coeffs{};
  std::array<int, 3> exponents{};
  double rate = 0.0; //!< h = H n^{-rate}
};

inline LpDpiPieces lp_dpi_pieces(const RegressionSample& sample,
                                 double x,
                                 int p,
                                 bool boundary,
                                 const KernelSpec& K,
                                 double alpha,
                                 const VarianceMethod& method,
                                 double h_pilot)
{
  const int q = p + 1;
  LpDpiPieces out;
  out.h_pilot = h_pilot;
  const LocPolyFit fit_p = lp_fit(sample, x, p, h_pilot, K);
  const LocPolyFit fit_q = lp_fit(sample, x, q, h_pilot, K);

  // Residuals from the degree-p pilot fit; variance weights per method.
  const std::vector<double>& eps = fit_p.residuals;
  const std::vector<double> v = lp_residual_weights(fit_p, method, sample);
  out.terms = lp_coverage_terms(fit_q, eps, v, two_sided_critical_value(alpha));

  const double m2 = global_poly_derivative(sample, p + 2, x);
  const Eigen::RowVectorXd e0Ginv = fit_p.G_inv.row(0);
  const Eigen::RowVectorXd eqGinv = fit_q.G_inv.row(p + 1);
  const Eigen::VectorXd Lp1 = fit_p.Lambda1;
  const double first = e0Ginv.dot(detail::lambda_vector(fit_p, 2) -
                                  Lp1 * eqGinv.dot(detail::lambda_vector(fit_q, 1)));
  out.eta = m2 / factorial(p + 2) * first;
  if (!boundary) {
    const double m3 = global_poly_derivative(sample, p + 3, x);
    const double second = e0Ginv.dot(detail::lambda_vector(fit_p, 3) -
                                     Lp1 * eqGinv.dot(detail::lambda_vector(fit_q, 2)));
    out.eta += m3 / factorial(p + 3) * second;
  }
  const int a = boundary ? p + 2 : p + 3;
  out.exponents = { -1, 1 + 2 * a, a };
  out.coeffs = { out.terms.q1, out.eta * out.eta * out.terms.q2, out.eta * out.terms.q3 };
  out.rate = 1.0 / (a + 1);
  return out;
}

inline BandwidthChoice dpi_bandwidth_lp(const RegressionSample& sample,
                                        double x,
                                        int p,
                                        bool boundary,
                                        const KernelSpec& K,
                                        double alpha,
                                        const VarianceMethod& method = {})
{
  const double n = static_cast<double>(sample.n());
  BandwidthChoice out;
  out.rule = BandwidthRule::Dpi;
  auto& diag = out.diagnostics;
  diag.values["boundary"] = boundary ? 1.0 : 0.0;

  double h_mse = 0.0;
  try {
    h_mse = mse_bandwidth_lp(sample, x, p, K).value;
  } catch (const EstimationError&) {
    h_mse = 1.06 * detail::sample_sd(sample.x()) * std::pow(n, -0.2);
    diag.flags.push_back("pilot_fallback");
  }
  diag.values["h_mse"] = h_mse;

  auto fallback = [&](const std::string& reason) {
    BandwidthChoice rot = rot_bandwidth(
      h_mse, { boundary ? RotKind::LpBoundary : RotKind::LpInterior, p }, sample.n());
    rot.diagnostics.values.insert(diag.values.begin(), diag.values.end());
    rot.diagnostics.flags = diag.flags;
    rot.diagnostics.flags.push_back("dpi_fallback");
    rot.diagnostics.note = reason;
    return rot;
  };

  try {
    const LpDpiPieces pieces = lp_dpi_pieces(sample, x, p, boundary, K, alpha, method, h_mse);
    const double sd = detail::bracket_scale(sample.x());
    const CeOptimum opt =
      minimize_ce_objective(pieces.coeffs, pieces.exponents, kBracketLow * sd, kBracketHigh * sd);
    out.value = opt.H * std::pow(n, -pieces.rate);
    diag.values["H"] = opt.H;
    diag.values["objective"] = opt.objective;
    diag.values["eta"] = pieces.eta;
    diag.values["q1"] = pieces.terms.q1;
    diag.values["q2"] = pieces.terms.q2;
    diag.values["q3"] = pieces.terms.q3;
    diag.values["sigma2"] = pieces.terms.sigma2;
    diag.note = "pilot: global polynomial MSE bandwidth; q=p+1, K=L, rho=1";
    return out;
  } catch (const std::exception& e) {
    return fallback(e.what());
  }
}

} // namespace npinfer
