#pragma once

#include "errors.hpp"
#include "interval.hpp"
#include "kernels.hpp"
#include "normal.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace npinfer {

class RegressionSample
{
public:
  RegressionSample(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x))
    , y_(std::move(y))
  {
    if (x_.size() != y_.size())
      throw std::invalid_argument("RegressionSample: x and y lengths differ");
    if (x_.size() < 2)
      throw std::invalid_argument("RegressionSample: need at least 2 observations");
    for (std::size_t i = 0; i < x_.size(); ++i)
      if (!std::isfinite(x_[i]) || !std::isfinite(y_[i]))
        throw std::invalid_argument("RegressionSample: values must be finite");
  }

  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }
  std::size_t n() const { return x_.size(); }

private:
  std::vector<double> x_;
  std::vector<double> y_;
};

//! Scaled polynomial basis (1, u, ..., u^p).
inline Eigen::VectorXd poly_basis(double u, int p)
{
  Eigen::VectorXd r(p + 1);
  double v = 1.0;
  for (int j = 0; j <= p; ++j) {
    r(j) = v;
    v *= u;
  }
  return r;
}

//! Kernel-weighted least squares fit at one point. Internally everything is
//! in the scaled basis r_p((X_i - x)/h); beta_hat is reported in r_p(X_i - x)
//! coordinates.
struct LocPolyFit
{
  double x = 0.0;
  int p = 1;
  double h = 0.0;
  KernelSpec kernel;
  std::size_t n = 0;
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd gamma;   //!< coefficients in the scaled basis
  Eigen::MatrixXd G;       //!< R'WR/n
  Eigen::MatrixXd G_inv;
  Eigen::VectorXd Lambda1; //!< R'W[u^(p+1)]/n
  std::size_t effective_n = 0;
  std::vector<double> residuals; //!< all observations

  // In-window observations: index, scaled covariate, weight h^{-1}K(u).
  std::vector<std::size_t> window;
  std::vector<double> u;
  std::vector<double> w;

  double m_hat() const { return beta_hat(0); }
};

inline LocPolyFit lp_fit(const RegressionSample& sample,
                         double x,
                         int p,
                         double h,
                         const KernelSpec& K)
{
  if (!(h > 0.0) || !std::isfinite(h))
    throw std::invalid_argument("lp_fit: h must be positive");
  if (p < 0)
    throw std::invalid_argument("lp_fit: p must be nonnegative");

  LocPolyFit fit;
  fit.x = x;
  fit.p = p;
  fit.h = h;
  fit.kernel = K;
  fit.n = sample.n();
  const double n = static_cast<double>(sample.n());
  const auto& X = sample.x();
  const auto& Y = sample.y();

  std::set<double> distinct;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double ui = (X[i] - x) / h;
    const double k = K(ui);
    if (k != 0.0) {
      fit.window.push_back(i);
      fit.u.push_back(ui);
      fit.w.push_back(k / h);
      distinct.insert(X[i]);
    }
  }
  fit.effective_n = fit.window.size();
  if (distinct.size() < static_cast<std::size_t>(p + 1))
    throw SingularDesign("fewer than p+1 distinct covariate values in the kernel window");

  const int d = p + 1;
  fit.G = Eigen::MatrixXd::Zero(d, d);
  fit.Lambda1 = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  for (std::size_t k = 0; k < fit.window.size(); ++k) {
    const Eigen::VectorXd r = poly_basis(fit.u[k], p);
    fit.G.noalias() += fit.w[k] * r * r.transpose();
    fit.Lambda1 += fit.w[k] * std::pow(fit.u[k], p + 1) * r;
    rhs += fit.w[k] * Y[fit.window[k]] * r;
  }
  fit.G /= n;
  fit.Lambda1 /= n;
  rhs /= n;

  Eigen::LLT<Eigen::MatrixXd> llt(fit.G);
  if (llt.info() != Eigen::Success || !(llt.rcond() >= 1e-12))
    throw SingularDesign("kernel-weighted design matrix is numerically singular");
  fit.gamma = llt.solve(rhs);
  fit.G_inv = llt.solve(Eigen::MatrixXd::Identity(d, d));

  fit.beta_hat.resize(d);
  for (int j = 0; j < d; ++j)
    fit.beta_hat(j) = fit.gamma(j) / std::pow(h, j);

  fit.residuals.resize(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double ui = (X[i] - x) / h;
    double fitted = 0.0, magnitude = std::abs(Y[i]), v = 1.0;
    for (int j = 0; j <= p; ++j) {
      fitted += fit.gamma(j) * v;
      magnitude += std::abs(fit.gamma(j) * v);
      v *= ui;
    }
    // Residuals at rounding level are exact zeros (noise-free data).
    const double e = Y[i] - fitted;
    fit.residuals[i] = std::abs(e) <= 1e-12 * magnitude ? 0.0 : e;
  }
  return fit;
}

//! Linear weights omega_i with gamma_j = sum_i omega_i Y_i (zero off-window).
inline std::vector<double> coefficient_weights(const LocPolyFit& fit, int j)
{
  std::vector<double> omega(fit.n, 0.0);
  const Eigen::RowVectorXd row = fit.G_inv.row(j);
  for (std::size_t k = 0; k < fit.window.size(); ++k)
    omega[fit.window[k]] =
      row.dot(poly_basis(fit.u[k], fit.p)) * fit.w[k] / static_cast<double>(fit.n);
  return omega;
}

//! Bias estimate from the two fits: h^(p+1) (gamma_q[p+1] / b^(p+1)) e_0'G_p^{-1}Lambda_{p,1}.
inline double lp_bias_from_fits(const LocPolyFit& fit_p, const LocPolyFit& fit_q)
{
  const int p = fit_p.p;
  if (fit_q.p <= p)
    throw std::invalid_argument("lp_bias: q must exceed p");
  const double derivative_term = fit_q.gamma(p + 1) / std::pow(fit_q.h, p + 1);
  const double design_term = fit_p.G_inv.row(0).dot(fit_p.Lambda1);
  return std::pow(fit_p.h, p + 1) * derivative_term * design_term;
}

inline double lp_bias_estimate(const RegressionSample& sample,
                               double x,
                               int p,
                               int q,
                               double h,
                               double b,
                               const KernelSpec& K,
                               const KernelSpec& L)
{
  if (q <= p)
    throw std::invalid_argument("lp_bias_estimate: q must exceed p");
  if (!(b > 0.0))
    throw std::invalid_argument("lp_bias_estimate: b must be positive");
  return lp_bias_from_fits(lp_fit(sample, x, p, h, K), lp_fit(sample, x, q, b, L));
}

enum class VarianceKind
{
  HC0,
  HC1,
  HC2,
  HC3,
  NN
};

struct VarianceMethod
{
  VarianceKind kind = VarianceKind::HC3;
  int nn_neighbors = 3;

  static VarianceMethod from_name(const std::string& name, int neighbors = 3)
  {
    if (neighbors < 1)
      throw std::invalid_argument("nearest-neighbor count must be at least 1");
    if (name == "hc0")
      return { VarianceKind::HC0, neighbors };
    if (name == "hc1")
      return { VarianceKind::HC1, neighbors };
    if (name == "hc2")
      return { VarianceKind::HC2, neighbors };
    if (name == "hc3")
      return { VarianceKind::HC3, neighbors };
    if (name == "nn")
      return { VarianceKind::NN, neighbors };
    throw std::invalid_argument("unknown variance method '" + name + "'");
  }
};

inline std::string to_string(VarianceKind k)
{
  switch (k) {
    case VarianceKind::HC0:
      return "hc0";
    case VarianceKind::HC1:
      return "hc1";
    case VarianceKind::HC2:
      return "hc2";
    case VarianceKind::HC3:
      return "hc3";
    case VarianceKind::NN:
      return "nn";
  }
  return "?";
}

//! Diagonal of the projection Q = R G^{-1} R'W / n for in-window observations,
//! in window order.
inline std::vector<double> leverages(const LocPolyFit& fit)
{
  std::vector<double> q(fit.window.size());
  for (std::size_t k = 0; k < fit.window.size(); ++k) {
    const Eigen::VectorXd r = poly_basis(fit.u[k], fit.p);
    q[k] = r.dot(fit.G_inv * r) * fit.w[k] / static_cast<double>(fit.n);
  }
  return q;
}

namespace detail {

//! Indices of the J nearest covariates to X[i] (excluding i), ties by index.
inline std::vector<std::size_t> nearest_neighbors(const std::vector<double>& X,
                                                  std::size_t i,
                                                  int J)
{
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(X.size() - 1);
  for (std::size_t j = 0; j < X.size(); ++j)
    if (j != i)
      cand.emplace_back(std::abs(X[j] - X[i]), j);
  const auto mid = cand.begin() + J;
  std::nth_element(cand.begin(), mid - 1, cand.end());
  std::sort(cand.begin(), mid);
  std::vector<std::size_t> out;
  for (auto it = cand.begin(); it != mid; ++it)
    out.push_back(it->second);
  return out;
}

} // namespace detail

//! Per-observation conditional variance estimates v(X_i); zero off-window.
inline std::vector<double> lp_residual_weights(const LocPolyFit& fit,
                                               const VarianceMethod& method,
                                               const RegressionSample& sample)
{
  std::vector<double> v(fit.n, 0.0);
  if (method.kind == VarianceKind::NN) {
    const int J = method.nn_neighbors;
    if (J < 1)
      throw std::invalid_argument("nearest-neighbor count must be at least 1");
    if (sample.n() < static_cast<std::size_t>(J) + 1)
      throw std::invalid_argument("nearest-neighbor variance needs n >= J + 1");
    const auto& X = sample.x();
    const auto& Y = sample.y();
    for (std::size_t i : fit.window) {
      double mean = 0.0;
      for (std::size_t j : detail::nearest_neighbors(X, i, J))
        mean += Y[j];
      mean /= J;
      const double e = Y[i] - mean;
      v[i] = static_cast<double>(J) / (J + 1.0) * e * e;
    }
    return v;
  }

  const std::vector<double> q = leverages(fit);
  double divisor = 1.0;
  if (method.kind == VarianceKind::HC1) {
    // (n_w - 2 tr Q + tr Q'Q) / n_w with n_w the in-window count.
    const int d = fit.p + 1;
    Eigen::MatrixXd S0 = Eigen::MatrixXd::Zero(d, d), S2 = Eigen::MatrixXd::Zero(d, d);
    double trace_q = 0.0;
    for (std::size_t k = 0; k < fit.window.size(); ++k) {
      const Eigen::VectorXd r = poly_basis(fit.u[k], fit.p);
      S0.noalias() += r * r.transpose();
      S2.noalias() += fit.w[k] * fit.w[k] * r * r.transpose();
      trace_q += q[k];
    }
    const double n = static_cast<double>(fit.n);
    const double trace_qq = (fit.G_inv * S2 * fit.G_inv * S0).trace() / (n * n);
    const double nw = static_cast<double>(fit.effective_n);
    divisor = (nw - 2.0 * trace_q + trace_qq) / nw;
    if (!(divisor > 0.0))
      throw LeverageOne("HC1 degrees-of-freedom correction is not positive");
  }
  for (std::size_t k = 0; k < fit.window.size(); ++k) {
    const std::size_t i = fit.window[k];
    const double e2 = fit.residuals[i] * fit.residuals[i];
    switch (method.kind) {
      case VarianceKind::HC0:
        v[i] = e2;
        break;
      case VarianceKind::HC1:
        v[i] = e2 / divisor;
        break;
      case VarianceKind::HC2:
      case VarianceKind::HC3: {
        if (q[k] >= 1.0 - 1e-12)
          throw LeverageOne("observation with leverage one; bandwidth too small");
        const double s = 1.0 - q[k];
        v[i] = method.kind == VarianceKind::HC2 ? e2 / s : e2 / (s * s);
        break;
      }
      case VarianceKind::NN:
        break;
    }
  }
  return v;
}

//! Linear weights of the bias-corrected estimate m_hat - B_hat:
//! e_0'G_p^{-1}(R_p'W_p - rho^(p+1) Lambda_{p,1} e_{p+1}'G_q^{-1}R_q'W_q)/n.
inline std::vector<double> rbc_weights(const LocPolyFit& fit_p, const LocPolyFit& fit_q, double rho)
{
  std::vector<double> omega = coefficient_weights(fit_p, 0);
  if (rho == 0.0)
    return omega;
  const int p = fit_p.p;
  const double c = std::pow(rho, p + 1) * fit_p.G_inv.row(0).dot(fit_p.Lambda1);
  const std::vector<double> omega_q = coefficient_weights(fit_q, p + 1);
  for (std::size_t i = 0; i < omega.size(); ++i)
    omega[i] -= c * omega_q[i];
  return omega;
}

namespace detail {

inline double sandwich(const std::vector<double>& omega, const std::vector<double>& v, double n, double h)
{
  if (omega.size() != v.size())
    throw std::invalid_argument("variance weights and residual weights differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i)
    s += omega[i] * omega[i] * v[i];
  return n * h * s;
}

} // namespace detail

//! Fixed-n scaled variance (h/n) e_0'G_p^{-1}(R'W diag(v) W R)G_p^{-1}e_0.
inline double lp_variance_us(const LocPolyFit& fit_p, const std::vector<double>& v_hats)
{
  return detail::sandwich(coefficient_weights(fit_p, 0), v_hats, static_cast<double>(fit_p.n), fit_p.h);
}

//! Fixed-n scaled variance of m_hat - B_hat with the given residual weights.
inline double lp_variance_rbc(const LocPolyFit& fit_p,
                              const LocPolyFit& fit_q,
                              double rho,
                              const std::vector<double>& v_hats)
{
  if (!(rho >= 0.0))
    throw std::invalid_argument("lp_variance_rbc: rho must be nonnegative");
  return detail::sandwich(rbc_weights(fit_p, fit_q, rho), v_hats, static_cast<double>(fit_p.n), fit_p.h);
}

struct LocPolyInference
{
  LocPolyFit fit_p;
  LocPolyFit fit_q;
  double x = 0.0;
  double rho = 1.0;
  double alpha = 0.05;
  VarianceMethod method;
  double m_hat = 0.0;
  double bias_hat = 0.0;
  double sigma_us = 0.0;
  double sigma_rbc = 0.0;
  double se_us = 0.0;  //!< sigma_us / sqrt(n h)
  double se_rbc = 0.0;
  IntervalSet intervals;
  bool boundary_flag = false;
  bool degenerate = false;
};

inline LocPolyInference lp_infer(const RegressionSample& sample,
                                 double x,
                                 int p,
                                 int q,
                                 double h,
                                 double b,
                                 const KernelSpec& K,
                                 const KernelSpec& L,
                                 double alpha,
                                 const VarianceMethod& method = {})
{
  if (q <= p)
    throw std::invalid_argument("lp_infer: q must exceed p");
  if (!(b > 0.0) || !std::isfinite(b))
    throw std::invalid_argument("lp_infer: b must be positive");
  const double z = two_sided_critical_value(alpha);

  LocPolyInference r;
  r.fit_p = lp_fit(sample, x, p, h, K);
  r.fit_q = lp_fit(sample, x, q, b, L);
  r.x = x;
  r.rho = h / b;
  r.alpha = alpha;
  r.method = method;
  r.m_hat = r.fit_p.m_hat();
  r.bias_hat = lp_bias_from_fits(r.fit_p, r.fit_q);

  const auto v_p = lp_residual_weights(r.fit_p, method, sample);
  const auto v_q = lp_residual_weights(r.fit_q, method, sample);
  r.sigma_us = std::sqrt(std::max(0.0, lp_variance_us(r.fit_p, v_p)));
  r.sigma_rbc = std::sqrt(std::max(0.0, lp_variance_rbc(r.fit_p, r.fit_q, r.rho, v_q)));
  const double scale = std::sqrt(static_cast<double>(sample.n()) * h);
  r.se_us = r.sigma_us / scale;
  r.se_rbc = r.sigma_rbc / scale;
  r.intervals = IntervalSet::build(r.m_hat, r.bias_hat, r.se_us, r.se_rbc, z, 1.0 - alpha);
  r.degenerate = r.sigma_us == 0.0 || r.sigma_rbc == 0.0;

  const auto [lo, hi] = std::minmax_element(sample.x().begin(), sample.x().end());
  r.boundary_flag = x - h < *lo || x + h > *hi;
  return r;
}

} // namespace npinfer
