#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace npinfer {

//! Dense polynomial with coefficients in ascending degree.
class Polynomial
{
public:
  Polynomial() = default;
  explicit Polynomial(std::vector<double> coefficients)
    : c_(std::move(coefficients))
  {
    trim();
  }

  const std::vector<double>& coefficients() const { return c_; }
  int degree() const { return c_.empty() ? -1 : static_cast<int>(c_.size()) - 1; }

  double operator()(double u) const
  {
    double v = 0.0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it)
      v = v * u + *it;
    return v;
  }

  Polynomial derivative(int order = 1) const
  {
    std::vector<double> d = c_;
    for (int o = 0; o < order; ++o) {
      if (d.size() <= 1)
        return Polynomial();
      for (std::size_t j = 1; j < d.size(); ++j)
        d[j - 1] = static_cast<double>(j) * d[j];
      d.pop_back();
    }
    return Polynomial(std::move(d));
  }

  Polynomial scaled(double factor) const
  {
    std::vector<double> d = c_;
    for (double& v : d)
      v *= factor;
    return Polynomial(std::move(d));
  }

  //! The polynomial u -> p(s * u).
  Polynomial argument_scaled(double s) const
  {
    std::vector<double> d = c_;
    double sp = 1.0;
    for (double& v : d) {
      v *= sp;
      sp *= s;
    }
    return Polynomial(std::move(d));
  }

  //! Integral of u^k p(u) over [a, b], in closed form.
  double moment(int k, double a, double b) const { return power_moment(1, k, a, b); }

  //! Integral of u^k p(u)^m over [a, b], in closed form. The expansion and
  //! the antiderivative run in quad precision: high powers of derivative
  //! kernels have large alternating coefficients that cancel in double.
  double power_moment(int m, int k, double a, double b) const
  {
    using Quad = boost::multiprecision::cpp_bin_float_quad;
    std::vector<Quad> expanded{ Quad(1) };
    for (int r = 0; r < m; ++r) {
      if (c_.empty())
        return 0.0;
      std::vector<Quad> next(expanded.size() + c_.size() - 1, Quad(0));
      for (std::size_t i = 0; i < expanded.size(); ++i)
        for (std::size_t j = 0; j < c_.size(); ++j)
          next[i + j] += expanded[i] * c_[j];
      expanded = std::move(next);
    }
    const Quad qa(a), qb(b);
    Quad pa = boost::multiprecision::pow(qa, k + 1), pb = boost::multiprecision::pow(qb, k + 1);
    Quad total(0);
    for (std::size_t j = 0; j < expanded.size(); ++j) {
      total += expanded[j] * (pb - pa) / static_cast<int>(j + k + 1);
      pa *= qa;
      pb *= qb;
    }
    return static_cast<double>(total);
  }

  friend Polynomial operator+(const Polynomial& p, const Polynomial& q)
  {
    std::vector<double> d(std::max(p.c_.size(), q.c_.size()), 0.0);
    for (std::size_t j = 0; j < p.c_.size(); ++j)
      d[j] += p.c_[j];
    for (std::size_t j = 0; j < q.c_.size(); ++j)
      d[j] += q.c_[j];
    return Polynomial(std::move(d));
  }

  friend Polynomial operator-(const Polynomial& p, const Polynomial& q)
  {
    return p + q.scaled(-1.0);
  }

  friend Polynomial operator*(const Polynomial& p, const Polynomial& q)
  {
    if (p.c_.empty() || q.c_.empty())
      return Polynomial();
    std::vector<double> d(p.c_.size() + q.c_.size() - 1, 0.0);
    for (std::size_t i = 0; i < p.c_.size(); ++i)
      for (std::size_t j = 0; j < q.c_.size(); ++j)
        d[i + j] += p.c_[i] * q.c_[j];
    return Polynomial(std::move(d));
  }

  Polynomial power(int k) const
  {
    Polynomial result(std::vector<double>{ 1.0 });
    for (int i = 0; i < k; ++i)
      result = result * *this;
    return result;
  }

private:
  void trim()
  {
    while (!c_.empty() && c_.back() == 0.0)
      c_.pop_back();
  }

  std::vector<double> c_;
};

//! Piecewise polynomial on [knots.front(), knots.back()], zero elsewhere.
//! Piece i lives on [knots[i], knots[i+1]].
class PiecewisePolynomial
{
public:
  PiecewisePolynomial() = default;

  PiecewisePolynomial(std::vector<double> knots, std::vector<Polynomial> pieces)
    : knots_(std::move(knots))
    , pieces_(std::move(pieces))
  {
    if (knots_.size() != pieces_.size() + 1 || pieces_.empty())
      throw std::invalid_argument("PiecewisePolynomial: need one more knot than pieces");
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i)
      if (!(knots_[i] < knots_[i + 1]))
        throw std::invalid_argument("PiecewisePolynomial: knots must increase");
  }

  static PiecewisePolynomial single(Polynomial p, double lo = -1.0, double hi = 1.0)
  {
    return PiecewisePolynomial({ lo, hi }, { std::move(p) });
  }

  bool empty() const { return pieces_.empty(); }
  double lower() const { return knots_.front(); }
  double upper() const { return knots_.back(); }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<Polynomial>& pieces() const { return pieces_; }

  double operator()(double u) const
  {
    if (pieces_.empty() || u < knots_.front() || u > knots_.back() || std::isnan(u))
      return 0.0;
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), u);
    std::size_t i = static_cast<std::size_t>(it - knots_.begin());
    i = i == 0 ? 0 : i - 1;
    if (i >= pieces_.size())
      i = pieces_.size() - 1;
    return pieces_[i](u);
  }

  PiecewisePolynomial derivative(int order) const
  {
    return transform([&](const Polynomial& p) { return p.derivative(order); });
  }

  PiecewisePolynomial scaled(double factor) const
  {
    return transform([&](const Polynomial& p) { return p.scaled(factor); });
  }

  //! The function u -> f(s * u) for s > 0.
  PiecewisePolynomial argument_scaled(double s) const
  {
    if (!(s > 0.0))
      throw std::invalid_argument("argument_scaled: scale must be positive");
    std::vector<double> k = knots_;
    for (double& v : k)
      v /= s;
    std::vector<Polynomial> p;
    p.reserve(pieces_.size());
    for (const auto& piece : pieces_)
      p.push_back(piece.argument_scaled(s));
    return PiecewisePolynomial(std::move(k), std::move(p));
  }

  //! Integral of u^k f(u) over [lo, hi], exact.
  double moment(int k, double lo, double hi) const
  {
    double total = 0.0;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      const double a = std::max(lo, knots_[i]);
      const double b = std::min(hi, knots_[i + 1]);
      if (a < b)
        total += pieces_[i].moment(k, a, b);
    }
    return total;
  }

  //! Integral of f(u)^k over [lo, hi], exact.
  double power_integral(int k, double lo, double hi) const
  {
    double total = 0.0;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      const double a = std::max(lo, knots_[i]);
      const double b = std::min(hi, knots_[i + 1]);
      if (a < b)
        total += pieces_[i].power_moment(k, 0, a, b);
    }
    return total;
  }

  friend PiecewisePolynomial operator+(const PiecewisePolynomial& f,
                                       const PiecewisePolynomial& g)
  {
    if (f.empty())
      return g;
    if (g.empty())
      return f;
    std::vector<double> k = f.knots_;
    k.insert(k.end(), g.knots_.begin(), g.knots_.end());
    std::sort(k.begin(), k.end());
    k.erase(std::unique(k.begin(), k.end()), k.end());
    std::vector<Polynomial> p;
    p.reserve(k.size() - 1);
    for (std::size_t i = 0; i + 1 < k.size(); ++i) {
      const double mid = 0.5 * (k[i] + k[i + 1]);
      p.push_back(f.piece_at(mid) + g.piece_at(mid));
    }
    return PiecewisePolynomial(std::move(k), std::move(p));
  }

  friend PiecewisePolynomial operator-(const PiecewisePolynomial& f,
                                       const PiecewisePolynomial& g)
  {
    return f + g.scaled(-1.0);
  }

private:
  template<typename F>
  PiecewisePolynomial transform(F&& fn) const
  {
    PiecewisePolynomial out;
    out.knots_ = knots_;
    out.pieces_.reserve(pieces_.size());
    for (const auto& piece : pieces_)
      out.pieces_.push_back(fn(piece));
    return out;
  }

  Polynomial piece_at(double u) const
  {
    for (std::size_t i = 0; i < pieces_.size(); ++i)
      if (u > knots_[i] && u < knots_[i + 1])
        return pieces_[i];
    return Polynomial();
  }

  std::vector<double> knots_;
  std::vector<Polynomial> pieces_;
};

} // namespace npinfer
