#pragma once

#include "bandwidth.hpp"
#include "density.hpp"
#include "locpoly.hpp"
#include "simulate.hpp"

#include <json.hpp>

#include <charconv>
#include <sstream>
#include <string>

namespace npinfer {

using json = nlohmann::ordered_json;

//! Shortest decimal text that parses back to exactly the same double.
inline std::string format_number(double v)
{
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline json interval_json(const ConfidenceInterval& ci)
{
  return { { "center", ci.center },
           { "half_width", ci.half_width },
           { "lower", ci.lower() },
           { "upper", ci.upper() },
           { "level", ci.level } };
}

inline json intervals_json(const IntervalSet& s)
{
  return { { "us", interval_json(s.us) }, { "bc", interval_json(s.bc) }, { "rbc", interval_json(s.rbc) } };
}

inline json to_json(const DensityInference& r)
{
  return { { "x", r.x },
           { "h", r.h },
           { "b", r.b },
           { "rho", r.rho },
           { "kappa", r.kappa },
           { "n", r.n },
           { "alpha", r.alpha },
           { "f_hat", r.f_hat },
           { "bias_hat", r.bias_hat },
           { "sigma_us", r.sigma_us },
           { "sigma_rbc", r.sigma_rbc },
           { "se_us", r.se_us },
           { "se_rbc", r.se_rbc },
           { "degenerate", r.degenerate },
           { "negative_estimate", r.negative_estimate },
           { "intervals", intervals_json(r.intervals) } };
}

inline json to_json(const LocPolyFit& f)
{
  json G = json::array();
  for (int i = 0; i < f.G.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < f.G.cols(); ++j)
      row.push_back(f.G(i, j));
    G.push_back(row);
  }
  json beta = json::array(), lambda = json::array();
  for (int j = 0; j < f.beta_hat.size(); ++j)
    beta.push_back(f.beta_hat(j));
  for (int j = 0; j < f.Lambda1.size(); ++j)
    lambda.push_back(f.Lambda1(j));
  return { { "x", f.x },
           { "p", f.p },
           { "h", f.h },
           { "kernel", f.kernel.label() },
           { "beta_hat", beta },
           { "G", G },
           { "lambda1", lambda },
           { "effective_n", f.effective_n },
           { "residuals", f.residuals } };
}

inline json to_json(const LocPolyInference& r)
{
  return { { "x", r.x },
           { "rho", r.rho },
           { "alpha", r.alpha },
           { "vce", to_string(r.method.kind) },
           { "m_hat", r.m_hat },
           { "bias_hat", r.bias_hat },
           { "sigma_us", r.sigma_us },
           { "sigma_rbc", r.sigma_rbc },
           { "se_us", r.se_us },
           { "se_rbc", r.se_rbc },
           { "boundary_flag", r.boundary_flag },
           { "degenerate", r.degenerate },
           { "intervals", intervals_json(r.intervals) },
           { "fit_p", to_json(r.fit_p) },
           { "fit_q", to_json(r.fit_q) } };
}

inline json to_json(const BandwidthChoice& c)
{
  json values = json::object();
  for (const auto& [k, v] : c.diagnostics.values)
    values[k] = v;
  return { { "value", c.value },
           { "rule", to_string(c.rule) },
           { "valid", c.valid },
           { "diagnostics",
             { { "values", values }, { "flags", c.diagnostics.flags }, { "note", c.diagnostics.note } } } };
}

//! Configuration echo; the worker count is deliberately absent because it
//! never changes results.
inline json to_json(const McConfig& c)
{
  return { { "estimator", c.estimator == Estimator::Density ? "density" : "lpreg" },
           { "model", c.model },
           { "x_lower", c.x_lower },
           { "x_upper", c.x_upper },
           { "n", c.n },
           { "replications", c.replications },
           { "evaluation_points", c.evaluation_points },
           { "alpha", c.alpha },
           { "p", c.p },
           { "q", c.q },
           { "kappa", c.kappa },
           { "rho", c.rho },
           { "kernel", c.kernel },
           { "bias_kernel", c.bias_kernel },
           { "vce", to_string(c.vce.kind) },
           { "nn_neighbors", c.vce.nn_neighbors },
           { "bandwidth", to_string(c.bandwidth) },
           { "fixed_h", c.fixed_h },
           { "seed", c.seed } };
}

inline json to_json(const McReport& r)
{
  json points = json::array();
  for (const auto& pt : r.points) {
    json methods = json::object();
    const char* names[3] = { "us", "bc", "rbc" };
    for (int k = 0; k < 3; ++k)
      methods[names[k]] = { { "coverage", pt.methods[k].coverage },
                            { "mean_length", pt.methods[k].mean_length },
                            { "mean_bias", pt.methods[k].mean_bias } };
    json failures = json::object();
    for (const auto& [k, v] : pt.failures)
      failures[k] = v;
    const auto& b = pt.bandwidth;
    points.push_back({ { "x", pt.x },
                       { "truth", pt.truth },
                       { "successes", pt.successes },
                       { "failures", failures },
                       { "degenerate", pt.degenerate },
                       { "fallbacks", pt.fallbacks },
                       { "methods", methods },
                       { "bandwidth",
                         { { "mean", b.mean },
                           { "sd", b.sd },
                           { "min", b.min },
                           { "q1", b.q1 },
                           { "median", b.median },
                           { "q3", b.q3 },
                           { "max", b.max } } } });
  }
  return { { "config", to_json(r.config) }, { "points", points } };
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows)
{
  std::ostringstream out;
  out << "h,method,coverage,mean_length,mean_bias,x\n";
  for (const auto& r : rows)
    out << format_number(r.h) << ',' << to_string(r.method) << ',' << format_number(r.coverage) << ','
        << format_number(r.mean_length) << ',' << format_number(r.mean_bias) << ','
        << format_number(r.x) << '\n';
  return out.str();
}

} // namespace npinfer
