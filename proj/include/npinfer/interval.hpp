#pragma once

#include <string>

namespace npinfer {

enum class Flavor
{
  US,
  BC,
  RBC
};

inline std::string to_string(Flavor f)
{
  switch (f) {
    case Flavor::US:
      return "us";
    case Flavor::BC:
      return "bc";
    case Flavor::RBC:
      return "rbc";
  }
  return "?";
}

struct ConfidenceInterval
{
  Flavor flavor = Flavor::US;
  double center = 0.0;
  double half_width = 0.0;
  double level = 0.95;

  double lower() const { return center - half_width; }
  double upper() const { return center + half_width; }
  double length() const { return 2.0 * half_width; }
  bool contains(double value) const { return lower() <= value && value <= upper(); }

  //! Containment up to an absolute slack, for comparisons against a truth
  //! computed by a different floating-point path.
  bool covers(double value, double slack) const
  {
    return lower() - slack <= value && value <= upper() + slack;
  }
};

//! The three interval flavors sharing one construction pattern: US centered
//! at the point estimate, BC and RBC at the bias-corrected estimate; US and
//! BC share the undersmoothing standard error.
struct IntervalSet
{
  ConfidenceInterval us;
  ConfidenceInterval bc;
  ConfidenceInterval rbc;

  const ConfidenceInterval& get(Flavor f) const
  {
    return f == Flavor::US ? us : (f == Flavor::BC ? bc : rbc);
  }

  static IntervalSet build(double estimate,
                           double bias,
                           double se_us,
                           double se_rbc,
                           double z,
                           double level)
  {
    IntervalSet s;
    s.us = { Flavor::US, estimate, z * se_us, level };
    s.bc = { Flavor::BC, estimate - bias, z * se_us, level };
    s.rbc = { Flavor::RBC, estimate - bias, z * se_rbc, level };
    return s;
  }
};

} // namespace npinfer
