#pragma once

#include <stdexcept>
#include <string>

namespace npinfer {

//! Base class for failures of an estimator on a particular sample. These are
//! recoverable: Monte Carlo drivers tally them instead of aborting.
class EstimationError : public std::runtime_error
{
public:
  EstimationError(std::string kind, const std::string& what)
    : std::runtime_error(what)
    , kind_(std::move(kind))
  {}
  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

class SingularDesign : public EstimationError
{
public:
  explicit SingularDesign(const std::string& what)
    : EstimationError("singular_design", what)
  {}
};

class LeverageOne : public EstimationError
{
public:
  explicit LeverageOne(const std::string& what)
    : EstimationError("leverage_one", what)
  {}
};

class ZeroCurvature : public EstimationError
{
public:
  explicit ZeroCurvature(const std::string& what)
    : EstimationError("zero_curvature", what)
  {}
};

class Monotone : public EstimationError
{
public:
  explicit Monotone(const std::string& what)
    : EstimationError("monotone", what)
  {}
};

//! Malformed input file content.
class ParseError : public std::runtime_error
{
public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ", column " +
                         std::to_string(column) + ": " + what)
    , line_(line)
    , column_(column)
  {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

private:
  std::size_t line_;
  std::size_t column_;
};

//! Input file is well-formed but has the wrong columns.
class SchemaError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

} // namespace npinfer
