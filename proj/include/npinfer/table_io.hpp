#pragma once

#include "density.hpp"
#include "errors.hpp"
#include "locpoly.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace npinfer {

enum class TableSchema
{
  Density,   //!< header `x`
  Regression //!< header `x,y`
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

inline double parse_cell(std::string_view cell, std::size_t line, std::size_t column)
{
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  const auto res = std::from_chars(cell.data(), end, v);
  if (cell.empty() || res.ec != std::errc() || res.ptr != end)
    throw ParseError(line, column, "not a number: '" + std::string(cell) + "'");
  if (!std::isfinite(v))
    throw ParseError(line, column, "non-finite value '" + std::string(cell) + "'");
  return v;
}

//! Parses CSV text into columns, checking the header exactly. Line numbers
//! count the header as line 1.
inline std::vector<std::vector<double>> parse_columns(std::string_view text,
                                                      const std::vector<std::string>& header)
{
  std::vector<std::vector<double>> cols(header.size());
  std::size_t line_no = 0;
  bool seen_header = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF")
      line.remove_prefix(3);
    if (trim(line).empty())
      continue;
    const auto cells = split_commas(line);
    if (!seen_header) {
      std::vector<std::string> got(cells.begin(), cells.end());
      if (got != header) {
        std::string want;
        for (std::size_t k = 0; k < header.size(); ++k)
          want += (k ? "," : "") + header[k];
        throw SchemaError("expected header '" + want + "'");
      }
      seen_header = true;
      continue;
    }
    if (cells.size() != header.size())
      throw ParseError(line_no, std::min(cells.size(), header.size()) + 1,
                       "expected " + std::to_string(header.size()) + " columns");
    for (std::size_t k = 0; k < cells.size(); ++k)
      cols[k].push_back(parse_cell(cells[k], line_no, k + 1));
  }
  if (!seen_header)
    throw SchemaError("missing header row");
  return cols;
}

} // namespace detail

inline std::string read_file_bytes(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline DensitySample parse_density_table(std::string_view text)
{
  auto cols = detail::parse_columns(text, { "x" });
  if (cols[0].empty())
    throw SchemaError("no data rows");
  return DensitySample(std::move(cols[0]));
}

inline RegressionSample parse_regression_table(std::string_view text)
{
  auto cols = detail::parse_columns(text, { "x", "y" });
  if (cols[0].size() < 2)
    throw SchemaError("need at least 2 data rows");
  return RegressionSample(std::move(cols[0]), std::move(cols[1]));
}

inline DensitySample read_density_table(const std::string& path)
{
  return parse_density_table(read_file_bytes(path));
}

inline RegressionSample read_regression_table(const std::string& path)
{
  return parse_regression_table(read_file_bytes(path));
}

} // namespace npinfer
