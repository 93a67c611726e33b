#pragma once

#include <stdexcept>
#include <string>

namespace um2n {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

/// Malformed input file; carries the 1-based line number where parsing failed.
struct ParseError : Error {
  int line;
  ParseError(const std::string& msg, int line_no)
      : Error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};

struct UnsupportedElement : ParseError {
  using ParseError::ParseError;
};

struct PointNotFound : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

}  // namespace um2n
