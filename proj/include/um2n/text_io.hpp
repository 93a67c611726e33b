#pragma once

#include <cstdio>
#include <istream>
#include <sstream>
#include <string>

#include "um2n/errors.hpp"

namespace um2n {

/// Shortest decimal form that round-trips an IEEE double exactly.
inline std::string fmt_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Line-oriented reader that tracks the current line number for diagnostics.
class LineReader {
 public:
  explicit LineReader(std::istream& in, std::string name = "input")
      : in_(in), name_(std::move(name)) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no_;
    return true;
  }

  std::string require(const std::string& what) {
    std::string line;
    if (!next(line)) throw ParseError(name_ + ": expected " + what + ", got end of file", line_no_ + 1);
    return line;
  }

  int line_no() const { return line_no_; }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(name_ + ": " + msg, line_no_); }

 private:
  std::istream& in_;
  std::string name_;
  int line_no_ = 0;
};

/// Splits a line into whitespace-separated tokens and converts them,
/// raising ParseError (with the reader's line number) on mismatch.
class TokenLine {
 public:
  TokenLine(const std::string& line, const LineReader& reader) : ss_(line), reader_(reader) {}

  double get_double(const char* what) {
    double v;
    if (!(ss_ >> v)) reader_.fail(std::string("expected ") + what);
    return v;
  }

  long long get_int(const char* what) {
    long long v;
    if (!(ss_ >> v)) reader_.fail(std::string("expected ") + what);
    return v;
  }

  std::string get_word(const char* what) {
    std::string v;
    if (!(ss_ >> v)) reader_.fail(std::string("expected ") + what);
    return v;
  }

  bool at_end() {
    std::string rest;
    return !(ss_ >> rest);
  }

 private:
  std::istringstream ss_;
  const LineReader& reader_;
};

}  // namespace um2n
