#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rembed {

// Violated operation precondition or domain-type invariant.
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input file exists but does not match the documented schema.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input line; carries the 1-based line number.
struct ParseError : SchemaError {
  ParseError(const std::string& msg, std::size_t line)
      : SchemaError(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
  std::size_t line_number;
};

// Training or evaluation produced a non-finite value.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failure; message includes the path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace rembed
