#pragma once

#include <stdexcept>
#include <string>

namespace aawr {

/// Out-of-range state, action or observation index.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Invalid construction parameters or run configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A table violates its stochasticity or shape invariants.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Enumeration exceeded its configured size limit.
struct CapacityError : std::length_error {
  using std::length_error::length_error;
};

/// Malformed record or file, with the offending line when known.
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, long line = -1)
      : std::runtime_error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_number(line) {}
  long line_number;
};

/// A record file lacks columns required by the requested mode.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape mismatch between tensors, nets or batches.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace aawr
