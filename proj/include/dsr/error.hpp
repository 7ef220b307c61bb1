#pragma once

#include <stdexcept>
#include <string>

namespace dsr {

// Error categories thrown across the library. All derive from dsr::Error,
// which itself is a std::runtime_error, so callers can catch wholesale or
// by kind.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable, unwritable or truncated files and byte streams.
struct IoError : Error {
  using Error::Error;
};

// Malformed container contents: bad magic, bad header fields, corrupt
// sections.
struct FormatError : Error {
  using Error::Error;
};

// A syntactically valid input the implementation does not handle (e.g. a
// PGM maxval other than 255).
struct UnsupportedError : Error {
  using Error::Error;
};

// Inconsistent caller-chosen options: flag combinations, variant/depth
// mismatches, empty datasets.
struct ConfigError : Error {
  using Error::Error;
};

// Mismatched image/grid/field dimensions.
struct ShapeError : Error {
  using Error::Error;
};

// Arguments outside an operation's mathematical domain.
struct DomainError : Error {
  using Error::Error;
};

// Numeric failures at runtime: quantizer overflow, training divergence.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace dsr
