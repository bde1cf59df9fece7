#ifndef BRATI_ERRORS_HPP
#define BRATI_ERRORS_HPP

#include <stdexcept>

namespace brati {

// Every failure in the library throws one of these. Messages are one line;
// the CLI maps the categories to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree with an operation's requirements.
struct ShapeError : Error {
  using Error::Error;
};

// A configuration value is invalid or inconsistent with the data.
struct ConfigError : Error {
  using Error::Error;
};

// An API precondition was violated by the caller.
struct UsageError : Error {
  using Error::Error;
};

// Malformed input file; the message names the offending row/cell.
struct ParseError : Error {
  using Error::Error;
};

// A checkpoint or container failed its integrity checks.
struct CorruptionError : Error {
  using Error::Error;
};

// Training produced a NaN; names the parameter or loss involved.
struct DivergenceError : Error {
  using Error::Error;
};

// A data invariant (e.g. indicating mask outside observed mask) was violated.
struct ContractError : Error {
  using Error::Error;
};

// Loss requested over an empty mask support (0/0).
struct UndefinedLossError : Error {
  using Error::Error;
};

// Metric requested with a zero denominator.
struct UndefinedMetricError : Error {
  using Error::Error;
};

}  // namespace brati

#endif
