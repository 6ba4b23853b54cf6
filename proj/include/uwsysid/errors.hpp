#pragma once

#include <stdexcept>
#include <string>

namespace uwsysid {

// Error taxonomy mirrored by the CLI exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad flags, config files, parameter files, out-of-range arguments.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed or degenerate data: schema violations, empty logs,
// zero-variance features, rank-deficient regressions.
struct DataError : Error {
  using Error::Error;
};

// Numerical failures: non-finite values, diverging rollouts, singular solves,
// gimbal-lock crossings.
struct NumericError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace uwsysid
