#pragma once
#include <stdexcept>
#include <string>

namespace nnstd {

// Error taxonomy. The CLI maps each branch to a distinct exit code, so new
// error sites should pick the narrowest type that fits.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid parameters, invalid experiment configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Mismatched shapes between two objects that must agree (layer widths,
// matrix dimensions, architecture of compared networks).
struct DimensionError : ConfigError {
  using ConfigError::ConfigError;
};

// Malformed file contents (topology files, checkpoints, dataset archives).
struct ParseError : Error {
  using Error::Error;
};

// Dataset file failed integrity verification.
struct ChecksumError : ParseError {
  using ParseError::ParseError;
};

// Filesystem and download failures.
struct IoError : Error {
  using Error::Error;
};

// Failures raised while training (bad dataset shape, empty data, ...).
struct TrainError : Error {
  using Error::Error;
};

// A rewiring step could not place the requested number of new edges.
struct RegrowthError : TrainError {
  using TrainError::TrainError;
};

}  // namespace nnstd
