#pragma once

#include <stdexcept>
#include <string>

namespace wsnn {

// Base for everything thrown by the library. Catching wsnn::Error at the CLI
// boundary is enough to map failures onto exit codes.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/geometry violations: rank mismatches, impossible conv geometry, ...
struct ShapeError : Error {
  using Error::Error;
};

// Bad user input: unknown config keys, unparsable values, invalid CLI flags.
// Mapped to exit code 2 by the CLI.
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required (NaN/Inf in tensor op
// results, diverged training loss). Mapped to exit code 3 by the CLI.
struct NumericError : Error {
  using Error::Error;
};

// File-format and filesystem failures.
struct IoError : Error {
  using Error::Error;
};

// Distinct IDX reader failures so callers (and tests) can tell them apart.
struct IdxBadMagicError : IoError {
  using IoError::IoError;
};
struct IdxTruncatedError : IoError {
  using IoError::IoError;
};
struct IdxCountMismatchError : IoError {
  using IoError::IoError;
};

// Distinct checkpoint container failures.
struct CheckpointMagicError : IoError {
  using IoError::IoError;
};
struct CheckpointVersionError : IoError {
  using IoError::IoError;
};
struct CheckpointIntegrityError : IoError {
  using IoError::IoError;
};

}  // namespace wsnn
