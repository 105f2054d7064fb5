#pragma once

#include <stdexcept>
#include <string>

namespace pcnn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// bad extents, mismatched operand shapes
struct ShapeError : Error {
  using Error::Error;
};

// bad magic, malformed on-disk structure
struct FormatError : Error {
  using Error::Error;
};

// cross-file or manifest-vs-blob disagreement
struct ConsistencyError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// NaN/Inf escaped an operation
struct NumericError : Error {
  using Error::Error;
};

}  // namespace pcnn
