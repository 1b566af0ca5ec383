#pragma once

#include <stdexcept>
#include <string>

namespace pinchkit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files or structural violations found while loading.
class ParseError : public Error {
public:
  using Error::Error;
};

/// Argument shapes that do not agree (vector lengths, matrix sizes).
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Geometric input that cannot be processed (coplanar hull input, etc.).
class DegenerateError : public Error {
public:
  using Error::Error;
};

}  // namespace pinchkit
