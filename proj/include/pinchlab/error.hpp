#pragma once

#include <stdexcept>
#include <string>

namespace pinchlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input violates an operation's precondition.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Malformed mesh, field, or report file.
class FormatError : public Error {
public:
  using Error::Error;
};

/// An iterative method failed to reach its tolerance.
class ConvergenceError : public Error {
public:
  using Error::Error;
};

/// The geometry does not admit the requested construction (for example a
/// sphere map on a surface whose eigenvalue band is too thin).
class Rejected : public Error {
public:
  using Error::Error;
};

/// An internal cross-check disagreed; indicates a bug, not bad input.
class ConsistencyError : public Error {
public:
  using Error::Error;
};

} // namespace pinchlab
