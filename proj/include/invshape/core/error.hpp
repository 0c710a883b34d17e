#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace invshape {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A file or text input violates its format contract.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or missing input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value or failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace detail

template <typename E = Error, typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw E(detail::concat(args...));
}

}  // namespace invshape
