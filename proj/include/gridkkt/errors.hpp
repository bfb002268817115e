#ifndef GRIDKKT_ERRORS_HPP
#define GRIDKKT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace gridkkt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Matrix is structurally or numerically singular.
class SingularMatrix : public Error {
 public:
  using Error::Error;
};

/// A matrix handed to a frozen-pattern operation does not carry the frozen pattern.
class PatternMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gridkkt

#endif  // GRIDKKT_ERRORS_HPP
