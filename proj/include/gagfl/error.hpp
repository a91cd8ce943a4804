#pragma once

#include <stdexcept>
#include <string>

namespace gagfl {

// Base class for everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (CSV fields, JSON documents).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Inputs that parse but violate a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Singular systems, failed solves, every multi-start failing.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gagfl
