#pragma once

#include <stdexcept>
#include <string>

namespace mmatch {

// Base for every error the library throws. The CLI maps the subclasses onto
// exit codes: usage 1, data/validation 2, numerical 3.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Bad argument or malformed value.
class ValidationError : public Error {
public:
  using Error::Error;
};

// Inputs that are individually fine but inconsistent with each other.
class IntegrityError : public Error {
public:
  using Error::Error;
};

// File could not be parsed; the message names the file and line.
class FormatError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Matrix not positive-definite or otherwise numerically unusable.
class ConditioningError : public Error {
public:
  using Error::Error;
};

} // namespace mmatch
