#pragma once

#include <stdexcept>
#include <string>

namespace wrnlab {

// Base of every error the library raises. The CLI maps ValidationError to
// exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input detected before any work starts (malformed notation,
// unknown config key, out-of-range value).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& message, std::string token)
      : ValidationError(message + " at token \"" + token + "\""), token_(std::move(token)) {}
  const std::string& token() const noexcept { return token_; }

 private:
  std::string token_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace wrnlab
