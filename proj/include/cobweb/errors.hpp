#pragma once

#include <stdexcept>
#include <string>

namespace cobweb {

// Base class for every error raised by the library. The CLI maps any
// cobweb::Error to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bad magic, version or dtype in a binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Two pieces of data that must agree do not (payload vs header, ids vs rows).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// A value violates a domain invariant (non-finite float, duplicate id, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace cobweb
