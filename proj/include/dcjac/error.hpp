#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dcjac {

// Base of everything the library throws on bad input or bad state.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed formula text. offset is the byte position of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Problem document does not match the expected structure.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A piece was evaluated outside its domain (log of non-positive, division by zero, ...).
class DomainError : public Error {
 public:
  DomainError(const std::string& what, std::string subexpression)
      : Error(what + " in '" + subexpression + "'"), subexpression_(std::move(subexpression)) {}
  const std::string& subexpression() const noexcept { return subexpression_; }

 private:
  std::string subexpression_;
};

// Gradient selection produced something the witness construction cannot use.
class SelectionError : public Error {
 public:
  using Error::Error;
};

// Oracle was handed a problem outside the class it can decide.
class NonAffineError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcjac
