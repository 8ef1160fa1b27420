#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wordmover {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (bad sizes, bad parameters).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Input data could not be used: unreadable file, malformed record, nothing
// left after filtering.
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed embedding, matrix or config file. `position()` is a byte offset
// for binary formats and a 1-based line number for text formats.
class ParseError : public DataError {
 public:
  enum class Unit { kByte, kLine };

  ParseError(const std::string& what, Unit unit, std::uint64_t position)
      : DataError(what + (unit == Unit::kByte ? " (at byte offset " : " (at line ") +
                  std::to_string(position) + ")"),
        unit_(unit),
        position_(position) {}

  Unit unit() const { return unit_; }
  std::uint64_t position() const { return position_; }

 private:
  Unit unit_;
  std::uint64_t position_;
};

// No token of a record survived vocabulary filtering.
class EmptyDocument : public DataError {
 public:
  explicit EmptyDocument(std::vector<std::string> tokens)
      : DataError("document has no in-vocabulary tokens (" + std::to_string(tokens.size()) +
                  " tokens seen)"),
        tokens_(std::move(tokens)) {}

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
};

// An iterative routine failed to converge, or a statistic is undefined.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace wordmover
