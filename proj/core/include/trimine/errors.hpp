#pragma once

#include <stdexcept>
#include <string>

namespace trimine {

// Caller passed invalid arguments or violated a precondition.
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

// A file on disk does not match its declared format.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// A computation produced non-finite values or failed to converge.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace trimine
