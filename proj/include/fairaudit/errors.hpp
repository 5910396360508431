#pragma once

#include <stdexcept>
#include <string>

namespace fairaudit {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input layout does not match the configured schema (missing column, bad config key).
class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Data violates an operation's precondition (single class, empty group cell, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Training produced non-finite values.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairaudit
