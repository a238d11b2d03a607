#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace harmitr {

// Every failure the library reports derives from Error so callers (the CLI in
// particular) can catch a single type and print a structured message.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

// Carries the 1-based data row (header excluded) that failed.
class RowError : public Error {
 public:
  RowError(const std::string& what, std::size_t row) : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class ValidationError : public RowError {
 public:
  using RowError::RowError;
};

class ParseError : public RowError {
 public:
  ParseError(const std::string& what, std::size_t row, std::string column)
      : RowError(what, row), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class ConsistencyError : public RowError {
 public:
  using RowError::RowError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  enum class Kind { separation, non_convergence, underdetermined };
  FitError(const std::string& what, Kind kind) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class FoldError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace harmitr
