#pragma once

#include <stdexcept>
#include <string>

namespace pcgroup {

/// Parameter outside the admissible domain of its family.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Inconsistent model or design configuration.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data. Carries the offending row (1-based, header = 1) and column.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t row = 0, std::string column = {})
      : std::runtime_error(format(what, row, column)), row_(row), column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

private:
  static std::string format(const std::string& what, std::size_t row, const std::string& column) {
    std::string msg = what;
    if (row > 0) msg += " (row " + std::to_string(row);
    if (!column.empty()) msg += (row > 0 ? ", column '" : " (column '") + column + "'";
    if (row > 0 || !column.empty()) msg += ")";
    return msg;
  }

  std::size_t row_;
  std::string column_;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed (factorization, non-finite evidence, ...).
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace pcgroup
