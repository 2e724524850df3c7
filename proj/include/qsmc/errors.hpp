#pragma once

#include <stdexcept>
#include <string>

namespace qsmc {

enum class ErrorKind { Config, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// Bad or inconsistent configuration (unknown key, N=1 for a rejection engine, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

/// Unreadable, malformed or schema-mismatched input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// Hard numerical fault: iteration cap tripped, bound violated, non-finite value.
class NumericFault : public Error {
 public:
  explicit NumericFault(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

}  // namespace qsmc
