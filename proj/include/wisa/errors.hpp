#pragma once

#include <stdexcept>
#include <string>

namespace wisa {

// Shape or dimension mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite input or numerically invalid value.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid argument supplied by the caller (bad probability, unknown enum, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A function expected to be deterministic returned different results.
class DeterminismError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition on a value violated (e.g. negative loss fed to the balancer).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent dataset contents (split leakage, missing files, ...).
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Document parse failure; carries the JSON path of the offending element.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace wisa
