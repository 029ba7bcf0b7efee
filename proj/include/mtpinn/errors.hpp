#pragma once

#include <stdexcept>
#include <string>

namespace mtpinn {

/// Caller broke a precondition (shape mismatch, empty input, bad label).
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// NaN/Inf appeared where finite values are required.
class NumericDomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or an experiment set-up that cannot run.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed tabular input. `row` is 1-based counting the header as row 1;
/// zero means the error is not tied to a row.
class ParseError : public std::runtime_error {
public:
  ParseError(std::size_t row, const std::string &what)
      : std::runtime_error(row == 0 ? what
                                    : "row " + std::to_string(row) + ": " + what),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

private:
  std::size_t row_;
};

class CheckpointError : public std::runtime_error {
public:
  enum class Kind { unreadable, version_mismatch, schema_mismatch };

  CheckpointError(Kind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

inline void require(bool cond, const std::string &what) {
  if (!cond)
    throw ContractViolation(what);
}

} // namespace mtpinn
