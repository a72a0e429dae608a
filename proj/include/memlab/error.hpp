#pragma once

#include <stdexcept>
#include <string>

namespace memlab {

/// Tensor or batch dimensions do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A call violated a documented precondition (stale trace, missing memory, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration value. `field()` names the offending key when known.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& msg, std::string field = {})
      : std::invalid_argument(field.empty() ? msg : field + ": " + msg), field_(std::move(field)), message_(msg) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& message() const noexcept { return message_; }

  /// Same error with `prefix.` prepended to the field name.
  ConfigError within(const std::string& prefix) const {
    return ConfigError(message_, field_.empty() ? prefix : prefix + "." + field_);
  }

 private:
  std::string field_;
  std::string message_;
};

/// Bad input data (CSV rows, labels, checkpoint files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training stopped because a loss went non-finite.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace memlab
