// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace moefl {

/// Bad argument: dimension/length mismatch, out-of-range parameter.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file contents (IDX, serialized parameters).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Experiment configuration that cannot be executed. `field()` names the
/// offending key path when one is known.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, std::string field = {})
      : std::runtime_error(what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A documented precondition on a value (e.g. simplex weights) was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace moefl
