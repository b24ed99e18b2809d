#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bems {

/// Matrix or vector sizes that do not agree with a model's declared dimensions.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value violates a documented domain invariant. `field()` names the offending
/// field using the scenario-file path convention (e.g. "battery.soc_max").
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& message, int line = -1);

  const std::string& field() const { return field_; }
  /// Message without the field and line prefix.
  const std::string& message() const { return message_; }
  /// 1-based line in the source file, or -1 when the value did not come from a file.
  int line() const { return line_; }

 private:
  std::string field_;
  std::string message_;
  int line_;
};

/// A NaN or infinity appeared while evaluating a model; `step()` is the window
/// step at which it was first observed.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::ptrdiff_t step);
  std::ptrdiff_t step() const { return step_; }

 private:
  std::ptrdiff_t step_;
};

}  // namespace bems
