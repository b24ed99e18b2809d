#include "bems/errors.hpp"

#include <utility>

namespace bems {

namespace {

std::string with_location(const std::string& field, const std::string& message, int line) {
  std::string out = field + ": " + message;
  if (line > 0) out = "line " + std::to_string(line) + ": " + out;
  return out;
}

}  // namespace

ValidationError::ValidationError(std::string field, const std::string& message, int line)
    : std::invalid_argument(with_location(field, message, line)),
      field_(std::move(field)),
      message_(message),
      line_(line) {}

NonFiniteError::NonFiniteError(const std::string& what, std::ptrdiff_t step)
    : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

}  // namespace bems
