#pragma once

#include <string>

namespace bems {

/// How the prediction window behaves near the end of the scenario profiles.
enum class WindowMode {
  Wrap,    // profiles repeat periodically, every window has full length
  Shrink,  // the window is truncated at the end of the profiles
};

/// What the closed loop does when a solve does not converge.
enum class FailurePolicy {
  ReusePrevious,  // apply the shifted previous plan and flag the step
  Abort,
};

struct ControllerOptions {
  int window = 96;  // W, steps
  WindowMode window_mode = WindowMode::Wrap;
  bool soft_comfort = false;
  double comfort_penalty = 10.0;  // $/(°C·h) on comfort slack
  bool terminal_soc = false;      // require SOC at window end >= initial SOC
  double tolerance = 1e-6;        // feasibility, stationarity and complementarity
  int max_iterations = 100000;
  int multistart = 3;
  bool warm_start = true;
  FailurePolicy on_failure = FailurePolicy::ReusePrevious;
  /// Clip battery discharge on the plant so realized purchased power stays >= 0.
  bool export_guard = true;

  /// Throws ValidationError naming a "controller.*" field.
  void validate() const;

  bool operator==(const ControllerOptions&) const = default;
};

std::string to_string(WindowMode mode);
std::string to_string(FailurePolicy policy);

}  // namespace bems
