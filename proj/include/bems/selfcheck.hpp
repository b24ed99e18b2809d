#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace bems {

/// Deliberate defects used to confirm that the checks catch them.
enum class InjectedFault {
  None,
  ObjectiveGradient,  // one gradient entry scaled by 1.01
  ConstraintJacobian,  // one jacobian-transpose entry scaled by 1.01
};

struct SelfcheckOptions {
  int gradient_problems = 50;  // randomized windows, W cycling through 2, 4, 8
  int grid_instances = 10;     // W = 3, loads only, 21 points per step
  bool invariants = true;      // short closed loop with SOC, export, cost and comfort checks
  InjectedFault fault = InjectedFault::None;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Runs every check and prints one PASS/FAIL line per check to `log`.
std::vector<CheckResult> selfcheck(const SelfcheckOptions& options, std::ostream& log);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace bems
