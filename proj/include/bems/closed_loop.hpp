#pragma once

#include <Eigen/Core>
#include <functional>
#include <stdexcept>
#include <vector>

#include "bems/empc_problem.hpp"
#include "bems/nlp_solver.hpp"
#include "bems/scenario.hpp"

namespace bems {

/// One closed-loop step k: the measured state at the start of the step, the control
/// applied over [k, k+1) and the realized powers and cost of that interval.
struct StepRecord {
  std::size_t step = 0;
  double hour = 0.0;
  ThermalState x;
  Eigen::VectorXd y;
  Eigen::VectorXd comfort_min;  // band at step k
  Eigen::VectorXd comfort_max;
  bool occupied = false;
  Eigen::VectorXd u;
  double hvac_w = 0.0;
  double battery_kw = 0.0;          // applied P_cd
  double planned_battery_kw = 0.0;  // first entry of the plan
  double soc = 0.0;                 // at the start of the step
  double pv_kw = 0.0;
  double load_kw = 0.0;
  double total_kw = 0.0;  // purchased power P_T
  double price = 0.0;
  double cost = 0.0;  // price · P_T · τ
  double cumulative_cost = 0.0;
  double ambient_forecast = 0.0;
  double ambient_realized = 0.0;

  nlp::SolveStatus status = nlp::SolveStatus::Converged;
  int iterations = 0;
  int outer_iterations = 0;
  int evaluations = 0;
  nlp::KktResiduals residuals;
  double planned_cost = 0.0;  // window objective of the plan, $
  bool fallback = false;      // shifted previous plan applied after a failed solve
  bool export_guard = false;  // discharge clipped to keep P_T >= 0
};

struct ClosedLoopTrace {
  std::string scenario;
  double step_hours = 0.25;
  std::vector<StepRecord> steps;
  ThermalState final_state;
  double final_soc = 0.0;
  double total_cost = 0.0;
  /// y^0 … y^W predicted by the first solve (m × (W+1)), empty for a zero span.
  Eigen::MatrixXd first_prediction;
  std::vector<DisturbanceSample> realized;
  int failures = 0;
};

class SolverFailure : public std::runtime_error {
 public:
  SolverFailure(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

using StepObserver = std::function<void(const StepRecord&)>;

/**
 * Receding-horizon loop: at each step solve the window from the measured state with
 * forecast disturbances, apply the first control to the plant driven by realized
 * disturbances, advance. Noise comes from scenario.forecast_error.seed, multistart
 * draws from scenario.seed. Throws SolverFailure under FailurePolicy::Abort.
 */
ClosedLoopTrace receding_horizon_run(const Scenario& scenario, const StepObserver& observer = {});

}  // namespace bems
