#include "bems/closed_loop.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace bems {

namespace {

std::uint64_t step_seed(std::uint64_t seed, std::size_t t) {
  return seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(t) + 1;
}

}  // namespace

ClosedLoopTrace receding_horizon_run(const Scenario& scenario, const StepObserver& observer) {
  scenario.validate();
  const ControllerOptions& options = scenario.controller;
  const Index m = scenario.model.zones();
  const double tau = scenario.step_hours;

  ClosedLoopTrace trace;
  trace.scenario = scenario.name;
  trace.step_hours = tau;
  trace.realized = realize_disturbances(scenario, scenario.forecast_error.seed);

  ThermalState x = scenario.initial_state;
  double soc = scenario.battery ? scenario.initial_soc : 0.0;
  double cumulative = 0.0;

  std::optional<EmpcProblem> previous_problem;
  std::optional<EmpcSolution> previous;

  for (std::size_t t = 0; t < static_cast<std::size_t>(scenario.span); ++t) {
    const EmpcProblem problem = build_problem(scenario, t, x, soc);
    const std::uint64_t seed = step_seed(scenario.seed, t);
    const Eigen::VectorXd z0 = options.warm_start && previous
                                   ? warm_start(*previous, *previous_problem, problem)
                                   : cold_start(problem, seed);
    EmpcSolution solution = solve(problem, z0, solver_options(options, seed));

    StepRecord r;
    r.step = t;
    r.hour = static_cast<double>(t) * tau;
    r.status = solution.report.status;
    r.iterations = solution.report.iterations;
    r.outer_iterations = solution.report.outer_iterations;
    r.evaluations = solution.report.evaluations;
    r.residuals = solution.report.residuals;
    r.planned_cost = solution.objective;

    if (!solution.converged()) {
      ++trace.failures;
      if (options.on_failure == FailurePolicy::Abort) {
        throw SolverFailure(fmt::format("step {}: solver {}: {}", t,
                                        nlp::to_string(solution.report.status),
                                        solution.report.message),
                            t);
      }
      r.fallback = true;
      if (previous) {
        solution.z = warm_start(*previous, *previous_problem, problem);
      } else {
        solution.z = solution.z.cwiseMax(problem.lower()).cwiseMin(problem.upper());
      }
      solution.prediction = predict(problem, solution.z);
      solution.objective = objective(problem, solution.z);
    }
    if (t == 0) trace.first_prediction = solution.prediction.outputs;

    const DisturbanceSample& realized = trace.realized[t];
    r.x = x;
    r.y = scenario.model.output(x);
    r.comfort_min = scenario.comfort_min(t);
    r.comfort_max = scenario.comfort_max(t);
    r.occupied = scenario.occupied(0, t);
    r.u = solution.z.head(m);
    r.ambient_forecast = scenario.disturbance(t)[0];
    r.ambient_realized = realized[0];
    r.hvac_w = hvac_total_power(scenario.hvac, r.u, r.y, realized[0]);
    r.pv_kw = scenario.pv_kw(t);
    r.load_kw = scenario.load_kw(t);
    r.soc = soc;
    r.planned_battery_kw = problem.battery_power(solution.z, 0);
    r.battery_kw = r.planned_battery_kw;

    const double base_kw = r.hvac_w / 1000.0 + r.load_kw - r.pv_kw;
    if (options.export_guard && scenario.battery && r.battery_kw < 0.0 && base_kw + r.battery_kw < 0.0) {
      r.battery_kw = std::min(0.0, -base_kw);
      r.export_guard = true;
    }
    r.total_kw = base_kw + r.battery_kw;
    r.price = scenario.price_at(t);
    r.cost = r.price * r.total_kw * tau;
    cumulative += r.cost;
    r.cumulative_cost = cumulative;

    x = scenario.model.step(x, r.u, realized);
    if (scenario.battery) soc = soc_step(*scenario.battery, soc, r.battery_kw);

    if (observer) observer(r);
    trace.steps.push_back(std::move(r));
    previous_problem = problem;
    previous = std::move(solution);
  }

  trace.final_state = x;
  trace.final_soc = soc;
  trace.total_cost = cumulative;
  return trace;
}

}  // namespace bems
