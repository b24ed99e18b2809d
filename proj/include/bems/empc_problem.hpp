#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "bems/controller_options.hpp"
#include "bems/devices.hpp"
#include "bems/nlp_solver.hpp"
#include "bems/scenario.hpp"
#include "bems/thermal_model.hpp"

namespace bems {

/**
 * Finite-window economic MPC problem in single-shooting form.
 *
 * Decision vector z = [u⁰ … u^{W−1} | P⁰ … P^{W−1} | s⁰ … s^{W−1}], where u^j are the
 * zone flows (kg/s), P^j the battery powers (kW, present only with a battery) and
 * s^j the per-zone comfort slacks (°C, present only with soft comfort). States are
 * eliminated through the bilinear recursion; window step j uses disturbance, price
 * and load of absolute step t + j and bounds y^{j+1} with the comfort band of
 * step t + j + 1.
 *
 * Constraints g(z) <= 0 in order, temperatures in °C and powers in kW:
 *   comfort      y^{j+1} − T_max − s^j,  T_min − y^{j+1} − s^j   (2·m·W rows)
 *   hvac power   −P_H^j,  P_H^j − P_H,max                          (2·W rows)
 *   soc          E⁻ − soc^{j+1},  soc^{j+1} − E⁺                   (2·W rows, battery only)
 *   no export    −P_T^j                                             (W rows)
 *   terminal     soc⁰ − soc^W                                       (1 row, optional)
 * Row pairs are interleaved per step: rows 2k and 2k+1 belong to the same step.
 */
struct EmpcProblem {
  ThermalModel model = default_single_zone();
  HvacParams hvac;
  std::optional<BatteryParams> battery;
  double step_hours = 0.25;
  std::size_t start = 0;  // absolute step t of window step 0
  int window = 1;

  ThermalState x0;
  double soc0 = 0.0;
  std::vector<DisturbanceSample> forecast;  // W samples; channel 0 is ambient °C
  std::vector<double> price;                // $/kWh
  std::vector<double> load_kw;
  std::vector<double> pv_kw;
  Eigen::MatrixXd comfort_min;  // m × W, bound on y^{j+1}
  Eigen::MatrixXd comfort_max;

  bool soft_comfort = false;
  double comfort_penalty = 10.0;  // $/(°C·h)
  bool terminal_soc = false;

  Index zones() const { return model.zones(); }
  bool has_battery() const { return battery.has_value(); }
  Index control_count() const { return zones() * window; }
  Index battery_offset() const { return control_count(); }
  Index slack_offset() const { return control_count() + (has_battery() ? window : 0); }
  Index dimension() const { return slack_offset() + (soft_comfort ? control_count() : 0); }

  Index comfort_row(int j, Index zone) const { return 2 * (j * zones() + zone); }
  Index hvac_row(int j) const { return 2 * control_count() + 2 * j; }
  Index soc_row(int j) const { return 2 * control_count() + 2 * window + 2 * j; }
  Index export_row(int j) const {
    return 2 * control_count() + 2 * window + (has_battery() ? 2 * window : 0) + j;
  }
  Index terminal_row() const { return export_row(window); }
  Index constraint_count() const {
    return export_row(window) + (terminal_soc && has_battery() ? 1 : 0);
  }

  double u(const Eigen::VectorXd& z, int j, Index zone) const { return z[j * zones() + zone]; }
  double battery_power(const Eigen::VectorXd& z, int j) const {
    return has_battery() ? z[battery_offset() + j] : 0.0;
  }

  Eigen::VectorXd lower() const;
  Eigen::VectorXd upper() const;

  /// Throws DimensionError / ValidationError on inconsistent data.
  void validate() const;
};

/// Window of `scenario` starting at absolute step t from state x_t and SOC soc_t.
/// Wrap mode reads profiles periodically; shrink mode truncates at the profile end.
EmpcProblem build_problem(const Scenario& scenario, std::size_t t, const ThermalState& x_t,
                          double soc_t);

/// State, output and power trajectories implied by a decision vector.
struct Prediction {
  std::vector<ThermalState> states;  // x⁰ … x^W
  Eigen::MatrixXd outputs;           // m × (W + 1), y^j = C x^j
  std::vector<double> hvac_w;        // P_H^j, W
  std::vector<double> total_kw;      // P_T^j
  std::vector<double> soc;           // soc⁰ … soc^W (constant soc0 without battery)
};

/// Throws NonFiniteError naming the first window step with a non-finite value.
Prediction predict(const EmpcProblem& p, const Eigen::VectorXd& z);

/// Total window cost in $, Σ price·P_T·τ plus the slack penalty.
double objective(const EmpcProblem& p, const Eigen::VectorXd& z);
/// Value and gradient by one forward and one adjoint sweep.
double objective_and_gradient(const EmpcProblem& p, const Eigen::VectorXd& z,
                              Eigen::VectorXd& gradient);

Eigen::VectorXd constraints(const EmpcProblem& p, const Eigen::VectorXd& z);
/// Dense jacobian from forward sensitivities.
Eigen::MatrixXd constraint_jacobian(const EmpcProblem& p, const Eigen::VectorXd& z);
/// Jᵀw by an adjoint sweep, without forming J.
Eigen::VectorXd constraint_jacobian_transpose(const EmpcProblem& p, const Eigen::VectorXd& z,
                                              const Eigen::VectorXd& w);
/// Structural nonzeros of the jacobian; independent of z.
nlp::BoolMatrix constraint_sparsity(const EmpcProblem& p);

/// NLP with the objective divided by max(price)·τ; constraints keep their units.
nlp::NlpSpec nlp_spec(const EmpcProblem& p);
double objective_scale(const EmpcProblem& p);

struct EmpcSolution {
  Eigen::VectorXd z;
  double objective = 0.0;  // $
  Prediction prediction;
  nlp::SolveReport report;  // residuals refer to the scaled NLP

  bool converged() const { return report.converged(); }
};

nlp::SolverOptions solver_options(const ControllerOptions& options, std::uint64_t seed);

EmpcSolution solve(const EmpcProblem& p, const Eigen::VectorXd& z0,
                   const nlp::SolverOptions& options);

/// Previous plan shifted by one step with the last entry repeated, fitted to `next`.
Eigen::VectorXd warm_start(const EmpcSolution& previous, const EmpcProblem& previous_problem,
                           const EmpcProblem& next);

/// Uniform random point in the box; slacks start at zero.
Eigen::VectorXd cold_start(const EmpcProblem& p, std::uint64_t seed);

}  // namespace bems
