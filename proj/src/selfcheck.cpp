#include "bems/selfcheck.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "bems/closed_loop.hpp"
#include "bems/empc_problem.hpp"

namespace bems {

namespace {

Eigen::VectorXd interior_point(const EmpcProblem& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::VectorXd lo = p.lower();
  const Eigen::VectorXd hi = p.upper();
  Eigen::VectorXd z(p.dimension());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    z[i] = std::isfinite(hi[i]) ? lo[i] + unit(rng) * (hi[i] - lo[i]) : unit(rng);
  }
  return z;
}

void inject(nlp::NlpSpec& spec, InjectedFault fault) {
  if (fault == InjectedFault::ObjectiveGradient) {
    auto gradient = spec.gradient;
    spec.gradient = [gradient](const Eigen::VectorXd& z) {
      Eigen::VectorXd g = gradient(z);
      g[0] *= 1.01;
      return g;
    };
  } else if (fault == InjectedFault::ConstraintJacobian) {
    auto jacobian = spec.jacobian;
    spec.jacobian = [jacobian](const Eigen::VectorXd& z) {
      Eigen::MatrixXd J = jacobian(z);
      J(0, 0) = J(0, 0) * 1.01 + 1e-3;
      return J;
    };
    spec.jacobian_transpose_product = {};
  }
}

CheckResult gradient_check(int index, InjectedFault fault) {
  static constexpr int kWindows[] = {2, 4, 8};
  const int window = kWindows[index % 3];
  std::mt19937_64 rng(0xC0FFEEULL + static_cast<std::uint64_t>(index));
  std::uniform_int_distribution<int> config_pick(0, 2);
  std::uniform_int_distribution<int> step_pick(0, 95);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto config = static_cast<Configuration>(config_pick(rng));
  const auto pattern = unit(rng) < 0.5 ? OccupancyPattern::Night : OccupancyPattern::Day;
  Scenario s = paper_scenario(pattern, config);
  s.controller.window = window;
  s.controller.soft_comfort = unit(rng) < 0.5;
  s.controller.terminal_soc = unit(rng) < 0.5;
  const auto t = static_cast<std::size_t>(step_pick(rng));
  const ThermalState x0 = ThermalState::Constant(s.model.states(), 20.0 + 8.0 * unit(rng));
  const double soc = s.battery ? s.battery->soc_min + unit(rng) * (s.battery->soc_max - s.battery->soc_min)
                               : 0.0;
  const EmpcProblem p = build_problem(s, t, x0, soc);
  nlp::NlpSpec spec = nlp_spec(p);
  inject(spec, fault);
  const Eigen::VectorXd z = interior_point(p, rng);

  const nlp::GradientCheckReport report = nlp::check_gradients(spec, z);
  const nlp::DerivativeError& worst = report.worst();
  CheckResult r;
  r.name = fmt::format("gradient[{}] W={} {} t={}", index, window, to_string(config), t);
  r.passed = report.max_relative_error() < 1e-5;
  r.detail = fmt::format("max rel err {:.3e} at {} col {} (analytic {:.6e}, central {:.6e})",
                         report.max_relative_error(),
                         worst.row < 0 ? std::string("objective") : fmt::format("row {}", worst.row),
                         worst.column, worst.analytic, worst.numeric);
  return r;
}

CheckResult grid_check(int index, InjectedFault fault) {
  Scenario s = paper_scenario(OccupancyPattern::Day, Configuration::Loads);
  s.controller.window = 3;
  s.controller.multistart = 3;
  const std::size_t t = 28 + 6 * static_cast<std::size_t>(index);
  const double x0 = 24.0 + 0.25 * (index % 5);
  const EmpcProblem p = build_problem(s, t, ThermalState::Constant(s.model.states(), x0), 0.0);

  // Enumerate 21 flows per step between the box bounds.
  const Eigen::VectorXd lo = p.lower();
  const Eigen::VectorXd hi = p.upper();
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd z(3);
  for (int a = 0; a <= 20; ++a) {
    for (int b = 0; b <= 20; ++b) {
      for (int c = 0; c <= 20; ++c) {
        z << lo[0] + (hi[0] - lo[0]) * a / 20.0, lo[1] + (hi[1] - lo[1]) * b / 20.0,
            lo[2] + (hi[2] - lo[2]) * c / 20.0;
        if (constraints(p, z).maxCoeff() <= 0.0) best = std::min(best, objective(p, z));
      }
    }
  }

  nlp::SolverOptions options = solver_options(s.controller, static_cast<std::uint64_t>(index));
  nlp::NlpSpec spec = nlp_spec(p);
  inject(spec, fault);
  const nlp::SolveResult result = nlp::minimize(spec, cold_start(p, static_cast<std::uint64_t>(index)), options);
  const double nlp_objective = objective(p, result.z);
  const double violation = std::max(0.0, constraints(p, result.z).maxCoeff());

  CheckResult r;
  r.name = fmt::format("grid-oracle[{}] t={} x0={}", index, t, x0);
  r.passed = std::isfinite(best) && result.report.converged() && violation <= 1e-6 &&
             nlp_objective <= best + 1e-6 * std::abs(best);
  r.detail = fmt::format("nlp {:.9f} grid {:.9f} gap {:.3e} status {} violation {:.1e}", nlp_objective,
                         best, nlp_objective - best, nlp::to_string(result.report.status), violation);
  return r;
}

std::vector<CheckResult> invariant_checks() {
  Scenario s = paper_scenario(OccupancyPattern::Day, Configuration::LoadsBatteryPv);
  s.span = 32;
  s.controller.window = 16;
  s.forecast_error.channels.clear();
  const ClosedLoopTrace trace = receding_horizon_run(s);
  const BatteryParams& b = *s.battery;

  double soc_excess = 0.0;
  double export_kw = 0.0;
  double comfort_excess = 0.0;
  double sum = 0.0;
  double soc = s.initial_soc;
  for (const StepRecord& r : trace.steps) {
    soc_excess = std::max({soc_excess, b.soc_min - r.soc, r.soc - b.soc_max});
    export_kw = std::max(export_kw, -r.total_kw);
    if (r.occupied) {
      comfort_excess = std::max({comfort_excess, r.y[0] - r.comfort_max[0], r.comfort_min[0] - r.y[0]});
    }
    sum += s.price_at(r.step) * r.total_kw * s.step_hours;
    soc = soc_step(b, soc, r.battery_kw);
  }
  soc_excess = std::max({soc_excess, b.soc_min - trace.final_soc, trace.final_soc - b.soc_max});

  std::vector<CheckResult> out;
  out.push_back({"invariant soc-bounds", soc_excess <= 1e-6, fmt::format("max excursion {:.3e}", soc_excess)});
  out.push_back({"invariant soc-recursion", std::abs(soc - trace.final_soc) <= 1e-12,
                 fmt::format("replayed {} recorded {}", soc, trace.final_soc)});
  out.push_back({"invariant no-export", export_kw <= 1e-6, fmt::format("max export {:.3e} kW", export_kw)});
  out.push_back({"invariant cost-accumulation", std::abs(sum - trace.total_cost) <= 1e-9 * std::max(1.0, std::abs(sum)),
                 fmt::format("sum {} total {}", sum, trace.total_cost)});
  out.push_back({"invariant occupied-comfort", comfort_excess <= 0.05,
                 fmt::format("max excursion {:.3e} degC, failures {}", std::max(0.0, comfort_excess), trace.failures)});
  return out;
}

void report(std::vector<CheckResult>& all, CheckResult r, std::ostream& log) {
  log << fmt::format("{} {}: {}\n", r.passed ? "PASS" : "FAIL", r.name, r.detail);
  all.push_back(std::move(r));
}

}  // namespace

std::vector<CheckResult> selfcheck(const SelfcheckOptions& options, std::ostream& log) {
  std::vector<CheckResult> all;
  for (int i = 0; i < options.gradient_problems; ++i) report(all, gradient_check(i, options.fault), log);
  for (int i = 0; i < options.grid_instances; ++i) report(all, grid_check(i, options.fault), log);
  if (options.invariants) {
    for (CheckResult& r : invariant_checks()) report(all, std::move(r), log);
  }
  return all;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

}  // namespace bems
