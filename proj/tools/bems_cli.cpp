// Command-line front end: run, sweep, selfcheck, validate.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bems/closed_loop.hpp"
#include "bems/errors.hpp"
#include "bems/report.hpp"
#include "bems/selfcheck.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;
constexpr int kExitSelfcheck = 4;

struct Source {
  std::string scenario_path;
  std::string builtin;
  std::string config;
};

struct ControllerFlags {
  std::optional<std::uint64_t> seed;
  bool soft_comfort = false;
  bool terminal_soc = false;
  std::optional<double> tolerance;
  std::optional<int> max_iterations;

  bems::Overrides overrides() const {
    bems::Overrides o;
    o.seed = seed;
    if (soft_comfort) o.soft_comfort = true;
    if (terminal_soc) o.terminal_soc = true;
    o.tolerance = tolerance;
    o.max_iterations = max_iterations;
    return o;
  }
};

void add_source(CLI::App& app, Source& src, bool with_config) {
  auto* scenario = app.add_option("--scenario", src.scenario_path, "Scenario YAML file");
  auto* builtin = app.add_option("--builtin", src.builtin, "Builtin day: pattern1|pattern2")
                      ->check(CLI::IsMember({"pattern1", "pattern2"}));
  scenario->excludes(builtin);
  if (with_config) {
    app.add_option("--config", src.config, "Device configuration: loads|battery|battery+pv")
        ->check(CLI::IsMember({"loads", "battery", "battery+pv"}));
  }
}

void add_controller(CLI::App& app, ControllerFlags& flags) {
  app.add_option("--seed", flags.seed, "Solver and forecast-error seed");
  app.add_flag("--soft-comfort", flags.soft_comfort, "Penalized comfort slack instead of hard bounds");
  app.add_flag("--terminal-soc", flags.terminal_soc, "Require window-end SOC >= current SOC");
  app.add_option("--tol", flags.tolerance, "KKT tolerance")->check(CLI::PositiveNumber);
  app.add_option("--max-iter", flags.max_iterations, "Inner iterations per start")->check(CLI::PositiveNumber);
}

bems::Scenario load_source(const Source& src) {
  bems::Scenario s;
  if (!src.scenario_path.empty()) {
    s = bems::load_scenario(src.scenario_path);
    if (!src.config.empty()) s = bems::with_configuration(s, bems::parse_configuration(src.config));
  } else {
    const auto pattern = bems::parse_pattern(src.builtin.empty() ? "pattern1" : src.builtin);
    const auto config = src.config.empty() ? bems::Configuration::LoadsBatteryPv
                                           : bems::parse_configuration(src.config);
    s = bems::with_configuration(bems::builtin_base(pattern), config);
  }
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
}

int run(const Source& src, const ControllerFlags& flags, bool abort_on_failure, const std::string& out) {
  bems::Scenario s = load_source(src);
  flags.overrides().apply(s);
  if (abort_on_failure) s.controller.on_failure = bems::FailurePolicy::Abort;
  s.validate();
  const bems::RunArtifacts a = bems::run_and_report(s, out);
  const bems::SolverStats& st = a.summary.solver;
  fmt::print("{}: {} steps, cost ${:.4f}, comfort violation {:.4f} degC*h\n", a.summary.scenario,
             a.summary.steps, a.summary.total_cost, a.summary.comfort_violation);
  fmt::print("solver: {} converged, {} max-iter, {} infeasible, {} fallbacks, {} export guards\n",
             st.converged, st.max_iterations, st.infeasible, st.fallbacks, st.export_guards);
  fmt::print("artifacts in {}\n", out);
  return 0;
}

int sweep(const std::vector<std::string>& scenarios, const std::vector<std::string>& builtins,
          const std::vector<std::string>& configs, const ControllerFlags& flags, const std::string& out) {
  std::vector<bems::Scenario> bases;
  for (const auto& path : scenarios) bases.push_back(bems::load_scenario(path));
  for (const auto& name : builtins) bases.push_back(bems::builtin_base(bems::parse_pattern(name)));
  if (bases.empty()) {
    bases.push_back(bems::builtin_base(bems::OccupancyPattern::Night));
    bases.push_back(bems::builtin_base(bems::OccupancyPattern::Day));
  }
  std::vector<bems::Configuration> columns;
  for (const auto& c : configs) columns.push_back(bems::parse_configuration(c));
  if (columns.empty()) {
    columns = {bems::Configuration::Loads, bems::Configuration::LoadsBattery,
               bems::Configuration::LoadsBatteryPv};
  }

  const std::filesystem::path dir(out);
  const bems::SweepTable table = bems::sweep(bases, columns, flags.overrides(), dir);
  std::ostringstream csv;
  bems::write_sweep_csv(table, csv);
  write_text(dir / "sweep.csv", csv.str());
  std::ostringstream hourly;
  bems::write_hourly_csv(table, hourly);
  write_text(dir / "hourly_kw.csv", hourly.str());
  write_text(dir / "sweep.json", bems::sweep_json(table));
  fmt::print("{}", bems::format_sweep_table(table));
  fmt::print("artifacts in {}\n", out);
  return 0;
}

int selfcheck(const std::string& fault, bool quick) {
  bems::SelfcheckOptions options;
  if (fault == "gradient") options.fault = bems::InjectedFault::ObjectiveGradient;
  if (fault == "jacobian") options.fault = bems::InjectedFault::ConstraintJacobian;
  if (quick) {
    options.gradient_problems = 6;
    options.grid_instances = 2;
  }
  const auto results = bems::selfcheck(options, std::cout);
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; });
  fmt::print("{} checks, {} failed\n", results.size(), failed);
  return failed == 0 ? 0 : kExitSelfcheck;
}

int validate(const Source& src) {
  const bems::Scenario s = load_source(src);
  s.validate();
  fmt::print("ok: {} ({} steps of {} h, {} zones)\n", s.name, s.span, s.step_hours, s.model.zones());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Economic MPC for building HVAC, battery and PV"};
  app.require_subcommand(1);

  Source run_src;
  ControllerFlags run_flags;
  std::string run_out = "out";
  bool abort_on_failure = false;
  auto* run_cmd = app.add_subcommand("run", "Closed-loop day; writes trace.csv, summary.json, solve_log.csv");
  add_source(*run_cmd, run_src, true);
  add_controller(*run_cmd, run_flags);
  run_cmd->add_option("--out", run_out, "Output directory");
  run_cmd->add_flag("--abort-on-failure", abort_on_failure, "Stop at the first failed solve (exit 3)");

  std::vector<std::string> sweep_scenarios;
  std::vector<std::string> sweep_builtins;
  std::vector<std::string> sweep_configs;
  ControllerFlags sweep_flags;
  std::string sweep_out = "sweep";
  auto* sweep_cmd = app.add_subcommand("sweep", "Scenario x configuration cost table");
  sweep_cmd->add_option("--scenario", sweep_scenarios, "Scenario YAML file (repeatable)");
  sweep_cmd->add_option("--builtin", sweep_builtins, "pattern1|pattern2 (repeatable, default both)")
      ->check(CLI::IsMember({"pattern1", "pattern2"}));
  sweep_cmd->add_option("--config", sweep_configs, "loads|battery|battery+pv (repeatable, default all)")
      ->check(CLI::IsMember({"loads", "battery", "battery+pv"}));
  add_controller(*sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--out", sweep_out, "Output directory");

  std::string fault;
  bool quick = false;
  auto* check_cmd = app.add_subcommand("selfcheck", "Gradient, grid-oracle and invariant checks");
  check_cmd->add_option("--inject-fault", fault, "Deliberate defect: gradient|jacobian")
      ->check(CLI::IsMember({"gradient", "jacobian"}));
  check_cmd->add_flag("--quick", quick, "Fewer randomized problems");

  Source validate_src;
  auto* validate_cmd = app.add_subcommand("validate", "Load and validate a scenario");
  add_source(*validate_cmd, validate_src, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return run(run_src, run_flags, abort_on_failure, run_out);
    if (*sweep_cmd) return sweep(sweep_scenarios, sweep_builtins, sweep_configs, sweep_flags, sweep_out);
    if (*check_cmd) return selfcheck(fault, quick);
    if (*validate_cmd) return validate(validate_src);
  } catch (const bems::ValidationError& e) {
    fmt::print(stderr, "validation error: {}\n", e.what());
    return kExitValidation;
  } catch (const bems::DimensionError& e) {
    fmt::print(stderr, "validation error: {}\n", e.what());
    return kExitValidation;
  } catch (const bems::SolverFailure& e) {
    fmt::print(stderr, "solver failure: {}\n", e.what());
    return kExitSolver;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
