#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bems/closed_loop.hpp"
#include "bems/scenario.hpp"

namespace bems {

struct SolverStats {
  int steps = 0;
  int converged = 0;
  int max_iterations = 0;  // solves stopped by the iteration budget
  int infeasible = 0;
  int numerical_errors = 0;
  int fallbacks = 0;     // steps that applied the shifted previous plan
  int export_guards = 0;  // steps with clipped discharge
  long long iterations = 0;
  long long evaluations = 0;
  /// Worst KKT residuals over the converged solves.
  double max_feasibility = 0.0;
  double max_stationarity = 0.0;
  double max_complementarity = 0.0;
};

struct CostSummary {
  std::string scenario;
  double step_hours = 0.25;
  int steps = 0;
  double total_cost = 0.0;  // $
  /// Mean purchased power per clock hour of the run, kW.
  std::vector<double> hourly_kw;
  /// Σ over steps and zones of the distance of y outside [T_min, T_max], times τ (°C·h).
  double comfort_violation = 0.0;
  double final_soc = 0.0;
  SolverStats solver;
};

CostSummary summarize(const ClosedLoopTrace& trace);

/// One row per step; numbers use the shortest representation that round-trips.
void write_trace_csv(const ClosedLoopTrace& trace, std::ostream& out);
void write_solve_log_csv(const ClosedLoopTrace& trace, std::ostream& out);
/// First-solve predicted outputs next to the closed-loop outputs over their overlap.
void write_prediction_csv(const ClosedLoopTrace& trace, std::ostream& out);
std::string summary_json(const CostSummary& summary);

struct RunArtifacts {
  ClosedLoopTrace trace;
  CostSummary summary;
};

/// Runs the closed loop and writes trace.csv, solve_log.csv, prediction.csv and
/// summary.json into `out_dir` (created when missing).
RunArtifacts run_and_report(const Scenario& scenario, const std::filesystem::path& out_dir);

/// Controller and seed overrides applied on top of a scenario.
struct Overrides {
  std::optional<std::uint64_t> seed;  // solver seed and forecast-error seed
  std::optional<bool> soft_comfort;
  std::optional<bool> terminal_soc;
  std::optional<double> tolerance;
  std::optional<int> max_iterations;

  void apply(Scenario& s) const;
};

/// `base` with the devices not in `config` removed and the configuration appended to
/// its name. Throws ValidationError when `config` needs a device `base` lacks.
Scenario with_configuration(const Scenario& base, Configuration config);

/// "pattern1" or "pattern2".
OccupancyPattern parse_pattern(const std::string& text);
std::string to_string(OccupancyPattern pattern);

/// Builtin day with every device, named after its pattern.
Scenario builtin_base(OccupancyPattern pattern);

struct SweepTable {
  std::vector<std::string> rows;              // base scenario names
  std::vector<Configuration> configurations;  // columns
  std::vector<std::vector<CostSummary>> cells;

  const CostSummary& at(std::size_t row, std::size_t column) const { return cells[row][column]; }
};

/// Runs every (base, configuration) cell concurrently and collects the summaries in
/// table order. Cells of a row share the base seed and hence the noise realization.
/// With `out_dir` each cell also writes its run artifacts to `<out_dir>/<cell name>/`.
SweepTable sweep(const std::vector<Scenario>& bases, const std::vector<Configuration>& configurations,
                 const Overrides& overrides,
                 const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Cost table (one row per pattern) and per-hour purchased power of every cell.
void write_sweep_csv(const SweepTable& table, std::ostream& out);
void write_hourly_csv(const SweepTable& table, std::ostream& out);
std::string sweep_json(const SweepTable& table);
/// Human-readable cost table.
std::string format_sweep_table(const SweepTable& table);

}  // namespace bems
