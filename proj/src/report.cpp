#include "bems/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>
#include <json.hpp>

#include "bems/errors.hpp"

namespace bems {

namespace {

using nlohmann::ordered_json;

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("write failed: {}", path.string()));
}

template <typename Writer>
std::string to_text(const Writer& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

std::string indexed(const char* prefix, Eigen::Index i) { return fmt::format("{}{}", prefix, i); }

ordered_json solver_json(const SolverStats& s) {
  ordered_json j;
  j["steps"] = s.steps;
  j["converged"] = s.converged;
  j["max_iterations"] = s.max_iterations;
  j["infeasible"] = s.infeasible;
  j["numerical_errors"] = s.numerical_errors;
  j["fallbacks"] = s.fallbacks;
  j["export_guards"] = s.export_guards;
  j["iterations"] = s.iterations;
  j["evaluations"] = s.evaluations;
  j["max_feasibility"] = s.max_feasibility;
  j["max_stationarity"] = s.max_stationarity;
  j["max_complementarity"] = s.max_complementarity;
  return j;
}

ordered_json summary_object(const CostSummary& s) {
  ordered_json j;
  j["scenario"] = s.scenario;
  j["step_hours"] = s.step_hours;
  j["steps"] = s.steps;
  j["total_cost"] = s.total_cost;
  j["comfort_violation"] = s.comfort_violation;
  j["final_soc"] = s.final_soc;
  j["hourly_kw"] = s.hourly_kw;
  j["solver"] = solver_json(s.solver);
  return j;
}

}  // namespace

CostSummary summarize(const ClosedLoopTrace& trace) {
  CostSummary s;
  s.scenario = trace.scenario;
  s.step_hours = trace.step_hours;
  s.steps = static_cast<int>(trace.steps.size());
  s.final_soc = trace.final_soc;

  std::vector<double> kw_sum;
  std::vector<int> kw_count;
  SolverStats& st = s.solver;
  for (const StepRecord& r : trace.steps) {
    s.total_cost += r.cost;
    for (Eigen::Index i = 0; i < r.y.size(); ++i) {
      const double over = std::max({0.0, r.y[i] - r.comfort_max[i], r.comfort_min[i] - r.y[i]});
      s.comfort_violation += over * trace.step_hours;
    }
    const auto hour = static_cast<std::size_t>(std::floor(r.hour + 1e-9));
    if (hour >= kw_sum.size()) {
      kw_sum.resize(hour + 1, 0.0);
      kw_count.resize(hour + 1, 0);
    }
    kw_sum[hour] += r.total_kw;
    ++kw_count[hour];

    ++st.steps;
    switch (r.status) {
      case nlp::SolveStatus::Converged: ++st.converged; break;
      case nlp::SolveStatus::MaxIterations: ++st.max_iterations; break;
      case nlp::SolveStatus::Infeasible: ++st.infeasible; break;
      case nlp::SolveStatus::NumericalError: ++st.numerical_errors; break;
    }
    if (r.fallback) ++st.fallbacks;
    if (r.export_guard) ++st.export_guards;
    st.iterations += r.iterations;
    st.evaluations += r.evaluations;
    if (r.status == nlp::SolveStatus::Converged) {
      st.max_feasibility = std::max(st.max_feasibility, r.residuals.feasibility);
      st.max_stationarity = std::max(st.max_stationarity, r.residuals.stationarity);
      st.max_complementarity = std::max(st.max_complementarity, r.residuals.complementarity);
    }
  }
  s.hourly_kw.resize(kw_sum.size(), 0.0);
  for (std::size_t h = 0; h < kw_sum.size(); ++h) {
    if (kw_count[h] > 0) s.hourly_kw[h] = kw_sum[h] / kw_count[h];
  }
  return s;
}

void write_trace_csv(const ClosedLoopTrace& trace, std::ostream& out) {
  const Eigen::Index n = trace.steps.empty() ? trace.final_state.size() : trace.steps.front().x.size();
  const Eigen::Index m = trace.steps.empty() ? 0 : trace.steps.front().y.size();
  out << "step,hour";
  for (Eigen::Index i = 0; i < n; ++i) out << ',' << indexed("x", i);
  for (Eigen::Index i = 0; i < m; ++i) out << ',' << indexed("y", i);
  for (Eigen::Index i = 0; i < m; ++i) out << ',' << indexed("t_min", i);
  for (Eigen::Index i = 0; i < m; ++i) out << ',' << indexed("t_max", i);
  out << ",occupied";
  for (Eigen::Index i = 0; i < m; ++i) out << ',' << indexed("u", i);
  out << ",hvac_w,battery_kw,planned_battery_kw,soc,pv_kw,load_kw,total_kw,price,cost,"
         "cumulative_cost,ambient_forecast,ambient_realized,fallback,export_guard\n";
  for (const StepRecord& r : trace.steps) {
    out << fmt::format("{},{}", r.step, r.hour);
    for (double v : r.x) out << fmt::format(",{}", v);
    for (double v : r.y) out << fmt::format(",{}", v);
    for (double v : r.comfort_min) out << fmt::format(",{}", v);
    for (double v : r.comfort_max) out << fmt::format(",{}", v);
    out << ',' << int(r.occupied);
    for (double v : r.u) out << fmt::format(",{}", v);
    out << fmt::format(",{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.hvac_w, r.battery_kw,
                       r.planned_battery_kw, r.soc, r.pv_kw, r.load_kw, r.total_kw, r.price, r.cost,
                       r.cumulative_cost, r.ambient_forecast, r.ambient_realized, int(r.fallback),
                       int(r.export_guard));
  }
}

void write_solve_log_csv(const ClosedLoopTrace& trace, std::ostream& out) {
  out << "step,hour,status,iterations,outer_iterations,evaluations,feasibility,stationarity,"
         "complementarity,planned_cost,fallback\n";
  for (const StepRecord& r : trace.steps) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.step, r.hour, nlp::to_string(r.status),
                       r.iterations, r.outer_iterations, r.evaluations, r.residuals.feasibility,
                       r.residuals.stationarity, r.residuals.complementarity, r.planned_cost,
                       int(r.fallback));
  }
}

void write_prediction_csv(const ClosedLoopTrace& trace, std::ostream& out) {
  const Eigen::Index m = trace.first_prediction.rows();
  out << "step,hour";
  for (Eigen::Index i = 0; i < m; ++i) out << ',' << indexed("predicted_y", i);
  for (Eigen::Index i = 0; i < m; ++i) out << ',' << indexed("closed_loop_y", i);
  out << '\n';
  const auto overlap = std::min<std::size_t>(static_cast<std::size_t>(trace.first_prediction.cols()),
                                             trace.steps.size());
  for (std::size_t k = 0; k < overlap; ++k) {
    const StepRecord& r = trace.steps[k];
    out << fmt::format("{},{}", r.step, r.hour);
    for (Eigen::Index i = 0; i < m; ++i) out << fmt::format(",{}", trace.first_prediction(i, Eigen::Index(k)));
    for (Eigen::Index i = 0; i < m; ++i) out << fmt::format(",{}", r.y[i]);
    out << '\n';
  }
}

std::string summary_json(const CostSummary& summary) { return summary_object(summary).dump(2) + "\n"; }

RunArtifacts run_and_report(const Scenario& scenario, const std::filesystem::path& out_dir) {
  RunArtifacts a;
  a.trace = receding_horizon_run(scenario);
  a.summary = summarize(a.trace);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "trace.csv", to_text([&](std::ostream& o) { write_trace_csv(a.trace, o); }));
  write_file(out_dir / "solve_log.csv", to_text([&](std::ostream& o) { write_solve_log_csv(a.trace, o); }));
  write_file(out_dir / "prediction.csv", to_text([&](std::ostream& o) { write_prediction_csv(a.trace, o); }));
  write_file(out_dir / "summary.json", summary_json(a.summary));
  return a;
}

void Overrides::apply(Scenario& s) const {
  if (seed) {
    s.seed = *seed;
    s.forecast_error.seed = *seed;
  }
  if (soft_comfort) s.controller.soft_comfort = *soft_comfort;
  if (terminal_soc) s.controller.terminal_soc = *terminal_soc;
  if (tolerance) s.controller.tolerance = *tolerance;
  if (max_iterations) s.controller.max_iterations = *max_iterations;
}

Scenario with_configuration(const Scenario& base, Configuration config) {
  Scenario s = base;
  if (config == Configuration::Loads) s.battery.reset();
  if (config != Configuration::LoadsBatteryPv) s.pv.reset();
  if (config != Configuration::Loads && !s.battery) {
    throw ValidationError("battery", fmt::format("configuration {} needs a battery", to_string(config)));
  }
  if (config == Configuration::LoadsBatteryPv && !s.pv) {
    throw ValidationError("pv", fmt::format("configuration {} needs a pv array", to_string(config)));
  }
  s.name = fmt::format("{}-{}", base.name, to_string(config));
  return s;
}

OccupancyPattern parse_pattern(const std::string& text) {
  if (text == "pattern1") return OccupancyPattern::Night;
  if (text == "pattern2") return OccupancyPattern::Day;
  throw ValidationError("builtin", fmt::format("unknown builtin '{}' (pattern1|pattern2)", text));
}

std::string to_string(OccupancyPattern pattern) {
  return pattern == OccupancyPattern::Night ? "pattern1" : "pattern2";
}

Scenario builtin_base(OccupancyPattern pattern) {
  Scenario s = paper_scenario(pattern, Configuration::LoadsBatteryPv);
  s.name = to_string(pattern);
  return s;
}

SweepTable sweep(const std::vector<Scenario>& bases, const std::vector<Configuration>& configurations,
                 const Overrides& overrides, const std::optional<std::filesystem::path>& out_dir) {
  SweepTable table;
  table.configurations = configurations;

  std::vector<std::string> used;
  std::vector<std::vector<std::future<CostSummary>>> pending(bases.size());
  for (std::size_t r = 0; r < bases.size(); ++r) {
    table.rows.push_back(bases[r].name);
    for (Configuration config : configurations) {
      Scenario s = with_configuration(bases[r], config);
      overrides.apply(s);
      s.validate();
      // Repeated cells get their own directory.
      std::string dir = s.name;
      for (int n = 2; std::find(used.begin(), used.end(), dir) != used.end(); ++n) {
        dir = fmt::format("{}-{}", s.name, n);
      }
      used.push_back(dir);
      pending[r].push_back(std::async(std::launch::async, [s = std::move(s), out_dir, dir]() {
        if (out_dir) return run_and_report(s, *out_dir / dir).summary;
        return summarize(receding_horizon_run(s));
      }));
    }
  }
  // Drain every future before rethrowing so no run outlives the call.
  std::exception_ptr first_error;
  table.cells.resize(bases.size());
  for (std::size_t r = 0; r < bases.size(); ++r) {
    for (auto& f : pending[r]) {
      try {
        table.cells[r].push_back(f.get());
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
        table.cells[r].emplace_back();
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return table;
}

void write_sweep_csv(const SweepTable& table, std::ostream& out) {
  out << "scenario";
  for (Configuration c : table.configurations) out << ',' << to_string(c);
  out << '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out << table.rows[r];
    for (std::size_t c = 0; c < table.configurations.size(); ++c) {
      out << fmt::format(",{}", table.at(r, c).total_cost);
    }
    out << '\n';
  }
}

void write_hourly_csv(const SweepTable& table, std::ostream& out) {
  std::size_t hours = 0;
  for (const auto& row : table.cells) {
    for (const auto& cell : row) hours = std::max(hours, cell.hourly_kw.size());
  }
  out << "hour";
  for (const std::string& row : table.rows) {
    for (Configuration c : table.configurations) out << fmt::format(",{}-{}", row, to_string(c));
  }
  out << '\n';
  for (std::size_t h = 0; h < hours; ++h) {
    out << h;
    for (const auto& row : table.cells) {
      for (const auto& cell : row) {
        if (h < cell.hourly_kw.size()) {
          out << fmt::format(",{}", cell.hourly_kw[h]);
        } else {
          out << ',';
        }
      }
    }
    out << '\n';
  }
}

std::string sweep_json(const SweepTable& table) {
  ordered_json j;
  j["rows"] = table.rows;
  j["configurations"] = ordered_json::array();
  for (Configuration c : table.configurations) j["configurations"].push_back(to_string(c));
  j["total_cost"] = ordered_json::array();
  j["runs"] = ordered_json::array();
  for (const auto& row : table.cells) {
    ordered_json costs = ordered_json::array();
    for (const auto& cell : row) {
      costs.push_back(cell.total_cost);
      j["runs"].push_back(summary_object(cell));
    }
    j["total_cost"].push_back(costs);
  }
  return j.dump(2) + "\n";
}

std::string format_sweep_table(const SweepTable& table) {
  std::string text = fmt::format("{:<10}", "");
  for (Configuration c : table.configurations) text += fmt::format("{:>14}", to_string(c));
  text += '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    text += fmt::format("{:<10}", table.rows[r]);
    for (std::size_t c = 0; c < table.configurations.size(); ++c) {
      text += fmt::format("{:>14}", fmt::format("${:.4f}", table.at(r, c).total_cost));
    }
    text += '\n';
  }
  return text;
}

}  // namespace bems
