#include "bems/report.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "bems/errors.hpp"
#include "bems/selfcheck.hpp"

namespace {

namespace fs = std::filesystem;
using bems::Configuration;
using bems::OccupancyPattern;
using bems::Scenario;

Scenario short_day(OccupancyPattern pattern, Configuration config, int steps = 20, int window = 12) {
  Scenario s = bems::paper_scenario(pattern, config);
  s.span = steps;
  s.controller.window = window;
  return s;
}

std::string read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) out.push_back(cell);
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bems_report_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int cli(const std::string& args) {
  const std::string command = std::string(BEMS_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Report, SummaryMatchesTrace) {
  const Scenario s = short_day(OccupancyPattern::Day, Configuration::LoadsBatteryPv);
  const bems::ClosedLoopTrace trace = bems::receding_horizon_run(s);
  const bems::CostSummary sum = bems::summarize(trace);

  double cost = 0.0;
  double violation = 0.0;
  for (const auto& r : trace.steps) {
    cost += s.price[r.step] * r.total_kw * s.step_hours;
    violation += std::max({0.0, r.y[0] - 25.0, (r.occupied ? 21.0 : -10.0) - r.y[0]}) * s.step_hours;
  }
  EXPECT_NEAR(sum.total_cost, cost, 1e-9 * std::abs(cost));
  EXPECT_NEAR(sum.comfort_violation, violation, 1e-12);
  EXPECT_EQ(sum.steps, 20);
  ASSERT_EQ(sum.hourly_kw.size(), 5u);
  for (std::size_t h = 0; h < 5; ++h) {
    double mean = 0.0;
    for (std::size_t k = 4 * h; k < 4 * h + 4; ++k) mean += trace.steps[k].total_kw / 4.0;
    EXPECT_NEAR(sum.hourly_kw[h], mean, 1e-12);
  }
  EXPECT_EQ(sum.solver.steps, 20);
  EXPECT_EQ(sum.solver.converged + sum.solver.max_iterations + sum.solver.infeasible +
                sum.solver.numerical_errors,
            20);
  EXPECT_EQ(sum.final_soc, trace.final_soc);
}

TEST(Report, SummaryJsonRoundTrips) {
  const Scenario s = short_day(OccupancyPattern::Night, Configuration::LoadsBattery, 8, 8);
  const bems::CostSummary sum = bems::summarize(bems::receding_horizon_run(s));
  const auto j = nlohmann::json::parse(bems::summary_json(sum));
  EXPECT_EQ(j["scenario"], s.name);
  EXPECT_EQ(j["total_cost"].get<double>(), sum.total_cost);
  EXPECT_EQ(j["hourly_kw"].get<std::vector<double>>(), sum.hourly_kw);
  EXPECT_EQ(j["solver"]["steps"].get<int>(), 8);
}

TEST(Report, TraceCsvRowsAndCostColumn) {
  const Scenario s = short_day(OccupancyPattern::Day, Configuration::LoadsBatteryPv, 12, 8);
  const bems::ClosedLoopTrace trace = bems::receding_horizon_run(s);
  std::ostringstream out;
  bems::write_trace_csv(trace, out);
  const auto rows = lines(out.str());
  ASSERT_EQ(rows.size(), 13u);
  const auto header = split(rows[0]);
  const auto cost_column = std::find(header.begin(), header.end(), "cost") - header.begin();
  ASSERT_LT(cost_column, static_cast<long>(header.size()));
  double sum = 0.0;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto cells = split(rows[k]);
    ASSERT_EQ(cells.size(), header.size()) << "row " << k;
    const double cost = std::stod(cells[static_cast<std::size_t>(cost_column)]);
    EXPECT_EQ(cost, trace.steps[k - 1].cost);  // shortest round-trip formatting
    sum += cost;
  }
  EXPECT_NEAR(sum, trace.total_cost, 1e-9 * std::abs(sum));
}

TEST(Report, FullDayArtifactsAreDeterministic) {
  const Scenario s = bems::paper_scenario(OccupancyPattern::Night, Configuration::Loads);
  const fs::path a = scratch("day_a");
  const fs::path b = scratch("day_b");
  const auto first = bems::run_and_report(s, a);
  bems::run_and_report(s, b);
  for (const char* name : {"trace.csv", "solve_log.csv", "prediction.csv", "summary.json"}) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(read(a / name), read(b / name)) << name;
  }
  EXPECT_EQ(lines(read(a / "trace.csv")).size(), 97u);
  EXPECT_EQ(lines(read(a / "solve_log.csv")).size(), 97u);
  const auto j = nlohmann::json::parse(read(a / "summary.json"));
  EXPECT_EQ(j["steps"].get<int>(), 96);
  EXPECT_EQ(j["hourly_kw"].size(), 24u);
  EXPECT_NEAR(j["total_cost"].get<double>(), first.trace.total_cost, 1e-9 * first.trace.total_cost);
}

TEST(Report, ZeroSpanWritesEmptyTrace) {
  Scenario s = short_day(OccupancyPattern::Day, Configuration::Loads);
  s.span = 0;
  const fs::path dir = scratch("zero");
  const auto a = bems::run_and_report(s, dir);
  EXPECT_EQ(a.summary.total_cost, 0.0);
  EXPECT_EQ(lines(read(dir / "trace.csv")).size(), 1u);
  EXPECT_TRUE(a.summary.hourly_kw.empty());
}

TEST(Report, WithConfigurationDropsDevices) {
  const Scenario base = bems::builtin_base(OccupancyPattern::Day);
  const Scenario loads = bems::with_configuration(base, Configuration::Loads);
  EXPECT_FALSE(loads.battery);
  EXPECT_FALSE(loads.pv);
  EXPECT_EQ(loads.name, "pattern2-loads");
  Scenario expected = bems::paper_scenario(OccupancyPattern::Day, Configuration::LoadsBattery);
  EXPECT_EQ(bems::with_configuration(base, Configuration::LoadsBattery), expected);
  try {
    bems::with_configuration(loads, Configuration::LoadsBattery);
    FAIL() << "expected ValidationError";
  } catch (const bems::ValidationError& e) {
    EXPECT_EQ(e.field(), "battery");
  }
  EXPECT_THROW(bems::parse_pattern("pattern3"), bems::ValidationError);
}

TEST(Report, SweepTableShapeAndRepeatedColumn) {
  std::vector<Scenario> bases;
  for (auto p : {OccupancyPattern::Night, OccupancyPattern::Day}) {
    Scenario s = bems::builtin_base(p);
    s.span = 8;
    s.controller.window = 8;
    bases.push_back(s);
  }
  const std::vector<Configuration> columns = {Configuration::Loads, Configuration::LoadsBattery,
                                              Configuration::LoadsBatteryPv, Configuration::LoadsBattery};
  const fs::path dir = scratch("sweep");
  const bems::SweepTable table = bems::sweep(bases, columns, {}, dir);
  ASSERT_EQ(table.cells.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r) {
    ASSERT_EQ(table.cells[r].size(), 4u);
    EXPECT_EQ(table.at(r, 1).total_cost, table.at(r, 3).total_cost);
    EXPECT_EQ(table.at(r, 0).scenario, table.rows[r] + "-loads");
  }
  EXPECT_TRUE(fs::exists(dir / "pattern1-battery" / "trace.csv"));
  EXPECT_TRUE(fs::exists(dir / "pattern1-battery-2" / "trace.csv"));
  EXPECT_EQ(read(dir / "pattern1-battery" / "trace.csv"), read(dir / "pattern1-battery-2" / "trace.csv"));

  // Each cell equals its sequential run.
  const auto alone = bems::summarize(bems::receding_horizon_run(bems::with_configuration(bases[1], columns[2])));
  EXPECT_EQ(alone.total_cost, table.at(1, 2).total_cost);

  std::ostringstream csv;
  bems::write_sweep_csv(table, csv);
  const auto rows = lines(csv.str());
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "scenario,loads,battery,battery+pv,battery");
  EXPECT_EQ(split(rows[2]).size(), 5u);

  std::ostringstream hourly;
  bems::write_hourly_csv(table, hourly);
  EXPECT_EQ(lines(hourly.str()).size(), 3u);  // header and two hours

  const auto j = nlohmann::json::parse(bems::sweep_json(table));
  EXPECT_EQ(j["total_cost"].size(), 2u);
  EXPECT_EQ(j["total_cost"][0].size(), 4u);
  EXPECT_EQ(j["runs"].size(), 8u);
}

TEST(Report, OverridesReachTheController) {
  Scenario s = bems::builtin_base(OccupancyPattern::Day);
  bems::Overrides o;
  o.seed = 42;
  o.soft_comfort = true;
  o.terminal_soc = true;
  o.tolerance = 1e-5;
  o.max_iterations = 500;
  o.apply(s);
  EXPECT_EQ(s.seed, 42u);
  EXPECT_EQ(s.forecast_error.seed, 42u);
  EXPECT_TRUE(s.controller.soft_comfort);
  EXPECT_TRUE(s.controller.terminal_soc);
  EXPECT_EQ(s.controller.tolerance, 1e-5);
  EXPECT_EQ(s.controller.max_iterations, 500);
}

TEST(Selfcheck, CleanRunPasses) {
  std::ostringstream log;
  const auto results = bems::selfcheck({}, log);
  EXPECT_TRUE(bems::all_passed(results)) << log.str();
  EXPECT_EQ(results.size(), 50u + 10u + 5u);
  EXPECT_NE(log.str().find("grid 0."), std::string::npos);
  EXPECT_NE(log.str().find("gap "), std::string::npos);
}

TEST(Selfcheck, InjectedFaultsAreNamed) {
  for (auto fault : {bems::InjectedFault::ObjectiveGradient, bems::InjectedFault::ConstraintJacobian}) {
    bems::SelfcheckOptions options;
    options.gradient_problems = 6;
    options.grid_instances = 0;
    options.invariants = false;
    options.fault = fault;
    std::ostringstream log;
    const auto results = bems::selfcheck(options, log);
    EXPECT_FALSE(bems::all_passed(results));
    for (const auto& r : results) {
      EXPECT_FALSE(r.passed) << r.name;
      EXPECT_EQ(r.name.rfind("gradient[", 0), 0u) << r.name;
    }
    const std::string expected = fault == bems::InjectedFault::ObjectiveGradient ? "at objective col 0" : "at row 0 col 0";
    EXPECT_NE(log.str().find(expected), std::string::npos) << log.str();
  }
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  {
    std::ofstream bad(dir / "bad.yaml");
    bad << "name: bad\nstep_hours: -1\n";
  }
  Scenario empty = short_day(OccupancyPattern::Day, Configuration::Loads);
  empty.span = 0;
  bems::save_scenario(empty, dir / "empty.yaml");

  EXPECT_EQ(cli("validate --builtin pattern2 --config battery"), 0);
  EXPECT_EQ(cli("validate --scenario " + (dir / "bad.yaml").string()), 2);
  EXPECT_EQ(cli("validate --scenario " + (dir / "missing.yaml").string()), 2);
  EXPECT_EQ(cli("validate --scenario " + (dir / "empty.yaml").string() + " --config battery"), 2);
  EXPECT_EQ(cli("run --scenario " + (dir / "empty.yaml").string() + " --out " + (dir / "empty").string()), 0);
  EXPECT_EQ(lines(read(dir / "empty" / "trace.csv")).size(), 1u);
  EXPECT_EQ(nlohmann::json::parse(read(dir / "empty" / "summary.json"))["total_cost"].get<double>(), 0.0);
  EXPECT_EQ(cli("run --builtin pattern1 --config battery --max-iter 1 --abort-on-failure --out " +
                (dir / "abort").string()),
            3);
  EXPECT_EQ(cli("selfcheck --quick"), 0);
  EXPECT_EQ(cli("selfcheck --quick --inject-fault gradient"), 4);
  EXPECT_NE(cli("frobnicate"), 0);
}

}  // namespace
