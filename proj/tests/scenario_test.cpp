#include "bems/errors.hpp"
#include "bems/scenario.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using bems::Configuration;
using bems::OccupancyPattern;
using bems::Scenario;
using bems::ValidationError;

namespace fs = std::filesystem;

// Four-step day on the builtin model.
const char* kMinimal = R"(hvac:
  rated_fan_power_w: [600]
  rated_flow_kg_s: [1]
model:
  builtin: single_zone
comfort:
  occupancy: [[[6, 18]]]
span: 4
step_hours: 6
traces:
  disturbances:
    - [20, 0, 200]
    - [25, 500, 800]
    - [28, 300, 800]
    - [22, 0, 200]
  load_kw: [1, 2, 2, 1]
tariff: [0.1, 0.2, 0.3, 0.1]
)";

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bems_scenario_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto at = text.find(from);
  EXPECT_NE(at, std::string::npos) << from;
  if (at != std::string::npos) text.replace(at, from.size(), to);
  return text;
}

std::string rejected_field(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "<accepted>";
}

TEST(Scenario, MinimalFileFillsDefaults) {
  const Scenario s = bems::parse_scenario(kMinimal);
  EXPECT_EQ(s.span, 4);
  EXPECT_EQ(s.model.states(), 7);
  EXPECT_EQ(s.initial_state, Eigen::VectorXd::Constant(7, 24.0));
  EXPECT_FALSE(s.battery.has_value());
  EXPECT_FALSE(s.pv.has_value());
  EXPECT_DOUBLE_EQ(s.comfort.occupied_min, 21.0);
  EXPECT_DOUBLE_EQ(s.comfort.occupied_max, 25.0);
  EXPECT_DOUBLE_EQ(s.hvac.supply_temperature[0], 12.8);
  EXPECT_EQ(s.controller, bems::ControllerOptions{});
  EXPECT_TRUE(s.forecast_error.channels.empty());
  EXPECT_FALSE(s.occupied(0, 0));
  EXPECT_TRUE(s.occupied(0, 1));
  EXPECT_TRUE(s.occupied(0, 2));
  EXPECT_FALSE(s.occupied(0, 3));
}

TEST(Scenario, ShortTariffNamesTariff) {
  Scenario s = bems::paper_scenario(OccupancyPattern::Day, Configuration::Loads);
  s.price.pop_back();
  ASSERT_EQ(s.price.size(), 95u);
  EXPECT_EQ(rejected_field([&] { s.validate(); }), "tariff");

  const std::string text = replace(kMinimal, "tariff: [0.1, 0.2, 0.3, 0.1]", "tariff: [0.1, 0.2, 0.3]");
  try {
    bems::parse_scenario(text);
    FAIL() << "accepted a short tariff";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "tariff");
    EXPECT_EQ(e.line(), 17);
  }
}

TEST(Scenario, ErrorsCarryLineNumbers) {
  const std::string text = replace(kMinimal, "  rated_flow_kg_s: [1]", "  rated_flow_kg_s: [-1]");
  try {
    bems::parse_scenario(text);
    FAIL() << "accepted a negative flow";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "hvac.rated_flow_kg_s");
    EXPECT_EQ(e.line(), 3);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  try {
    bems::parse_scenario(std::string(kMinimal) + "colour: blue\n");
    FAIL() << "accepted an unknown key";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "colour");
    EXPECT_EQ(e.line(), 18);
  }
}

TEST(Scenario, RoundTripInline) {
  for (auto pattern : {OccupancyPattern::Night, OccupancyPattern::Day}) {
    for (auto config : {Configuration::Loads, Configuration::LoadsBattery, Configuration::LoadsBatteryPv}) {
      const Scenario s = bems::paper_scenario(pattern, config);
      const Scenario back = bems::parse_scenario(bems::dump_scenario(s));
      EXPECT_TRUE(back == s) << s.name;
      EXPECT_EQ(bems::dump_scenario(back), bems::dump_scenario(s));
    }
  }
  const Scenario minimal = bems::parse_scenario(kMinimal);
  EXPECT_TRUE(bems::parse_scenario(bems::dump_scenario(minimal)) == minimal);
}

TEST(Scenario, RoundTripCsvSidecar) {
  const fs::path dir = scratch_dir("csv");
  Scenario s = bems::paper_scenario(OccupancyPattern::Night, Configuration::LoadsBatteryPv);
  s.controller.soft_comfort = true;
  s.controller.window_mode = bems::WindowMode::Shrink;
  bems::save_scenario(s, dir / "day.yaml", dir / "day.csv");
  ASSERT_TRUE(fs::exists(dir / "day.csv"));

  std::ifstream csv(dir / "day.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "time,ambient,solar,internal,alpha,load_kw,price");

  const Scenario loaded = bems::load_scenario(dir / "day.yaml");
  EXPECT_TRUE(loaded == s);

  // save(load(s)) == load(save(s)): saving the loaded copy reproduces the files.
  bems::save_scenario(loaded, dir / "again.yaml", dir / "again.csv");
  std::stringstream a, b;
  a << std::ifstream(dir / "day.csv").rdbuf();
  b << std::ifstream(dir / "again.csv").rdbuf();
  EXPECT_EQ(a.str(), b.str());
  EXPECT_TRUE(bems::load_scenario(dir / "again.yaml") == loaded);
}

TEST(Scenario, CsvErrorsNameTheRow) {
  const fs::path dir = scratch_dir("csv_bad");
  const Scenario s = bems::paper_scenario(OccupancyPattern::Day, Configuration::Loads);
  bems::save_scenario(s, dir / "day.yaml", dir / "day.csv");
  std::stringstream content;
  content << std::ifstream(dir / "day.csv").rdbuf();
  std::string text = content.str();
  std::size_t at = 0;
  for (int i = 0; i < 5; ++i) at = text.find('\n', at) + 1;  // start of line 6
  text.insert(at, "x");
  std::ofstream(dir / "day.csv") << text;
  try {
    bems::load_scenario(dir / "day.yaml");
    FAIL() << "accepted a malformed CSV row";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "traces.csv");
    EXPECT_EQ(e.line(), 6);
  }
}

TEST(Scenario, ExplicitModelMatrices) {
  const std::string text = replace(kMinimal, "  builtin: single_zone\n",
                                   "  n: 2\n  m: 1\n  l: 3\n"
                                   "  A: [[0.9, 0.05], [0.02, 0.97]]\n"
                                   "  B: [[-0.01], [0]]\n"
                                   "  C: [[1, 0]]\n"
                                   "  E: [[0.05, 0.0001, 0.0002], [0.01, 0, 0]]\n"
                                   "  x0: [23, 22]\n");
  const Scenario s = bems::parse_scenario(text);
  EXPECT_EQ(s.model.states(), 2);
  EXPECT_DOUBLE_EQ(s.model.A()(0, 1), 0.05);
  EXPECT_DOUBLE_EQ(s.initial_state[1], 22.0);
  EXPECT_TRUE(bems::parse_scenario(bems::dump_scenario(s)) == s);

  EXPECT_EQ(rejected_field([&] { bems::parse_scenario(replace(text, "[0.02, 0.97]", "[0.02]")); }),
            "model.A");
  EXPECT_EQ(rejected_field([&] { bems::parse_scenario(replace(text, "C: [[1, 0]]", "C: [[1, 1]]")); }),
            "model.C");
  EXPECT_EQ(rejected_field([&] { bems::parse_scenario(replace(text, "x0: [23, 22]", "x0: [23]")); }),
            "model.x0");
}

// Break one field at a time; each rejection must name the broken field.
TEST(Scenario, MutationFuzzerNamesField) {
  const Scenario base = bems::paper_scenario(OccupancyPattern::Day, Configuration::LoadsBatteryPv);
  ASSERT_NO_THROW(base.validate());
  const double nan = std::nan("");

  struct Mutation {
    std::string field;
    std::function<void(Scenario&)> apply;
  };
  const std::vector<Mutation> mutations = {
      {"step_hours", [](Scenario& s) { s.step_hours = 0.0; }},
      {"step_hours", [&](Scenario& s) { s.step_hours = nan; }},
      {"span", [](Scenario& s) { s.span = -1; }},
      {"model.x0", [](Scenario& s) { s.initial_state.resize(3); }},
      {"model.x0", [&](Scenario& s) { s.initial_state[2] = nan; }},
      {"hvac.rated_flow_kg_s", [](Scenario& s) { s.hvac.rated_flow[0] = 0.0; }},
      {"hvac.rated_fan_power_w", [](Scenario& s) { s.hvac.rated_fan_power_w[0] = -1.0; }},
      {"hvac.flow_min_kg_s", [](Scenario& s) { s.hvac.flow_min[0] = -0.1; }},
      {"hvac.flow_max_kg_s", [](Scenario& s) { s.hvac.flow_max[0] = -0.1; }},
      {"hvac.cop", [](Scenario& s) { s.hvac.cop = 0.0; }},
      {"hvac.air_specific_heat", [](Scenario& s) { s.hvac.air_specific_heat = -1.0; }},
      {"hvac.return_ratio", [](Scenario& s) { s.hvac.return_ratio = 1.5; }},
      {"hvac.max_power_w", [](Scenario& s) { s.hvac.max_power_w = -5.0; }},
      {"hvac.supply_temperature_c", [](Scenario& s) { s.hvac.supply_temperature[0] = 14.0; }},
      {"battery.capacity_kwh", [](Scenario& s) { s.battery->capacity_kwh = 0.0; }},
      {"battery.decay_per_step", [](Scenario& s) { s.battery->decay_per_step = 1.0; }},
      {"battery.efficiency", [](Scenario& s) { s.battery->efficiency = 1.2; }},
      {"battery.soc_min", [](Scenario& s) { s.battery->soc_min = -0.1; }},
      {"battery.soc_max", [](Scenario& s) { s.battery->soc_max = 0.1; }},
      {"battery.max_discharge_kw", [](Scenario& s) { s.battery->max_discharge_kw = -1.0; }},
      {"battery.max_charge_kw", [&](Scenario& s) { s.battery->max_charge_kw = nan; }},
      {"battery.step_hours", [](Scenario& s) { s.battery->step_hours = 0.5; }},
      {"battery.initial_soc", [](Scenario& s) { s.initial_soc = 0.99; }},
      {"pv.rated_kw", [](Scenario& s) { s.pv->rated_kw = -4.0; }},
      {"traces.alpha", [](Scenario& s) { s.pv->alpha[10] = 1.5; }},
      {"traces.alpha", [](Scenario& s) { s.pv->alpha.pop_back(); }},
      {"traces.load_kw", [](Scenario& s) { s.load.kw[3] = -1.0; }},
      {"traces.load_kw", [](Scenario& s) { s.load.kw.pop_back(); }},
      {"traces.disturbances", [](Scenario& s) { s.disturbances.pop_back(); }},
      {"traces.disturbances", [](Scenario& s) { s.disturbances[4].resize(2); }},
      {"traces.disturbances", [&](Scenario& s) { s.disturbances[4][1] = nan; }},
      {"tariff", [](Scenario& s) { s.price.pop_back(); }},
      {"tariff", [&](Scenario& s) { s.price[7] = nan; }},
      {"comfort.occupied_c", [](Scenario& s) { s.comfort.occupied_min = 26.0; }},
      {"comfort.unoccupied_c", [](Scenario& s) { s.comfort.unoccupied_max = -20.0; }},
      {"comfort.occupancy", [](Scenario& s) { s.comfort.occupancy.clear(); }},
      {"comfort.occupancy", [](Scenario& s) { s.comfort.occupancy[0][0] = {18.0, 6.0}; }},
      {"comfort.occupancy", [](Scenario& s) { s.comfort.occupancy[0][0] = {6.0, 25.0}; }},
      {"forecast_error.variance", [](Scenario& s) { s.forecast_error.channels[0].variance = -2.0; }},
      {"forecast_error.variance", [](Scenario& s) { s.forecast_error.channels.pop_back(); }},
      {"forecast_error.mean", [&](Scenario& s) { s.forecast_error.channels[1].mean = nan; }},
      {"controller.window", [](Scenario& s) { s.controller.window = 0; }},
      {"controller.comfort_penalty", [](Scenario& s) { s.controller.comfort_penalty = -1.0; }},
      {"controller.tolerance", [](Scenario& s) { s.controller.tolerance = 0.0; }},
      {"controller.max_iterations", [](Scenario& s) { s.controller.max_iterations = 0; }},
      {"controller.multistart", [](Scenario& s) { s.controller.multistart = 0; }},
  };
  for (const Mutation& m : mutations) {
    Scenario s = base;
    m.apply(s);
    EXPECT_EQ(rejected_field([&] { s.validate(); }), m.field);
  }
}

// The same idea at the file level: every key of the minimal file, broken in place.
TEST(Scenario, FileMutationsNameField) {
  const std::vector<std::pair<std::string, std::pair<std::string, std::string>>> cases = {
      {"hvac.rated_fan_power_w", {"rated_fan_power_w: [600]", "rated_fan_power_w: [600, 1]"}},
      {"hvac.rated_flow_kg_s", {"rated_flow_kg_s: [1]", "rated_flow_kg_s: one"}},
      {"model.builtin", {"builtin: single_zone", "builtin: two_zone"}},
      {"comfort.occupancy", {"occupancy: [[[6, 18]]]", "occupancy: [[[6]]]"}},
      {"span", {"span: 4", "span: four"}},
      {"span", {"span: 4", "span: 2.5"}},
      {"step_hours", {"step_hours: 6", "step_hours: -6"}},
      {"traces.disturbances", {"    - [22, 0, 200]", "    - [22, 0]"}},
      {"traces.load_kw", {"load_kw: [1, 2, 2, 1]", "load_kw: [1, 2, 2]"}},
      {"tariff", {"tariff: [0.1, 0.2, 0.3, 0.1]", "tariff: 0.1"}},
  };
  for (const auto& [field, edit] : cases) {
    const std::string text = replace(kMinimal, edit.first, edit.second);
    EXPECT_EQ(rejected_field([&] { bems::parse_scenario(text); }), field) << edit.second;
  }
  const std::string extra = std::string(kMinimal) +
                            "controller:\n  window_mode: sideways\n";
  EXPECT_EQ(rejected_field([&] { bems::parse_scenario(extra); }), "controller.window_mode");
  EXPECT_EQ(rejected_field([&] { bems::parse_scenario(std::string(kMinimal) + "battery:\n  soc_max: 2\n"); }),
            "battery.soc_max");
  EXPECT_EQ(rejected_field([&] { bems::parse_scenario(std::string(kMinimal) + "pv:\n  rated_kw: 4\n"); }),
            "traces.alpha");
  EXPECT_EQ(rejected_field([&] { bems::parse_scenario("hvac: [\n"); }), "scenario");
}

TEST(Scenario, BuiltinsValidate) {
  for (auto pattern : {OccupancyPattern::Night, OccupancyPattern::Day}) {
    for (auto config : {Configuration::Loads, Configuration::LoadsBattery, Configuration::LoadsBatteryPv}) {
      const Scenario s = bems::paper_scenario(pattern, config);
      EXPECT_NO_THROW(s.validate()) << s.name;
      EXPECT_EQ(s.span, 96);
      EXPECT_DOUBLE_EQ(s.step_hours, 0.25);
      EXPECT_EQ(s.profile_length(), 96u);
      EXPECT_EQ(s.model.states(), 7);
      EXPECT_DOUBLE_EQ(s.comfort.occupied_min, 21.0);
      EXPECT_DOUBLE_EQ(s.comfort.occupied_max, 25.0);
    }
  }
}

TEST(Scenario, OccupancyBitmaps) {
  const Scenario night = bems::paper_scenario(OccupancyPattern::Night, Configuration::Loads);
  const Scenario day = bems::paper_scenario(OccupancyPattern::Day, Configuration::Loads);
  for (std::size_t k = 0; k < 96; ++k) {
    const double h = 0.25 * static_cast<double>(k);
    const bool night_block = h < 6.0 || h >= 18.0;
    EXPECT_EQ(night.occupied(0, k), night_block) << h;
    EXPECT_EQ(day.occupied(0, k), !night_block) << h;
    EXPECT_DOUBLE_EQ(night.comfort_min(k)[0], night_block ? 21.0 : -10.0);
  }
}

TEST(Scenario, ConfigurationsSelectDevices) {
  const Scenario loads = bems::paper_scenario(OccupancyPattern::Night, Configuration::Loads);
  EXPECT_FALSE(loads.battery.has_value());
  EXPECT_FALSE(loads.pv.has_value());

  const Scenario battery = bems::paper_scenario(OccupancyPattern::Night, Configuration::LoadsBattery);
  ASSERT_TRUE(battery.battery.has_value());
  EXPECT_FALSE(battery.pv.has_value());
  EXPECT_DOUBLE_EQ(battery.battery->capacity_kwh, 6.0);
  EXPECT_DOUBLE_EQ(battery.initial_soc, 0.25);

  const Scenario full = bems::paper_scenario(OccupancyPattern::Night, Configuration::LoadsBatteryPv);
  ASSERT_TRUE(full.pv.has_value());
  EXPECT_DOUBLE_EQ(full.pv->rated_kw, 4.0);
  std::size_t peak = 0;
  for (std::size_t k = 0; k < 96; ++k) {
    if (full.pv_kw(k) > full.pv_kw(peak)) peak = k;
  }
  EXPECT_EQ(peak, 48u);  // noon
  EXPECT_DOUBLE_EQ(full.pv_kw(0), 0.0);

  EXPECT_EQ(bems::parse_configuration("battery+pv"), Configuration::LoadsBatteryPv);
  EXPECT_EQ(bems::to_string(Configuration::LoadsBattery), "battery");
  EXPECT_THROW(bems::parse_configuration("solar"), ValidationError);
}

TEST(Scenario, TariffCheapOvernightPeakEvening) {
  const Scenario s = bems::paper_scenario(OccupancyPattern::Day, Configuration::Loads);
  for (std::size_t k = 0; k < 96; ++k) {
    const double h = 0.25 * static_cast<double>(k);
    if (h < 6.0) {
      EXPECT_LT(s.price_at(k), s.price_at(30)) << h;
    }
    if (h >= 17.0 && h < 21.0) {
      EXPECT_GT(s.price_at(k), s.price_at(30)) << h;
    }
    // Constant within each hour.
    EXPECT_DOUBLE_EQ(s.price_at(k), s.price_at(k - k % 4));
  }
}

TEST(Noise, ZeroVarianceIsExact) {
  Scenario s = bems::paper_scenario(OccupancyPattern::Day, Configuration::Loads);
  s.forecast_error.channels[0].variance = 0.0;
  const auto realized = bems::realize_disturbances(s, 7);
  ASSERT_EQ(realized.size(), 96u);
  for (std::size_t k = 0; k < realized.size(); ++k) EXPECT_EQ(realized[k], s.disturbances[k]);

  s.forecast_error.channels.clear();
  EXPECT_EQ(bems::realize_disturbances(s, 7)[10], s.disturbances[10]);
}

TEST(Noise, SampleMomentsOfVarianceTwo) {
  Scenario s = bems::paper_scenario(OccupancyPattern::Day, Configuration::Loads);
  s.span = 10000;
  const auto realized = bems::realize_disturbances(s, s.forecast_error.seed);
  ASSERT_EQ(realized.size(), 10000u);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < realized.size(); ++k) {
    const double e = realized[k][0] - s.disturbance(k)[0];
    sum += e;
    sum_sq += e * e;
    EXPECT_EQ(realized[k][1], s.disturbance(k)[1]);  // solar left exact
    EXPECT_EQ(realized[k][2], s.disturbance(k)[2]);
  }
  const double n = 10000.0;
  const double mean = sum / n;
  const double variance = (sum_sq - n * mean * mean) / (n - 1.0);
  EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(2.0) / std::sqrt(n));
  EXPECT_GE(variance, 1.8);
  EXPECT_LE(variance, 2.2);
}

TEST(Noise, SameSeedSameTrace) {
  const Scenario s = bems::paper_scenario(OccupancyPattern::Night, Configuration::Loads);
  const auto a = bems::realize_disturbances(s, 42);
  const auto b = bems::realize_disturbances(s, 42);
  const auto c = bems::realize_disturbances(s, 43);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k], b[k]);
    differs = differs || a[k] != c[k];
  }
  EXPECT_TRUE(differs);
}

TEST(Noise, MeanShiftsChannel) {
  Scenario s = bems::paper_scenario(OccupancyPattern::Night, Configuration::Loads);
  s.forecast_error.channels[2] = {100.0, 0.0};
  const auto realized = bems::realize_disturbances(s, 1);
  EXPECT_DOUBLE_EQ(realized[5][2], s.disturbances[5][2] + 100.0);
}

}  // namespace
