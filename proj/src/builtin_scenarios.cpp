#include <cmath>
#include <numbers>

#include "bems/scenario.hpp"

namespace bems {

namespace {

constexpr int kSteps = 96;
constexpr double kStepHours = 0.25;

// Warm afternoon: 16 °C at 05:00, 29 °C at 15:00, a 10 h rise and a 14 h fall.
double ambient_c(double h) {
  constexpr double low = 5.0, high = 15.0;
  if (h >= low && h <= high) return 22.5 - 6.5 * std::cos(std::numbers::pi * (h - low) / (high - low));
  const double since_peak = std::fmod(h - high + 24.0, 24.0);
  return 22.5 + 6.5 * std::cos(std::numbers::pi * since_peak / (24.0 - (high - low)));
}

double daylight(double h) {
  return h > 6.0 && h < 18.0 ? std::sin(std::numbers::pi * (h - 6.0) / 12.0) : 0.0;
}

// $/kWh: off-peak overnight, shoulder during the day, peak 17:00-21:00.
double tariff(double h) {
  if (h < 6.0) return 0.08;
  if (h < 17.0) return 0.14;
  if (h < 21.0) return 0.28;
  return 0.14;
}

}  // namespace

Scenario paper_scenario(OccupancyPattern pattern, Configuration config) {
  Scenario s;
  const bool night = pattern == OccupancyPattern::Night;
  s.name = std::string(night ? "pattern1-" : "pattern2-") + to_string(config);
  s.step_hours = kStepHours;
  s.span = kSteps;
  s.seed = 0;
  s.model = default_single_zone();
  s.initial_state = ThermalState::Constant(s.model.states(), 24.0);
  s.hvac = default_hvac();

  s.comfort.occupancy = night ? std::vector<std::vector<OccupancyWindow>>{{{0.0, 6.0}, {18.0, 24.0}}}
                              : std::vector<std::vector<OccupancyWindow>>{{{6.0, 18.0}}};

  std::vector<double> alpha;
  for (int k = 0; k < kSteps; ++k) {
    const double h = k * kStepHours;
    const bool occupied = s.occupied(0, static_cast<std::size_t>(k));
    const double a = daylight(h) * daylight(h);
    alpha.push_back(a);
    s.disturbances.push_back(
        Eigen::Vector3d(ambient_c(h), 700.0 * daylight(h), occupied ? 800.0 : 200.0));
    s.load.kw.push_back(1.0 + (occupied ? 2.0 : 0.0) + 3.5 * a);
    s.price.push_back(tariff(h));
  }

  if (config != Configuration::Loads) {
    BatteryParams b;
    b.step_hours = kStepHours;
    s.battery = b;
    s.initial_soc = 0.25;
  }
  if (config == Configuration::LoadsBatteryPv) s.pv = PvParams{4.0, alpha};

  s.forecast_error.channels = {{0.0, 2.0}, {0.0, 0.0}, {0.0, 0.0}};
  s.forecast_error.seed = 1;
  return s;
}

}  // namespace bems
