#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bems/controller_options.hpp"
#include "bems/devices.hpp"
#include "bems/thermal_model.hpp"

namespace bems {

/// Half-open interval [start, end) of the day in hours, 0 <= start < end <= 24.
struct OccupancyWindow {
  double start_hour = 0.0;
  double end_hour = 0.0;

  bool operator==(const OccupancyWindow&) const = default;
};

/// Additive Gaussian error per disturbance channel; a zero variance leaves the channel exact.
struct NoiseChannel {
  double mean = 0.0;
  double variance = 0.0;

  bool operator==(const NoiseChannel&) const = default;
};

struct ForecastErrorSpec {
  std::vector<NoiseChannel> channels;  // one per disturbance channel, or empty for none
  std::uint64_t seed = 0;

  void validate(Index disturbance_channels) const;
  bool operator==(const ForecastErrorSpec&) const = default;
};

struct ComfortBand {
  double occupied_min = 21.0;
  double occupied_max = 25.0;
  double unoccupied_min = -10.0;
  double unoccupied_max = 45.0;
  std::vector<std::vector<OccupancyWindow>> occupancy;  // per zone

  bool operator==(const ComfortBand&) const = default;
};

/**
 * Everything needed for a closed-loop experiment. Per-step profiles share one
 * length L >= span; in wrap mode the controller reads them modulo L.
 */
struct Scenario {
  std::string name = "scenario";
  double step_hours = 0.25;
  int span = 96;
  std::uint64_t seed = 0;

  ThermalModel model = default_single_zone();
  ThermalState initial_state;
  HvacParams hvac;
  std::optional<BatteryParams> battery;
  double initial_soc = 0.25;
  std::optional<PvParams> pv;
  LoadProfile load;
  std::vector<double> price;  // $/kWh per step
  ComfortBand comfort;

  std::vector<DisturbanceSample> disturbances;  // forecast d^k
  ForecastErrorSpec forecast_error;
  ControllerOptions controller;

  std::size_t profile_length() const { return price.size(); }
  /// Profile index of absolute step k (modulo the profile length).
  std::size_t wrap(std::size_t k) const { return k % profile_length(); }

  bool occupied(Index zone, std::size_t k) const;
  /// Comfort limits for step k (wrapped), one entry per zone.
  Eigen::VectorXd comfort_min(std::size_t k) const;
  Eigen::VectorXd comfort_max(std::size_t k) const;

  double pv_kw(std::size_t k) const { return pv ? pv_power(*pv, wrap(k)) : 0.0; }
  double load_kw(std::size_t k) const { return load.kw[wrap(k)]; }
  double price_at(std::size_t k) const { return price[wrap(k)]; }
  const DisturbanceSample& disturbance(std::size_t k) const { return disturbances[wrap(k)]; }

  /// Checks every invariant; throws ValidationError naming the offending field.
  void validate() const;

  bool operator==(const Scenario&) const;
};

/// Reads a scenario file. Relative CSV sidecar paths resolve against the file's directory.
Scenario load_scenario(const std::filesystem::path& path);

/// Parses scenario text; `base_dir` resolves a CSV sidecar.
Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {});

/// Serializes with inline traces.
std::string dump_scenario(const Scenario& s);

/// Writes `path`; when `csv_sidecar` is given the per-step traces go there instead
/// of inline (requires three disturbance channels).
void save_scenario(const Scenario& s, const std::filesystem::path& path,
                   const std::optional<std::filesystem::path>& csv_sidecar = std::nullopt);

enum class OccupancyPattern { Night = 1, Day = 2 };

enum class Configuration { Loads, LoadsBattery, LoadsBatteryPv };

std::string to_string(Configuration config);
/// Accepts "loads", "battery" and "battery+pv".
Configuration parse_configuration(const std::string& text);

/// Built-in 24-hour, 15-minute scenario on the default single-zone model.
Scenario paper_scenario(OccupancyPattern pattern, Configuration config);

/// Realized disturbances D^k = d^k + ε^k for k in [0, span), noise drawn from `seed`.
std::vector<DisturbanceSample> realize_disturbances(const Scenario& s, std::uint64_t seed);

}  // namespace bems
