#include "bems/devices.hpp"

#include <cmath>
#include <string>

#include "bems/errors.hpp"

namespace bems {

namespace {

void require(bool ok, const char* field, const std::string& message) {
  if (!ok) throw ValidationError(field, message);
}

bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

void HvacParams::validate() const {
  const Eigen::Index m = rated_flow.size();
  require(m >= 1, "hvac.rated_flow_kg_s", "needs at least one zone");
  require(rated_fan_power_w.size() == m, "hvac.rated_fan_power_w", "must have one entry per zone");
  require(supply_temperature.size() == m, "hvac.supply_temperature_c",
          "must have one entry per zone");
  require(flow_min.size() == m, "hvac.flow_min_kg_s", "must have one entry per zone");
  require(flow_max.size() == m, "hvac.flow_max_kg_s", "must have one entry per zone");
  require(finite(rated_flow) && (rated_flow.array() > 0.0).all(), "hvac.rated_flow_kg_s",
          "must be finite and > 0");
  require(finite(rated_fan_power_w) && (rated_fan_power_w.array() >= 0.0).all(),
          "hvac.rated_fan_power_w", "must be finite and >= 0");
  require(finite(supply_temperature), "hvac.supply_temperature_c", "must be finite");
  require(finite(flow_min) && (flow_min.array() >= 0.0).all(), "hvac.flow_min_kg_s",
          "must be finite and >= 0");
  require(finite(flow_max) && (flow_max.array() >= flow_min.array()).all(), "hvac.flow_max_kg_s",
          "must be finite and >= flow_min");
  require(std::isfinite(cop) && cop > 0.0, "hvac.cop", "must be > 0");
  require(std::isfinite(air_specific_heat) && air_specific_heat > 0.0, "hvac.air_specific_heat",
          "must be > 0");
  require(return_ratio >= 0.0 && return_ratio <= 1.0, "hvac.return_ratio", "must lie in [0, 1]");
  require(std::isfinite(max_power_w) && max_power_w >= 0.0, "hvac.max_power_w", "must be >= 0");
}

HvacParams default_hvac() {
  HvacParams p;
  p.rated_fan_power_w = Eigen::VectorXd::Constant(1, 600.0);
  p.rated_flow = Eigen::VectorXd::Constant(1, 1.0);
  p.supply_temperature = Eigen::VectorXd::Constant(1, 12.8);
  p.flow_min = Eigen::VectorXd::Zero(1);
  p.flow_max = Eigen::VectorXd::Constant(1, 1.0);
  return p;
}

void BatteryParams::validate() const {
  require(std::isfinite(capacity_kwh) && capacity_kwh > 0.0, "battery.capacity_kwh", "must be > 0");
  require(decay_per_step >= 0.0 && decay_per_step < 1.0, "battery.decay_per_step",
          "must lie in [0, 1)");
  require(efficiency > 0.0 && efficiency <= 1.0, "battery.efficiency", "must lie in (0, 1]");
  require(std::isfinite(step_hours) && step_hours > 0.0, "battery.step_hours", "must be > 0");
  require(soc_min >= 0.0 && soc_min <= 1.0, "battery.soc_min", "must lie in [0, 1]");
  require(soc_max >= 0.0 && soc_max <= 1.0 && soc_min < soc_max, "battery.soc_max",
          "must lie in [0, 1] and exceed soc_min");
  require(std::isfinite(max_discharge_kw) && max_discharge_kw >= 0.0, "battery.max_discharge_kw",
          "must be >= 0");
  require(std::isfinite(max_charge_kw) && max_charge_kw >= 0.0, "battery.max_charge_kw",
          "must be >= 0");
}

double BatteryParams::power_gain(double power_kw) const {
  const double rate = step_hours / capacity_kwh;
  if (strict_efficiency && power_kw < 0.0) return rate / efficiency;
  return rate * efficiency;
}

void PvParams::validate() const {
  require(std::isfinite(rated_kw) && rated_kw >= 0.0, "pv.rated_kw", "must be >= 0");
  for (double a : alpha) {
    require(std::isfinite(a) && a >= 0.0 && a <= 1.0, "traces.alpha", "must lie in [0, 1]");
  }
}

void LoadProfile::validate() const {
  for (double v : kw) {
    require(std::isfinite(v) && v >= 0.0, "traces.load_kw", "must be finite and >= 0");
  }
}

double fan_power(const HvacParams& p, Eigen::Index zone, double flow) {
  if (zone < 0 || zone >= p.zones()) throw DimensionError("fan_power: zone index out of range");
  if (!(flow >= 0.0)) throw std::invalid_argument("fan_power: flow must be >= 0");
  const double ratio = flow / p.rated_flow[zone];
  return p.rated_fan_power_w[zone] * ratio * ratio * ratio;
}

double cooling_power(const HvacParams& p, const Eigen::VectorXd& u, const Eigen::VectorXd& y,
                     double t_out) {
  if (u.size() != p.zones() || y.size() != p.zones()) {
    throw DimensionError("cooling_power: u and y must have one entry per zone");
  }
  if ((u.array() < 0.0).any()) throw std::invalid_argument("cooling_power: flow must be >= 0");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double inlet = p.return_ratio * y[i] + (1.0 - p.return_ratio) * t_out;
    sum += u[i] * (inlet - p.supply_temperature[i]);
  }
  return p.air_specific_heat / p.cop * sum;
}

double hvac_total_power(const HvacParams& p, const Eigen::VectorXd& u, const Eigen::VectorXd& y,
                        double t_out) {
  double total = cooling_power(p, u, y, t_out);
  for (Eigen::Index i = 0; i < u.size(); ++i) total += fan_power(p, i, u[i]);
  return total;
}

double soc_step(const BatteryParams& b, double soc, double power_kw) {
  return (1.0 - b.decay_per_step) * soc + b.power_gain(power_kw) * power_kw;
}

double pv_power(const PvParams& p, std::size_t k) {
  if (k >= p.alpha.size()) {
    throw std::out_of_range("pv_power: step " + std::to_string(k) + " outside the alpha profile");
  }
  return p.alpha[k] * p.rated_kw;
}

}  // namespace bems
