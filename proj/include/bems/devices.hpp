#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

namespace bems {

/**
 * Air-handling unit of a cooling-only HVAC system. Powers are in W, flows in kg/s,
 * temperatures in °C. Vector fields have one entry per conditioned zone.
 */
struct HvacParams {
  Eigen::VectorXd rated_fan_power_w;   // P_rated per zone
  Eigen::VectorXd rated_flow;          // u_rated per zone, > 0
  Eigen::VectorXd supply_temperature;  // T_s per zone
  Eigen::VectorXd flow_min;
  Eigen::VectorXd flow_max;
  double cop = 3.0;
  double air_specific_heat = 1006.0;  // J/(kg·°C)
  double return_ratio = 0.0;          // d_p in [0, 1]
  double max_power_w = 10000.0;       // P_H upper limit

  Eigen::Index zones() const { return rated_flow.size(); }

  /// Throws ValidationError naming the offending field.
  void validate() const;

  bool operator==(const HvacParams&) const = default;
};

/// Single-zone defaults: 600 W fan at 1 kg/s rated flow, flow in [0, 1] kg/s, T_s = 12.8 °C.
HvacParams default_hvac();

/// Battery with a single signed power P (kW): P > 0 charges, P < 0 discharges.
struct BatteryParams {
  double capacity_kwh = 6.0;
  double decay_per_step = 0.0;  // ν
  double efficiency = 0.95;     // ρ
  double step_hours = 0.25;     // τ
  double soc_min = 0.25;        // E⁻
  double soc_max = 0.95;        // E⁺
  double max_discharge_kw = 2.0;
  double max_charge_kw = 2.0;
  /// When set, ρ applies on charge and 1/ρ on discharge instead of ρ on the signed power.
  bool strict_efficiency = false;

  void validate() const;

  /// Gain multiplying P in the SOC update, i.e. d(SOC⁺)/dP. For the strict model
  /// the charge-side slope is used at P = 0.
  double power_gain(double power_kw) const;

  bool operator==(const BatteryParams&) const = default;
};

struct PvParams {
  double rated_kw = 0.0;
  std::vector<double> alpha;  // per-step irradiance multiplier in [0, 1]

  void validate() const;
  bool operator==(const PvParams&) const = default;
};

struct LoadProfile {
  std::vector<double> kw;

  void validate() const;
  bool operator==(const LoadProfile&) const = default;
};

/// Cubic fan law, W.
double fan_power(const HvacParams& p, Eigen::Index zone, double flow);

/// Chiller electric power, W. `y` are zone temperatures, `t_out` the ambient temperature.
double cooling_power(const HvacParams& p, const Eigen::VectorXd& u, const Eigen::VectorXd& y,
                     double t_out);

/// Chiller plus all fans, W.
double hvac_total_power(const HvacParams& p, const Eigen::VectorXd& u, const Eigen::VectorXd& y,
                        double t_out);

double soc_step(const BatteryParams& b, double soc, double power_kw);

double pv_power(const PvParams& p, std::size_t k);

}  // namespace bems
