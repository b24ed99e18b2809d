#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

namespace bems {

using Index = Eigen::Index;

/// Node temperatures of the RC network, °C. Room nodes come first by convention.
using ThermalState = Eigen::VectorXd;
/// One sample of the disturbance channels (ambient °C, solar W/m², internal gains W, ...).
using DisturbanceSample = Eigen::VectorXd;

/**
 * Discrete-time bilinear RC thermal model
 *
 *   x⁺ = A x + B (u ∘ (T_s − C x)) + E d,    y = C x
 *
 * with n nodes, m conditioned rooms and l disturbance channels. The matrices are
 * per-step quantities for a fixed sampling interval; C must be a 0/1 selection
 * matrix picking one node per room.
 */
class ThermalModel {
 public:
  ThermalModel(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C,
               Eigen::MatrixXd E, Eigen::VectorXd supply_temperature);

  Index states() const { return A_.rows(); }
  Index zones() const { return C_.rows(); }
  Index disturbances() const { return E_.cols(); }

  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::MatrixXd& B() const { return B_; }
  const Eigen::MatrixXd& C() const { return C_; }
  const Eigen::MatrixXd& E() const { return E_; }
  const Eigen::VectorXd& supply_temperature() const { return supply_; }

  /// Node index selected by row `zone` of C.
  Index room_node(Index zone) const { return room_nodes_[static_cast<std::size_t>(zone)]; }

  ThermalState step(const ThermalState& x, const Eigen::VectorXd& u,
                    const DisturbanceSample& d) const;

  Eigen::VectorXd output(const ThermalState& x) const;

  /// States x¹…x^K for K = controls.size(); empty when K = 0.
  std::vector<ThermalState> simulate(const ThermalState& x0,
                                     std::span<const Eigen::VectorXd> controls,
                                     std::span<const DisturbanceSample> disturbances) const;

  bool operator==(const ThermalModel& other) const;

 private:
  void check_state(const ThermalState& x) const;

  Eigen::MatrixXd A_, B_, C_, E_;
  Eigen::VectorXd supply_;
  std::vector<Index> room_nodes_;
};

/// Seven-node single-zone model (room, four walls, floor, ceiling) sampled at 15 min,
/// supply air at 12.8 °C. Disturbance channels: ambient °C, solar W/m², internal gains W.
ThermalModel default_single_zone();

/// Largest eigenvalue magnitude of a square matrix.
double spectral_radius(const Eigen::MatrixXd& A);

}  // namespace bems
