#include "bems/thermal_model.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <string>
#include <utility>

#include "bems/errors.hpp"

namespace bems {

namespace {

std::string shape(const Eigen::MatrixXd& M) {
  return std::to_string(M.rows()) + "x" + std::to_string(M.cols());
}

}  // namespace

ThermalModel::ThermalModel(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C,
                           Eigen::MatrixXd E, Eigen::VectorXd supply_temperature)
    : A_(std::move(A)),
      B_(std::move(B)),
      C_(std::move(C)),
      E_(std::move(E)),
      supply_(std::move(supply_temperature)) {
  const Index n = A_.rows();
  const Index m = C_.rows();
  const Index l = E_.cols();
  if (n < 1 || A_.cols() != n) throw DimensionError("A must be square with n >= 1, got " + shape(A_));
  if (m < 1 || m > n) throw DimensionError("C must have 1 <= m <= n rows, got " + shape(C_));
  if (C_.cols() != n) throw DimensionError("C must be m x n, got " + shape(C_));
  if (B_.rows() != n || B_.cols() != m) throw DimensionError("B must be n x m, got " + shape(B_));
  if (l < 1 || E_.rows() != n) throw DimensionError("E must be n x l with l >= 1, got " + shape(E_));
  if (supply_.size() != m) {
    throw DimensionError("supply temperature must have m = " + std::to_string(m) + " entries");
  }
  if (!A_.allFinite() || !B_.allFinite() || !E_.allFinite() || !supply_.allFinite()) {
    throw DimensionError("thermal matrices must be finite");
  }

  room_nodes_.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    Index selected = -1;
    for (Index j = 0; j < n; ++j) {
      const double c = C_(i, j);
      if (c == 1.0 && selected < 0) {
        selected = j;
      } else if (c != 0.0) {
        throw DimensionError("C row " + std::to_string(i) + " is not a 0/1 selection row");
      }
    }
    if (selected < 0) throw DimensionError("C row " + std::to_string(i) + " selects no node");
    room_nodes_.push_back(selected);
  }
}

void ThermalModel::check_state(const ThermalState& x) const {
  if (x.size() != states()) {
    throw DimensionError("state has " + std::to_string(x.size()) + " entries, model has " +
                         std::to_string(states()));
  }
}

ThermalState ThermalModel::step(const ThermalState& x, const Eigen::VectorXd& u,
                                const DisturbanceSample& d) const {
  check_state(x);
  if (u.size() != zones()) throw DimensionError("control vector must have m entries");
  if (d.size() != disturbances()) throw DimensionError("disturbance sample must have l entries");
  const Eigen::VectorXd drive = u.cwiseProduct(supply_ - C_ * x);
  return A_ * x + B_ * drive + E_ * d;
}

Eigen::VectorXd ThermalModel::output(const ThermalState& x) const {
  check_state(x);
  return C_ * x;
}

std::vector<ThermalState> ThermalModel::simulate(
    const ThermalState& x0, std::span<const Eigen::VectorXd> controls,
    std::span<const DisturbanceSample> disturbances) const {
  if (controls.size() != disturbances.size()) {
    throw DimensionError("simulate: " + std::to_string(controls.size()) + " controls but " +
                         std::to_string(disturbances.size()) + " disturbance samples");
  }
  check_state(x0);
  std::vector<ThermalState> states;
  states.reserve(controls.size());
  ThermalState x = x0;
  for (std::size_t k = 0; k < controls.size(); ++k) {
    x = step(x, controls[k], disturbances[k]);
    states.push_back(x);
  }
  return states;
}

bool ThermalModel::operator==(const ThermalModel& other) const {
  return A_ == other.A_ && B_ == other.B_ && C_ == other.C_ && E_ == other.E_ &&
         supply_ == other.supply_;
}

ThermalModel default_single_zone() {
  // Continuous RC network, SI units. Node 0 is the room; 1-4 walls, 5 floor, 6 ceiling.
  struct Envelope {
    double capacity;       // J/K
    double inner_ua;       // W/K to the room
    double outer_ua;       // W/K to ambient
    double solar_aperture; // W per W/m² absorbed
  };
  constexpr std::array<Envelope, 6> envelope{{
      {3.0e6, 90.0, 45.0, 0.5},
      {3.0e6, 90.0, 45.0, 0.5},
      {3.0e6, 90.0, 45.0, 0.5},
      {3.0e6, 90.0, 45.0, 0.5},
      {8.0e6, 180.0, 15.0, 0.0},
      {6.0e6, 110.0, 50.0, 1.2},
  }};
  constexpr double room_capacity = 2.5e6;
  constexpr double infiltration_ua = 180.0;
  constexpr double window_aperture = 2.0;
  constexpr double air_specific_heat = 1006.0;
  constexpr double sample_seconds = 900.0;
  constexpr double supply_c = 12.8;

  constexpr Index n = 7;
  constexpr Index l = 3;
  Eigen::MatrixXd Ac = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd Bc = Eigen::MatrixXd::Zero(n, 1);
  Eigen::MatrixXd Ec = Eigen::MatrixXd::Zero(n, l);
  for (Index k = 1; k < n; ++k) {
    const Envelope& e = envelope[static_cast<std::size_t>(k - 1)];
    Ac(k, k) = -(e.inner_ua + e.outer_ua) / e.capacity;
    Ac(k, 0) = e.inner_ua / e.capacity;
    Ac(0, k) = e.inner_ua / room_capacity;
    Ac(0, 0) -= e.inner_ua / room_capacity;
    Ec(k, 0) = e.outer_ua / e.capacity;
    Ec(k, 1) = e.solar_aperture / e.capacity;
  }
  Ac(0, 0) -= infiltration_ua / room_capacity;
  Ec(0, 0) = infiltration_ua / room_capacity;
  Ec(0, 1) = window_aperture / room_capacity;
  Ec(0, 2) = 1.0 / room_capacity;
  Bc(0, 0) = air_specific_heat / room_capacity;

  // Zero-order hold on the augmented system [A B E; 0 0 0].
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1 + l, n + 1 + l);
  aug.topLeftCorner(n, n) = Ac;
  aug.block(0, n, n, 1) = Bc;
  aug.block(0, n + 1, n, l) = Ec;
  const Eigen::MatrixXd discrete = (aug * sample_seconds).exp();

  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(1, n);
  C(0, 0) = 1.0;
  return ThermalModel(discrete.topLeftCorner(n, n), discrete.block(0, n, n, 1), C,
                      discrete.block(0, n + 1, n, l), Eigen::VectorXd::Constant(1, supply_c));
}

double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw DimensionError("spectral_radius needs a square matrix");
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(A, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace bems
