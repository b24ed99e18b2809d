#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace bems::nlp {

using Index = Eigen::Index;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/**
 * Smooth nonlinear program
 *
 *   minimize f(z)  subject to  g(z) <= 0,  lower <= z <= upper.
 *
 * Bounds may be ±infinity. Callbacks must be pure: the solver calls them at
 * arbitrary points and possibly from several threads.
 */
struct NlpSpec {
  Index dimension = 0;
  Index constraint_count = 0;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  std::function<double(const Eigen::VectorXd&)> objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> constraints;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;

  /// Optional Jᵀw at z. Falls back to jacobian(z).transpose() * w.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      jacobian_transpose_product;

  /// Optional structural nonzeros of the constraint jacobian.
  std::optional<BoolMatrix> sparsity;

  /// Throws std::invalid_argument when sizes or callbacks are inconsistent.
  void validate() const;

  Eigen::VectorXd transpose_product(const Eigen::VectorXd& z, const Eigen::VectorXd& w) const;
};

enum class SolveStatus { Converged, MaxIterations, Infeasible, NumericalError };

std::string to_string(SolveStatus status);

struct KktResiduals {
  double feasibility = 0.0;      // max(0, max_i g_i)
  double stationarity = 0.0;     // ‖z − P(z − ∇ₓL)‖∞
  double complementarity = 0.0;  // max_i λ_i |g_i|
};

/// KKT residuals at (z, multipliers), evaluated from scratch through the callbacks.
KktResiduals kkt_residuals(const NlpSpec& spec, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& multipliers);

struct OuterIterate {
  double penalty = 0.0;
  double infeasibility = 0.0;  // max(0, max_i g_i) at the end of the subproblem
  int inner_iterations = 0;
};

struct SolveReport {
  SolveStatus status = SolveStatus::MaxIterations;
  int iterations = 0;        // inner quasi-Newton iterations of the selected start
  int outer_iterations = 0;
  int total_iterations = 0;  // summed over all starts
  int evaluations = 0;       // objective/constraint evaluations over all starts
  int starts = 0;
  int selected_start = 0;
  KktResiduals residuals;
  Index max_violation_index = -1;  // constraint with the largest violation
  std::vector<OuterIterate> history;
  std::string message;

  bool converged() const { return status == SolveStatus::Converged; }
};

struct SolverOptions {
  double tol_feasibility = 1e-6;
  double tol_stationarity = 1e-6;
  double tol_complementarity = 1e-6;
  int max_iterations = 100000;  // inner iterations per start
  int max_outer_iterations = 60;
  int lbfgs_memory = 30;
  /// Initial penalty; a non-positive value selects one from f(z0) and ‖g(z0)₊‖.
  double initial_penalty = 0.0;
  double penalty_growth = 4.0;
  double max_penalty = 1e10;
  /// Number of starts: z0 followed by box-uniform random points drawn from `seed`.
  int multistart = 1;
  std::uint64_t seed = 0;
  /// Observer called with every accepted iterate (testing and tracing).
  std::function<void(const Eigen::VectorXd&)> on_iterate;
};

struct SolveResult {
  Eigen::VectorXd z;
  Eigen::VectorXd multipliers;
  double objective = 0.0;
  SolveReport report;
};

/// Projects z0 into the box and runs the augmented-Lagrangian method from it and from
/// `options.multistart - 1` random starts; returns the best KKT point. Without an
/// `on_iterate` observer the starts run on separate threads, so the spec callbacks
/// must be safe to call concurrently.
SolveResult minimize(const NlpSpec& spec, const Eigen::VectorXd& z0, const SolverOptions& options);

/// Random point uniform in the box; unbounded coordinates are drawn within ±1 of `center`.
Eigen::VectorXd random_box_point(const NlpSpec& spec, const Eigen::VectorXd& center,
                                 std::uint64_t seed);

struct DerivativeError {
  double relative_error = 0.0;
  Index row = -1;     // -1 for the objective gradient
  Index column = -1;  // decision-vector coordinate
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradientCheckReport {
  DerivativeError objective;
  DerivativeError jacobian;

  double max_relative_error() const;
  /// The worse of the two entries.
  const DerivativeError& worst() const;
};

/**
 * Compares the analytic gradient and jacobian with central differences using the
 * relative step h·max(1, |z_i|). The error of an entry is |a − n| / max(|a|, |n|, floor).
 */
GradientCheckReport check_gradients(const NlpSpec& spec, const Eigen::VectorXd& z,
                                    double h = 1e-5, double floor = 1e-3);

}  // namespace bems::nlp
