#include "bems/nlp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <future>
#include <limits>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace bems::nlp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInfeasiblePenalty = 1e6;

Eigen::VectorXd project(const Eigen::VectorXd& z, const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper) {
  return z.cwiseMax(lower).cwiseMin(upper);
}

double projected_gradient_norm(const Eigen::VectorXd& z, const Eigen::VectorXd& grad,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  if (z.size() == 0) return 0.0;
  return (z - project(z - grad, lower, upper)).lpNorm<Eigen::Infinity>();
}

double positive_max(const Eigen::VectorXd& g) {
  return g.size() == 0 ? 0.0 : std::max(0.0, g.maxCoeff());
}

// PHR augmented Lagrangian for inequality constraints:
//   φ(z) = f(z) + (ρ/2) Σ max(0, g_i + λ_i/ρ)² − Σ λ_i²/(2ρ)
class AugmentedLagrangian {
 public:
  AugmentedLagrangian(const NlpSpec& spec, const Eigen::VectorXd& multipliers, double penalty,
                      int& evaluations)
      : spec_(spec), lambda_(multipliers), penalty_(penalty), evaluations_(evaluations) {}

  double value(const Eigen::VectorXd& z) const {
    ++evaluations_;
    double phi = spec_.objective(z);
    if (spec_.constraint_count > 0) {
      const Eigen::VectorXd g = spec_.constraints(z);
      const Eigen::VectorXd shifted = (g + lambda_ / penalty_).cwiseMax(0.0);
      phi += 0.5 * penalty_ * shifted.squaredNorm() - lambda_.squaredNorm() / (2.0 * penalty_);
    }
    return phi;
  }

  double value_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const {
    ++evaluations_;
    double phi = spec_.objective(z);
    grad = spec_.gradient(z);
    if (spec_.constraint_count > 0) {
      const Eigen::VectorXd g = spec_.constraints(z);
      const Eigen::VectorXd shifted = (g + lambda_ / penalty_).cwiseMax(0.0);
      phi += 0.5 * penalty_ * shifted.squaredNorm() - lambda_.squaredNorm() / (2.0 * penalty_);
      grad += spec_.transpose_product(z, penalty_ * shifted);
    }
    return phi;
  }

 private:
  const NlpSpec& spec_;
  const Eigen::VectorXd& lambda_;
  double penalty_;
  int& evaluations_;
};

struct InnerOutcome {
  int iterations = 0;
  double projected_gradient = kInf;
  bool numerical_error = false;
};

struct CurvaturePair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
};

// Projected L-BFGS with an ε-active set: quasi-Newton steps on the free variables,
// scaled gradient steps on variables pinned at a bound, and a backtracking Armijo
// search along the projection arc.
InnerOutcome projected_lbfgs(const AugmentedLagrangian& al, Eigen::VectorXd& z,
                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             double tolerance, int budget, const SolverOptions& options) {
  InnerOutcome out;
  const Index n = z.size();
  Eigen::VectorXd grad;
  double phi = al.value_and_gradient(z, grad);
  if (!std::isfinite(phi) || !grad.allFinite()) {
    out.numerical_error = true;
    return out;
  }

  std::deque<CurvaturePair> memory;
  const auto memory_size = static_cast<std::size_t>(std::max(1, options.lbfgs_memory));
  Eigen::Array<bool, Eigen::Dynamic, 1> free(n);
  Eigen::VectorXd alphas(static_cast<Index>(memory_size));
  Eigen::VectorXd rhos(static_cast<Index>(memory_size));

  while (true) {
    out.projected_gradient = projected_gradient_norm(z, grad, lower, upper);
    if (out.projected_gradient <= tolerance || out.iterations >= budget) return out;

    const double eps = std::min(1e-3, out.projected_gradient);
    for (Index i = 0; i < n; ++i) {
      const bool at_lower = z[i] <= lower[i] + eps && grad[i] > 0.0;
      const bool at_upper = z[i] >= upper[i] - eps && grad[i] < 0.0;
      free[i] = !(at_lower || at_upper);
    }
    const Eigen::VectorXd mask = free.cast<double>().matrix();

    // Two-loop recursion restricted to the free subspace.
    Eigen::VectorXd q = grad.cwiseProduct(mask);
    double gamma = 0.0;
    const Index pairs = static_cast<Index>(memory.size());
    for (Index i = pairs - 1; i >= 0; --i) {
      const CurvaturePair& p = memory[static_cast<std::size_t>(i)];
      const double sy = p.s.cwiseProduct(mask).dot(p.y);
      const double yy = p.y.cwiseProduct(mask).squaredNorm();
      if (sy <= 1e-12 * std::sqrt(p.s.cwiseProduct(mask).squaredNorm() * yy)) {
        rhos[i] = 0.0;
        continue;
      }
      if (gamma == 0.0) gamma = sy / yy;
      rhos[i] = 1.0 / sy;
      alphas[i] = rhos[i] * p.s.cwiseProduct(mask).dot(q);
      q -= alphas[i] * p.y.cwiseProduct(mask);
    }
    const bool have_curvature = gamma > 0.0;
    if (!have_curvature) gamma = 1.0 / std::max(1.0, grad.lpNorm<Eigen::Infinity>());
    Eigen::VectorXd r = gamma * q;
    for (Index i = 0; i < pairs; ++i) {
      if (rhos[i] == 0.0) continue;
      const CurvaturePair& p = memory[static_cast<std::size_t>(i)];
      const double beta = rhos[i] * p.y.cwiseProduct(mask).dot(r);
      r += (alphas[i] - beta) * p.s.cwiseProduct(mask);
    }
    Eigen::VectorXd direction(n);
    for (Index i = 0; i < n; ++i) direction[i] = free[i] ? -r[i] : -gamma * grad[i];
    if (!(grad.dot(direction) < 0.0)) {
      memory.clear();
      direction = -gamma * grad;
    }

    // Backtracking along the projection arc with safeguarded quadratic interpolation.
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    double trial_phi = phi;
    for (int backtrack = 0; backtrack < 60; ++backtrack) {
      trial = project(z + step * direction, lower, upper);
      const Eigen::VectorXd delta = trial - z;
      if (delta.lpNorm<Eigen::Infinity>() == 0.0) break;
      const double slope = grad.dot(delta);
      trial_phi = al.value(trial);
      if (std::isfinite(trial_phi) &&
          trial_phi <= phi + 1e-4 * slope + 4.0 * std::numeric_limits<double>::epsilon() * std::abs(phi)) {
        accepted = true;
        break;
      }
      double next = 0.5 * step;
      if (std::isfinite(trial_phi)) {
        const double curvature = trial_phi - phi - slope;
        if (curvature > 0.0) next = std::clamp(-0.5 * slope * step / curvature, 0.1 * step, 0.5 * step);
      } else {
        next = 0.1 * step;
      }
      step = next;
    }

    if (!accepted) {
      if (!memory.empty()) {
        memory.clear();
        continue;
      }
      return out;  // stalled: no decrease along the scaled gradient either
    }

    Eigen::VectorXd trial_grad;
    trial_phi = al.value_and_gradient(trial, trial_grad);
    if (!std::isfinite(trial_phi) || !trial_grad.allFinite()) {
      out.numerical_error = true;
      return out;
    }
    CurvaturePair pair{trial - z, trial_grad - grad};
    if (pair.s.dot(pair.y) > 1e-12 * pair.s.norm() * pair.y.norm()) {
      memory.push_back(std::move(pair));
      if (memory.size() > memory_size) memory.pop_front();
    }
    z = std::move(trial);
    grad = std::move(trial_grad);
    phi = trial_phi;
    ++out.iterations;
    if (options.on_iterate) options.on_iterate(z);
  }
}

bool better(const SolveResult& candidate, const SolveResult& incumbent, double tol_feasibility) {
  const bool c_conv = candidate.report.converged();
  const bool i_conv = incumbent.report.converged();
  if (c_conv != i_conv) return c_conv;
  const bool c_feas = candidate.report.residuals.feasibility <= tol_feasibility;
  const bool i_feas = incumbent.report.residuals.feasibility <= tol_feasibility;
  if (c_feas != i_feas) return c_feas;
  if (!c_feas) return candidate.report.residuals.feasibility < incumbent.report.residuals.feasibility;
  return candidate.objective < incumbent.objective;
}

SolveResult solve_from(const NlpSpec& spec, const Eigen::VectorXd& start,
                       const SolverOptions& options) {
  const Index p = spec.constraint_count;
  SolveResult result;
  SolveReport& report = result.report;
  int evaluations = 0;

  Eigen::VectorXd z = project(start, spec.lower, spec.upper);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(p);

  const double f0 = spec.objective(z);
  const Eigen::VectorXd g0 = p > 0 ? spec.constraints(z) : Eigen::VectorXd();
  ++evaluations;
  if (!std::isfinite(f0) || !g0.allFinite()) {
    result.z = z;
    result.multipliers = lambda;
    result.objective = f0;
    report.status = SolveStatus::NumericalError;
    report.message = "non-finite objective or constraint at the starting point";
    report.evaluations = evaluations;
    return result;
  }

  double penalty = options.initial_penalty;
  if (!(penalty > 0.0)) {
    const double violation = 0.5 * g0.cwiseMax(0.0).squaredNorm();
    penalty = std::clamp(10.0 * std::max(1.0, std::abs(f0)) / std::max(1.0, violation), 1e-6, 1e2);
  }

  const double tol_stat = options.tol_stationarity;
  double inner_tol = std::max(1e-3, tol_stat);
  double previous_measure = kInf;
  double best_feasibility = kInf;
  int stagnant_feasibility = 0;

  bool have_best = false;
  SolveResult best;

  for (int outer = 0; outer < options.max_outer_iterations; ++outer) {
    const int budget = options.max_iterations - report.iterations;
    if (budget <= 0) break;
    AugmentedLagrangian al(spec, lambda, penalty, evaluations);
    const InnerOutcome inner =
        projected_lbfgs(al, z, spec.lower, spec.upper, inner_tol, budget, options);
    report.iterations += inner.iterations;
    report.outer_iterations = outer + 1;
    if (inner.numerical_error) {
      report.status = SolveStatus::NumericalError;
      report.message = "non-finite augmented Lagrangian value or gradient";
      break;
    }

    const Eigen::VectorXd g = p > 0 ? spec.constraints(z) : Eigen::VectorXd();
    const Eigen::VectorXd updated = (lambda + penalty * g).cwiseMax(0.0);
    double measure = 0.0;
    for (Index i = 0; i < p; ++i) measure = std::max(measure, std::abs(std::max(g[i], -lambda[i] / penalty)));

    KktResiduals res;
    res.feasibility = positive_max(g);
    for (Index i = 0; i < p; ++i) res.complementarity = std::max(res.complementarity, updated[i] * std::abs(g[i]));
    res.stationarity = inner.projected_gradient;
    report.history.push_back({penalty, res.feasibility, inner.iterations});

    SolveResult current;
    current.z = z;
    current.multipliers = updated;
    current.objective = spec.objective(z);
    current.report.residuals = res;
    current.report.status = SolveStatus::MaxIterations;
    if (!have_best || better(current, best, options.tol_feasibility)) {
      best = current;
      have_best = true;
    }

    lambda = updated;
    if (res.feasibility <= options.tol_feasibility &&
        res.complementarity <= options.tol_complementarity && res.stationarity <= tol_stat) {
      report.status = SolveStatus::Converged;
      break;
    }

    // A violation that no longer shrinks while the penalty keeps growing is not a
    // conditioning issue.
    if (res.feasibility > 0.99 * best_feasibility) {
      ++stagnant_feasibility;
    } else {
      stagnant_feasibility = 0;
    }
    best_feasibility = std::min(best_feasibility, res.feasibility);
    if (res.feasibility > options.tol_feasibility && stagnant_feasibility >= 4 &&
        penalty >= std::min(kInfeasiblePenalty, options.max_penalty)) {
      report.status = SolveStatus::Infeasible;
      break;
    }

    if (measure > 0.5 * previous_measure) {
      penalty = std::min(penalty * options.penalty_growth, options.max_penalty);
    }
    previous_measure = std::min(previous_measure, measure);
    // Tighten the subproblem only as fast as the constraint measure falls.
    inner_tol = std::max(std::max(0.1 * inner_tol, std::min(inner_tol, 0.1 * measure)), 0.5 * tol_stat);
  }

  if (report.status == SolveStatus::Converged || !have_best) {
    result.z = z;
    result.multipliers = lambda;
  } else {
    result.z = best.z;
    result.multipliers = best.multipliers;
  }
  result.objective = spec.objective(result.z);
  if (report.status != SolveStatus::NumericalError) {
    report.residuals = kkt_residuals(spec, result.z, result.multipliers);
  }
  if (p > 0) {
    const Eigen::VectorXd g = spec.constraints(result.z);
    Index worst = 0;
    g.maxCoeff(&worst);
    report.max_violation_index = g[worst] > 0.0 ? worst : -1;
    if (report.status == SolveStatus::Infeasible) {
      report.message = "infeasible: constraint " + std::to_string(worst) + " violated by " +
                       std::to_string(g[worst]);
    }
  }
  if (report.status == SolveStatus::MaxIterations && report.message.empty()) {
    report.message = "iteration limit reached; returning best iterate";
  }
  report.total_iterations = report.iterations;
  report.evaluations = evaluations;
  return result;
}

}  // namespace

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIterations: return "max-iter";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::NumericalError: return "numerical-error";
  }
  return "unknown";
}

void NlpSpec::validate() const {
  if (dimension < 0 || constraint_count < 0) throw std::invalid_argument("NlpSpec: negative size");
  if (lower.size() != dimension || upper.size() != dimension) {
    throw std::invalid_argument("NlpSpec: bounds must have `dimension` entries");
  }
  for (Index i = 0; i < dimension; ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i]) {
      throw std::invalid_argument("NlpSpec: bad bounds at coordinate " + std::to_string(i));
    }
  }
  if (!objective || !gradient) throw std::invalid_argument("NlpSpec: objective callbacks missing");
  if (constraint_count > 0 && (!constraints || !jacobian)) {
    throw std::invalid_argument("NlpSpec: constraint callbacks missing");
  }
  if (sparsity && (sparsity->rows() != constraint_count || sparsity->cols() != dimension)) {
    throw std::invalid_argument("NlpSpec: sparsity pattern has the wrong shape");
  }
}

Eigen::VectorXd NlpSpec::transpose_product(const Eigen::VectorXd& z, const Eigen::VectorXd& w) const {
  if (jacobian_transpose_product) return jacobian_transpose_product(z, w);
  return jacobian(z).transpose() * w;
}

KktResiduals kkt_residuals(const NlpSpec& spec, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& multipliers) {
  KktResiduals res;
  Eigen::VectorXd grad = spec.gradient(z);
  if (spec.constraint_count > 0) {
    const Eigen::VectorXd g = spec.constraints(z);
    res.feasibility = positive_max(g);
    grad += spec.transpose_product(z, multipliers);
    for (Index i = 0; i < g.size(); ++i) {
      res.complementarity = std::max(res.complementarity, multipliers[i] * std::abs(g[i]));
    }
  }
  res.stationarity = projected_gradient_norm(z, grad, spec.lower, spec.upper);
  return res;
}

Eigen::VectorXd random_box_point(const NlpSpec& spec, const Eigen::VectorXd& center,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::VectorXd z(spec.dimension);
  for (Index i = 0; i < spec.dimension; ++i) {
    double lo = spec.lower[i];
    double hi = spec.upper[i];
    if (!std::isfinite(lo)) lo = std::isfinite(hi) ? std::min(hi, center[i]) - 1.0 : center[i] - 1.0;
    if (!std::isfinite(hi)) hi = std::max(lo, center[i]) + 1.0;
    z[i] = std::uniform_real_distribution<double>(lo, hi)(rng);
    z[i] = std::clamp(z[i], spec.lower[i], spec.upper[i]);
  }
  return z;
}

SolveResult minimize(const NlpSpec& spec, const Eigen::VectorXd& z0, const SolverOptions& options) {
  spec.validate();
  if (z0.size() != spec.dimension) throw std::invalid_argument("minimize: z0 has the wrong size");
  const Eigen::VectorXd start = project(z0, spec.lower, spec.upper);
  const int starts = std::max(1, options.multistart);

  auto run = [&](int s) {
    const Eigen::VectorXd from =
        s == 0 ? start
               : random_box_point(spec, start, options.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(s));
    SolveResult r = solve_from(spec, from, options);
    r.report.selected_start = s;
    return r;
  };

  // Starts are independent; an iterate observer keeps them on the calling thread.
  std::vector<SolveResult> results(static_cast<std::size_t>(starts));
  if (options.on_iterate || starts == 1) {
    for (int s = 0; s < starts; ++s) results[static_cast<std::size_t>(s)] = run(s);
  } else {
    std::vector<std::future<SolveResult>> pending;
    for (int s = 1; s < starts; ++s) pending.push_back(std::async(std::launch::async, run, s));
    results[0] = run(0);
    for (int s = 1; s < starts; ++s) results[static_cast<std::size_t>(s)] = pending[static_cast<std::size_t>(s - 1)].get();
  }

  SolveResult best;
  int total_iterations = 0;
  int evaluations = 0;
  for (int s = 0; s < starts; ++s) {
    SolveResult& r = results[static_cast<std::size_t>(s)];
    total_iterations += r.report.iterations;
    evaluations += r.report.evaluations;
    if (s == 0 || better(r, best, options.tol_feasibility)) best = std::move(r);
  }
  best.report.starts = starts;
  best.report.total_iterations = total_iterations;
  best.report.evaluations = evaluations;
  return best;
}

double GradientCheckReport::max_relative_error() const {
  return std::max(objective.relative_error, jacobian.relative_error);
}

const DerivativeError& GradientCheckReport::worst() const {
  return jacobian.relative_error > objective.relative_error ? jacobian : objective;
}

GradientCheckReport check_gradients(const NlpSpec& spec, const Eigen::VectorXd& z, double h,
                                    double floor) {
  spec.validate();
  GradientCheckReport report;
  const Eigen::VectorXd grad = spec.gradient(z);
  const Eigen::MatrixXd jac =
      spec.constraint_count > 0 ? spec.jacobian(z) : Eigen::MatrixXd(0, spec.dimension);

  auto relative = [floor](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
  };

  for (Index i = 0; i < spec.dimension; ++i) {
    const double step = h * std::max(1.0, std::abs(z[i]));
    Eigen::VectorXd plus = z;
    Eigen::VectorXd minus = z;
    plus[i] += step;
    minus[i] -= step;
    const double width = plus[i] - minus[i];

    const double numeric = (spec.objective(plus) - spec.objective(minus)) / width;
    const double err = relative(grad[i], numeric);
    if (err > report.objective.relative_error || report.objective.column < 0) {
      report.objective = {err, -1, i, grad[i], numeric};
    }

    if (spec.constraint_count > 0) {
      const Eigen::VectorXd column = (spec.constraints(plus) - spec.constraints(minus)) / width;
      for (Index r = 0; r < spec.constraint_count; ++r) {
        const double e = relative(jac(r, i), column[r]);
        if (e > report.jacobian.relative_error || report.jacobian.column < 0) {
          report.jacobian = {e, r, i, jac(r, i), column[r]};
        }
      }
    }
  }
  return report;
}

}  // namespace bems::nlp
