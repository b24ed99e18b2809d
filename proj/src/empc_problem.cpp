#include "bems/empc_problem.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include "bems/errors.hpp"

namespace bems {

namespace {

constexpr double kWattsPerKw = 1000.0;

// Quantities of one forward sweep that the derivative passes reuse.
struct Sweep {
  std::vector<Eigen::VectorXd> x;  // x⁰ … x^W
  Eigen::MatrixXd y;               // m × (W+1)
  Eigen::VectorXd hvac_w;          // W
  Eigen::MatrixXd dhvac_du;        // m × W, W per kg/s
  Eigen::MatrixXd dhvac_dy;        // m × W, W per °C
  Eigen::VectorXd total_kw;        // W
  Eigen::VectorXd soc;             // W+1
  Eigen::VectorXd soc_slope;       // W, d soc^{j+1} / d P^j
};

Sweep forward(const EmpcProblem& p, const Eigen::VectorXd& z) {
  if (z.size() != p.dimension()) {
    throw DimensionError(fmt::format("decision vector has {} entries, problem needs {}", z.size(),
                                     p.dimension()));
  }
  const int W = p.window;
  const Index m = p.zones();
  const ThermalModel& model = p.model;
  const HvacParams& h = p.hvac;
  const double chiller = h.air_specific_heat / h.cop;
  const double dp = h.return_ratio;

  Sweep s;
  s.x.reserve(static_cast<std::size_t>(W) + 1);
  s.x.push_back(p.x0);
  s.y.resize(m, W + 1);
  s.hvac_w.resize(W);
  s.dhvac_du.resize(m, W);
  s.dhvac_dy.resize(m, W);
  s.total_kw.resize(W);
  s.soc.resize(W + 1);
  s.soc_slope.resize(W);
  s.soc[0] = p.soc0;
  s.y.col(0) = model.C() * p.x0;

  Eigen::VectorXd u(m);
  for (int j = 0; j < W; ++j) {
    for (Index i = 0; i < m; ++i) u[i] = p.u(z, j, i);
    const Eigen::VectorXd y = s.y.col(j);
    const double t_out = p.forecast[static_cast<std::size_t>(j)][0];

    double power = 0.0;
    for (Index i = 0; i < m; ++i) {
      const double inlet = dp * y[i] + (1.0 - dp) * t_out - h.supply_temperature[i];
      const double ratio = u[i] / h.rated_flow[i];
      power += chiller * u[i] * inlet + h.rated_fan_power_w[i] * ratio * ratio * ratio;
      s.dhvac_du(i, j) = chiller * inlet + 3.0 * h.rated_fan_power_w[i] * ratio * ratio / h.rated_flow[i];
      s.dhvac_dy(i, j) = chiller * dp * u[i];
    }
    s.hvac_w[j] = power;

    const double pcd = p.battery_power(z, j);
    s.total_kw[j] = power / kWattsPerKw + p.load_kw[static_cast<std::size_t>(j)] + pcd -
                    p.pv_kw[static_cast<std::size_t>(j)];
    if (p.battery) {
      s.soc_slope[j] = p.battery->power_gain(pcd);
      s.soc[j + 1] = soc_step(*p.battery, s.soc[j], pcd);
    } else {
      s.soc_slope[j] = 0.0;
      s.soc[j + 1] = s.soc[j];
    }

    const Eigen::VectorXd drive = u.cwiseProduct(model.supply_temperature() - y);
    Eigen::VectorXd next = model.A() * s.x.back() + model.B() * drive +
                           model.E() * p.forecast[static_cast<std::size_t>(j)];
    if (!next.allFinite() || !std::isfinite(power) || !std::isfinite(s.total_kw[j])) {
      throw NonFiniteError("non-finite value in the predicted trajectory", j);
    }
    s.y.col(j + 1) = model.C() * next;
    s.x.push_back(std::move(next));
  }
  return s;
}

// Reverse sweep for F = Σ_j a_y^j·y^j + a_u^j·u^j through the state recursion;
// returns dF/du as an m × W matrix.
Eigen::MatrixXd adjoint(const EmpcProblem& p, const Eigen::VectorXd& z, const Sweep& s,
                        const Eigen::MatrixXd& a_y, const Eigen::MatrixXd& a_u) {
  const int W = p.window;
  const Index m = p.zones();
  const ThermalModel& model = p.model;
  Eigen::MatrixXd grad(m, W);
  Eigen::VectorXd lambda = model.C().transpose() * a_y.col(W);
  Eigen::VectorXd u(m);
  for (int j = W - 1; j >= 0; --j) {
    for (Index i = 0; i < m; ++i) u[i] = p.u(z, j, i);
    const Eigen::VectorXd mu = model.B().transpose() * lambda;
    grad.col(j) = a_u.col(j) + mu.cwiseProduct(model.supply_temperature() - s.y.col(j));
    lambda = model.A().transpose() * lambda +
             model.C().transpose() * (a_y.col(j) - mu.cwiseProduct(u));
  }
  return grad;
}

// d/dP^j of Σ_k c_{k+1}·soc^{k+1}.
Eigen::VectorXd soc_adjoint(const EmpcProblem& p, const Sweep& s, const Eigen::VectorXd& c) {
  const int W = p.window;
  const double keep = p.battery ? 1.0 - p.battery->decay_per_step : 1.0;
  Eigen::VectorXd grad(W);
  double psi = 0.0;
  for (int j = W - 1; j >= 0; --j) {
    psi = c[j + 1] + keep * psi;
    grad[j] = psi * s.soc_slope[j];
  }
  return grad;
}

void scatter_controls(const EmpcProblem& p, const Eigen::MatrixXd& grad_u, Eigen::VectorXd& out) {
  for (int j = 0; j < p.window; ++j) {
    for (Index i = 0; i < p.zones(); ++i) out[j * p.zones() + i] += grad_u(i, j);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Eigen::VectorXd EmpcProblem::lower() const {
  Eigen::VectorXd lo(dimension());
  for (int j = 0; j < window; ++j) lo.segment(j * zones(), zones()) = hvac.flow_min;
  if (battery) lo.segment(battery_offset(), window).setConstant(-battery->max_discharge_kw);
  if (soft_comfort) lo.segment(slack_offset(), control_count()).setZero();
  return lo;
}

Eigen::VectorXd EmpcProblem::upper() const {
  Eigen::VectorXd hi(dimension());
  for (int j = 0; j < window; ++j) hi.segment(j * zones(), zones()) = hvac.flow_max;
  if (battery) hi.segment(battery_offset(), window).setConstant(battery->max_charge_kw);
  if (soft_comfort) {
    hi.segment(slack_offset(), control_count()).setConstant(std::numeric_limits<double>::infinity());
  }
  return hi;
}

void EmpcProblem::validate() const {
  if (window < 1) throw DimensionError("window must be >= 1");
  const auto W = static_cast<std::size_t>(window);
  const Index m = zones();
  if (x0.size() != model.states()) throw DimensionError("x0 does not match the thermal model");
  if (forecast.size() != W || price.size() != W || load_kw.size() != W || pv_kw.size() != W) {
    throw DimensionError("window profiles must have W entries");
  }
  for (const auto& d : forecast) {
    if (d.size() != model.disturbances()) throw DimensionError("forecast sample has wrong size");
  }
  if (comfort_min.rows() != m || comfort_min.cols() != window || comfort_max.rows() != m ||
      comfort_max.cols() != window) {
    throw DimensionError("comfort bounds must be m x W");
  }
  if ((comfort_min.array() > comfort_max.array()).any()) {
    throw ValidationError("comfort", "T_min exceeds T_max inside the window");
  }
  hvac.validate();
  if (hvac.zones() != m) throw DimensionError("hvac parameters must have one entry per zone");
  if (battery) battery->validate();
}

EmpcProblem build_problem(const Scenario& scenario, std::size_t t, const ThermalState& x_t,
                          double soc_t) {
  const std::size_t length = scenario.profile_length();
  int W = scenario.controller.window;
  if (scenario.controller.window_mode == WindowMode::Shrink) {
    if (t >= length) {
      throw ValidationError("traces", fmt::format("profiles end at step {}, window starts at {}",
                                                  length, t));
    }
    W = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(W), length - t));
  } else if (length == 0) {
    throw ValidationError("traces", "empty profiles");
  }

  EmpcProblem p;
  p.model = scenario.model;
  p.hvac = scenario.hvac;
  p.battery = scenario.battery;
  p.step_hours = scenario.step_hours;
  p.start = t;
  p.window = W;
  p.x0 = x_t;
  p.soc0 = soc_t;
  p.soft_comfort = scenario.controller.soft_comfort;
  p.comfort_penalty = scenario.controller.comfort_penalty;
  p.terminal_soc = scenario.controller.terminal_soc;
  p.comfort_min.resize(scenario.model.zones(), W);
  p.comfort_max.resize(scenario.model.zones(), W);
  for (int j = 0; j < W; ++j) {
    const std::size_t k = t + static_cast<std::size_t>(j);
    p.forecast.push_back(scenario.disturbance(k));
    p.price.push_back(scenario.price_at(k));
    p.load_kw.push_back(scenario.load_kw(k));
    p.pv_kw.push_back(scenario.pv_kw(k));
    p.comfort_min.col(j) = scenario.comfort_min(k + 1);
    p.comfort_max.col(j) = scenario.comfort_max(k + 1);
  }
  p.validate();
  return p;
}

Prediction predict(const EmpcProblem& p, const Eigen::VectorXd& z) {
  Sweep s = forward(p, z);
  Prediction out;
  out.states = std::move(s.x);
  out.outputs = std::move(s.y);
  out.hvac_w.assign(s.hvac_w.data(), s.hvac_w.data() + s.hvac_w.size());
  out.total_kw.assign(s.total_kw.data(), s.total_kw.data() + s.total_kw.size());
  out.soc.assign(s.soc.data(), s.soc.data() + s.soc.size());
  return out;
}

namespace {

double objective_from(const EmpcProblem& p, const Eigen::VectorXd& z, const Sweep& s) {
  double f = 0.0;
  for (int j = 0; j < p.window; ++j) f += p.price[static_cast<std::size_t>(j)] * s.total_kw[j];
  f *= p.step_hours;
  if (p.soft_comfort) {
    f += p.comfort_penalty * p.step_hours * z.segment(p.slack_offset(), p.control_count()).sum();
  }
  return f;
}

}  // namespace

double objective(const EmpcProblem& p, const Eigen::VectorXd& z) {
  return objective_from(p, z, forward(p, z));
}

namespace {

Eigen::VectorXd gradient_from(const EmpcProblem& p, const Eigen::VectorXd& z, const Sweep& s) {
  const int W = p.window;
  const Index m = p.zones();
  Eigen::MatrixXd a_y = Eigen::MatrixXd::Zero(m, W + 1);
  Eigen::MatrixXd a_u(m, W);
  for (int j = 0; j < W; ++j) {
    const double c = p.price[static_cast<std::size_t>(j)] * p.step_hours / kWattsPerKw;
    a_u.col(j) = c * s.dhvac_du.col(j);
    a_y.col(j) = c * s.dhvac_dy.col(j);
  }
  Eigen::VectorXd gradient = Eigen::VectorXd::Zero(p.dimension());
  scatter_controls(p, adjoint(p, z, s, a_y, a_u), gradient);
  if (p.battery) {
    for (int j = 0; j < W; ++j) {
      gradient[p.battery_offset() + j] = p.price[static_cast<std::size_t>(j)] * p.step_hours;
    }
  }
  if (p.soft_comfort) {
    gradient.segment(p.slack_offset(), p.control_count()).setConstant(p.comfort_penalty * p.step_hours);
  }
  return gradient;
}

Eigen::VectorXd constraints_from(const EmpcProblem& p, const Eigen::VectorXd& z, const Sweep& s) {
  const int W = p.window;
  const Index m = p.zones();
  Eigen::VectorXd g(p.constraint_count());
  for (int j = 0; j < W; ++j) {
    for (Index i = 0; i < m; ++i) {
      const double slack = p.soft_comfort ? z[p.slack_offset() + j * m + i] : 0.0;
      const double y = s.y(i, j + 1);
      g[p.comfort_row(j, i)] = y - p.comfort_max(i, j) - slack;
      g[p.comfort_row(j, i) + 1] = p.comfort_min(i, j) - y - slack;
    }
    g[p.hvac_row(j)] = -s.hvac_w[j] / kWattsPerKw;
    g[p.hvac_row(j) + 1] = (s.hvac_w[j] - p.hvac.max_power_w) / kWattsPerKw;
    if (p.battery) {
      g[p.soc_row(j)] = p.battery->soc_min - s.soc[j + 1];
      g[p.soc_row(j) + 1] = s.soc[j + 1] - p.battery->soc_max;
    }
    g[p.export_row(j)] = -s.total_kw[j];
  }
  if (p.terminal_soc && p.battery) g[p.terminal_row()] = p.soc0 - s.soc[W];
  return g;
}

Eigen::VectorXd transpose_from(const EmpcProblem& p, const Eigen::VectorXd& z, const Sweep& s,
                               const Eigen::VectorXd& w) {
  if (w.size() != p.constraint_count()) throw DimensionError("weight vector has the wrong length");
  const int W = p.window;
  const Index m = p.zones();
  Eigen::MatrixXd a_y = Eigen::MatrixXd::Zero(m, W + 1);
  Eigen::MatrixXd a_u(m, W);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p.dimension());
  Eigen::VectorXd soc_weight = Eigen::VectorXd::Zero(W + 1);

  for (int j = 0; j < W; ++j) {
    const double c = (w[p.hvac_row(j) + 1] - w[p.hvac_row(j)] - w[p.export_row(j)]) / kWattsPerKw;
    a_u.col(j) = c * s.dhvac_du.col(j);
    a_y.col(j) += c * s.dhvac_dy.col(j);
    for (Index i = 0; i < m; ++i) {
      const double upper = w[p.comfort_row(j, i)];
      const double lower = w[p.comfort_row(j, i) + 1];
      a_y(i, j + 1) += upper - lower;
      if (p.soft_comfort) out[p.slack_offset() + j * m + i] = -upper - lower;
    }
    if (p.battery) {
      out[p.battery_offset() + j] = -w[p.export_row(j)];
      soc_weight[j + 1] = w[p.soc_row(j) + 1] - w[p.soc_row(j)];
    }
  }
  scatter_controls(p, adjoint(p, z, s, a_y, a_u), out);
  if (p.battery) {
    if (p.terminal_soc) soc_weight[W] -= w[p.terminal_row()];
    out.segment(p.battery_offset(), W) += soc_adjoint(p, s, soc_weight);
  }
  return out;
}

}  // namespace

double objective_and_gradient(const EmpcProblem& p, const Eigen::VectorXd& z,
                              Eigen::VectorXd& gradient) {
  const Sweep s = forward(p, z);
  gradient = gradient_from(p, z, s);
  return objective_from(p, z, s);
}

Eigen::VectorXd constraints(const EmpcProblem& p, const Eigen::VectorXd& z) {
  return constraints_from(p, z, forward(p, z));
}

Eigen::MatrixXd constraint_jacobian(const EmpcProblem& p, const Eigen::VectorXd& z) {
  const Sweep s = forward(p, z);
  const int W = p.window;
  const Index m = p.zones();
  const Index n = p.model.states();
  const Index nu = p.control_count();
  const ThermalModel& model = p.model;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(p.constraint_count(), p.dimension());

  // S = dx^j/du, n × (m·W); only the first m·j columns are nonzero.
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, nu);
  Eigen::MatrixXd transition(n, n);
  for (int j = 0; j < W; ++j) {
    const Index filled = static_cast<Index>(j) * m;
    const Eigen::MatrixXd dy = model.C() * S.leftCols(filled);

    Eigen::RowVectorXd dhvac = Eigen::RowVectorXd::Zero(nu);
    dhvac.head(filled) = s.dhvac_dy.col(j).transpose() * dy;
    dhvac.segment(filled, m) += s.dhvac_du.col(j).transpose();
    dhvac /= kWattsPerKw;
    J.row(p.hvac_row(j)).head(nu) = -dhvac;
    J.row(p.hvac_row(j) + 1).head(nu) = dhvac;
    J.row(p.export_row(j)).head(nu) = -dhvac;
    if (p.battery) J(p.export_row(j), p.battery_offset() + j) = -1.0;

    transition = model.A();
    for (Index i = 0; i < m; ++i) {
      transition -= p.u(z, j, i) * model.B().col(i) * model.C().row(i);
    }
    S.leftCols(filled) = (transition * S.leftCols(filled)).eval();
    for (Index i = 0; i < m; ++i) {
      S.col(filled + i) = model.B().col(i) * (model.supply_temperature()[i] - s.y(i, j));
    }
    const Eigen::MatrixXd dy_next = model.C() * S.leftCols(filled + m);
    for (Index i = 0; i < m; ++i) {
      J.row(p.comfort_row(j, i)).head(filled + m) = dy_next.row(i);
      J.row(p.comfort_row(j, i) + 1).head(filled + m) = -dy_next.row(i);
      if (p.soft_comfort) {
        J(p.comfort_row(j, i), p.slack_offset() + j * m + i) = -1.0;
        J(p.comfort_row(j, i) + 1, p.slack_offset() + j * m + i) = -1.0;
      }
    }
  }

  if (p.battery) {
    const double keep = 1.0 - p.battery->decay_per_step;
    for (int k = 0; k < W; ++k) {
      double factor = 1.0;
      for (int j = k; j >= 0; --j) {
        const double d = factor * s.soc_slope[j];
        J(p.soc_row(k), p.battery_offset() + j) = -d;
        J(p.soc_row(k) + 1, p.battery_offset() + j) = d;
        if (p.terminal_soc && k == W - 1) J(p.terminal_row(), p.battery_offset() + j) = -d;
        factor *= keep;
      }
    }
  }
  return J;
}

Eigen::VectorXd constraint_jacobian_transpose(const EmpcProblem& p, const Eigen::VectorXd& z,
                                              const Eigen::VectorXd& w) {
  return transpose_from(p, z, forward(p, z), w);
}

nlp::BoolMatrix constraint_sparsity(const EmpcProblem& p) {
  const int W = p.window;
  const Index m = p.zones();
  nlp::BoolMatrix pattern = nlp::BoolMatrix::Constant(p.constraint_count(), p.dimension(), false);
  for (int j = 0; j < W; ++j) {
    const Index through = static_cast<Index>(j + 1) * m;  // controls u⁰ … u^j
    for (Index i = 0; i < m; ++i) {
      for (int r = 0; r < 2; ++r) {
        pattern.row(p.comfort_row(j, i) + r).head(through).setConstant(true);
        if (p.soft_comfort) pattern(p.comfort_row(j, i) + r, p.slack_offset() + j * m + i) = true;
      }
    }
    pattern.row(p.hvac_row(j)).head(through).setConstant(true);
    pattern.row(p.hvac_row(j) + 1).head(through).setConstant(true);
    pattern.row(p.export_row(j)).head(through).setConstant(true);
    if (p.battery) {
      pattern(p.export_row(j), p.battery_offset() + j) = true;
      pattern.row(p.soc_row(j)).segment(p.battery_offset(), j + 1).setConstant(true);
      pattern.row(p.soc_row(j) + 1).segment(p.battery_offset(), j + 1).setConstant(true);
    }
  }
  if (p.terminal_soc && p.battery) pattern.row(p.terminal_row()).segment(p.battery_offset(), W).setConstant(true);
  return pattern;
}

double objective_scale(const EmpcProblem& p) {
  double peak = 0.0;
  for (double c : p.price) peak = std::max(peak, std::abs(c));
  if (p.soft_comfort) peak = std::max(peak, p.comfort_penalty);
  return peak > 0.0 ? 1.0 / (peak * p.step_hours) : 1.0;
}

namespace {

// The solver evaluates f, ∇f, g and Jᵀw at the same point in turn; one forward
// sweep per point and thread serves all four.
class CachedEvaluator {
 public:
  explicit CachedEvaluator(const EmpcProblem& problem)
      : problem_(std::make_shared<const EmpcProblem>(problem)), id_(next_id_.fetch_add(1)) {}

  const EmpcProblem& problem() const { return *problem_; }

  const Sweep& sweep(const Eigen::VectorXd& z) const {
    thread_local Entry cache;
    if (cache.id != id_ || cache.z.size() != z.size() || cache.z != z) {
      cache.sweep = forward(*problem_, z);
      cache.z = z;
      cache.id = id_;
    }
    return cache.sweep;
  }

 private:
  struct Entry {
    std::uint64_t id = 0;
    Eigen::VectorXd z;
    Sweep sweep;
  };

  std::shared_ptr<const EmpcProblem> problem_;
  std::uint64_t id_;
  static inline std::atomic<std::uint64_t> next_id_{1};
};

}  // namespace

nlp::NlpSpec nlp_spec(const EmpcProblem& problem) {
  auto e = std::make_shared<const CachedEvaluator>(problem);
  const double scale = objective_scale(problem);
  nlp::NlpSpec spec;
  spec.dimension = problem.dimension();
  spec.constraint_count = problem.constraint_count();
  spec.lower = problem.lower();
  spec.upper = problem.upper();
  spec.objective = [e, scale](const Eigen::VectorXd& z) {
    return scale * objective_from(e->problem(), z, e->sweep(z));
  };
  spec.gradient = [e, scale](const Eigen::VectorXd& z) {
    return Eigen::VectorXd(scale * gradient_from(e->problem(), z, e->sweep(z)));
  };
  spec.constraints = [e](const Eigen::VectorXd& z) {
    return constraints_from(e->problem(), z, e->sweep(z));
  };
  spec.jacobian = [e](const Eigen::VectorXd& z) { return constraint_jacobian(e->problem(), z); };
  spec.jacobian_transpose_product = [e](const Eigen::VectorXd& z, const Eigen::VectorXd& w) {
    return transpose_from(e->problem(), z, e->sweep(z), w);
  };
  spec.sparsity = constraint_sparsity(problem);
  return spec;
}

nlp::SolverOptions solver_options(const ControllerOptions& options, std::uint64_t seed) {
  nlp::SolverOptions out;
  out.tol_feasibility = options.tolerance;
  out.tol_stationarity = options.tolerance;
  out.tol_complementarity = options.tolerance;
  out.max_iterations = options.max_iterations;
  out.multistart = options.multistart;
  out.seed = seed;
  return out;
}

EmpcSolution solve(const EmpcProblem& p, const Eigen::VectorXd& z0,
                   const nlp::SolverOptions& options) {
  const nlp::NlpSpec spec = nlp_spec(p);
  nlp::SolveResult result = nlp::minimize(spec, z0, options);
  EmpcSolution out;
  out.z = std::move(result.z);
  out.report = std::move(result.report);
  if (out.report.status != nlp::SolveStatus::NumericalError) {
    out.objective = objective(p, out.z);
    out.prediction = predict(p, out.z);
  } else {
    out.objective = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

Eigen::VectorXd warm_start(const EmpcSolution& previous, const EmpcProblem& previous_problem,
                           const EmpcProblem& next) {
  const int W_prev = previous_problem.window;
  const Index m = next.zones();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(next.dimension());
  for (int j = 0; j < next.window; ++j) {
    const int src = std::min(j + 1, W_prev - 1);
    for (Index i = 0; i < m; ++i) {
      z[j * m + i] = previous_problem.u(previous.z, src, i);
      if (next.soft_comfort && previous_problem.soft_comfort) {
        z[next.slack_offset() + j * m + i] =
            previous.z[previous_problem.slack_offset() + src * m + i];
      }
    }
    if (next.has_battery() && previous_problem.has_battery()) {
      z[next.battery_offset() + j] = previous_problem.battery_power(previous.z, src);
    }
  }
  return z.cwiseMax(next.lower()).cwiseMin(next.upper());
}

Eigen::VectorXd cold_start(const EmpcProblem& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::VectorXd lo = p.lower();
  const Eigen::VectorXd hi = p.upper();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(p.dimension());
  for (Index i = 0; i < p.slack_offset(); ++i) z[i] = lo[i] + unit(rng) * (hi[i] - lo[i]);
  return z;
}

}  // namespace bems
