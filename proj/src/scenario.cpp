#include "bems/scenario.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "bems/errors.hpp"

namespace bems {

namespace {

constexpr const char* kCsvHeader = "time,ambient,solar,internal,alpha,load_kw,price";

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ValidationError(field, message);
}

bool finite_all(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool same_vector(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

bool same_hvac(const HvacParams& a, const HvacParams& b) {
  return same_vector(a.rated_fan_power_w, b.rated_fan_power_w) &&
         same_vector(a.rated_flow, b.rated_flow) &&
         same_vector(a.supply_temperature, b.supply_temperature) &&
         same_vector(a.flow_min, b.flow_min) && same_vector(a.flow_max, b.flow_max) &&
         a.cop == b.cop && a.air_specific_heat == b.air_specific_heat &&
         a.return_ratio == b.return_ratio && a.max_power_w == b.max_power_w;
}

double hour_of_day(std::size_t k, double step_hours) {
  return std::fmod(static_cast<double>(k) * step_hours, 24.0);
}

std::string num(double v) {
  if (std::isnan(v)) return ".nan";
  if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
  return fmt::format("{}", v);
}

}  // namespace

// ---------------------------------------------------------------------------
// Invariants

void ControllerOptions::validate() const {
  require(window >= 1, "controller.window", "must be >= 1");
  require(std::isfinite(comfort_penalty) && comfort_penalty >= 0.0, "controller.comfort_penalty",
          "must be >= 0");
  require(std::isfinite(tolerance) && tolerance > 0.0, "controller.tolerance", "must be > 0");
  require(max_iterations >= 1, "controller.max_iterations", "must be >= 1");
  require(multistart >= 1, "controller.multistart", "must be >= 1");
}

std::string to_string(WindowMode mode) { return mode == WindowMode::Wrap ? "wrap" : "shrink"; }

std::string to_string(FailurePolicy policy) {
  return policy == FailurePolicy::Abort ? "abort" : "reuse";
}

void ForecastErrorSpec::validate(Index disturbance_channels) const {
  if (channels.empty()) return;
  require(static_cast<Index>(channels.size()) == disturbance_channels, "forecast_error.variance",
          "must have one entry per disturbance channel");
  for (const NoiseChannel& c : channels) {
    require(std::isfinite(c.mean), "forecast_error.mean", "must be finite");
    require(std::isfinite(c.variance) && c.variance >= 0.0, "forecast_error.variance",
            "must be finite and >= 0");
  }
}

bool Scenario::occupied(Index zone, std::size_t k) const {
  const double h = hour_of_day(k, step_hours);
  const auto& windows = comfort.occupancy[static_cast<std::size_t>(zone)];
  return std::any_of(windows.begin(), windows.end(), [h](const OccupancyWindow& w) {
    return h >= w.start_hour && h < w.end_hour;
  });
}

Eigen::VectorXd Scenario::comfort_min(std::size_t k) const {
  Eigen::VectorXd out(model.zones());
  for (Index i = 0; i < out.size(); ++i) {
    out[i] = occupied(i, k) ? comfort.occupied_min : comfort.unoccupied_min;
  }
  return out;
}

Eigen::VectorXd Scenario::comfort_max(std::size_t k) const {
  Eigen::VectorXd out(model.zones());
  for (Index i = 0; i < out.size(); ++i) {
    out[i] = occupied(i, k) ? comfort.occupied_max : comfort.unoccupied_max;
  }
  return out;
}

void Scenario::validate() const {
  require(std::isfinite(step_hours) && step_hours > 0.0, "step_hours", "must be > 0");
  require(span >= 0, "span", "must be >= 0");

  const Index n = model.states();
  const Index m = model.zones();
  const Index l = model.disturbances();
  require(initial_state.size() == n, "model.x0", fmt::format("must have n = {} entries", n));
  require(initial_state.allFinite(), "model.x0", "must be finite");

  hvac.validate();
  require(hvac.zones() == m, "hvac.rated_flow_kg_s", fmt::format("must have m = {} entries", m));
  require(same_vector(hvac.supply_temperature, model.supply_temperature()),
          "hvac.supply_temperature_c", "must match the thermal model");

  if (battery) {
    battery->validate();
    require(battery->step_hours == step_hours, "battery.step_hours", "must equal step_hours");
    require(std::isfinite(initial_soc) && initial_soc >= battery->soc_min &&
                initial_soc <= battery->soc_max,
            "battery.initial_soc", "must lie in [soc_min, soc_max]");
  }
  if (pv) pv->validate();
  load.validate();

  const auto needed = static_cast<std::size_t>(span);
  const std::size_t length = disturbances.size();
  require(length >= needed && (length > 0 || span == 0), "traces.disturbances",
          fmt::format("has {} steps, span needs {}", length, span));
  for (const DisturbanceSample& d : disturbances) {
    require(d.size() == l, "traces.disturbances",
            fmt::format("every sample must have l = {} channels", l));
    require(d.allFinite(), "traces.disturbances", "must be finite");
  }
  auto check_length = [&](std::size_t got, const std::string& field) {
    require(got >= needed, field, fmt::format("has {} steps, span needs {}", got, span));
    require(got == length, field,
            fmt::format("has {} steps but the disturbance trace has {}", got, length));
  };
  check_length(price.size(), "tariff");
  require(finite_all(price), "tariff", "must be finite");
  check_length(load.kw.size(), "traces.load_kw");
  if (pv) check_length(pv->alpha.size(), "traces.alpha");

  require(std::isfinite(comfort.occupied_min) && std::isfinite(comfort.occupied_max) &&
              comfort.occupied_min <= comfort.occupied_max,
          "comfort.occupied_c", "needs finite min <= max");
  require(std::isfinite(comfort.unoccupied_min) && std::isfinite(comfort.unoccupied_max) &&
              comfort.unoccupied_min <= comfort.unoccupied_max,
          "comfort.unoccupied_c", "needs finite min <= max");
  require(static_cast<Index>(comfort.occupancy.size()) == m, "comfort.occupancy",
          fmt::format("must list windows for each of the {} zones", m));
  for (const auto& zone : comfort.occupancy) {
    for (const OccupancyWindow& w : zone) {
      require(w.start_hour >= 0.0 && w.start_hour < w.end_hour && w.end_hour <= 24.0,
              "comfort.occupancy", "windows need 0 <= start < end <= 24");
    }
  }

  forecast_error.validate(l);
  controller.validate();
}

bool Scenario::operator==(const Scenario& o) const {
  return name == o.name && step_hours == o.step_hours && span == o.span && seed == o.seed &&
         model == o.model && same_vector(initial_state, o.initial_state) &&
         same_hvac(hvac, o.hvac) && battery == o.battery && initial_soc == o.initial_soc &&
         pv == o.pv && load == o.load && price == o.price && comfort == o.comfort &&
         std::equal(disturbances.begin(), disturbances.end(), o.disturbances.begin(),
                    o.disturbances.end(), same_vector) &&
         forecast_error == o.forecast_error && controller == o.controller;
}

// ---------------------------------------------------------------------------
// Reading

namespace {

int line_of(const YAML::Node& node) {
  const YAML::Mark mark = node.Mark();
  return mark.line >= 0 ? mark.line + 1 : -1;
}

[[noreturn]] void fail(const std::string& field, const std::string& message, const YAML::Node& at) {
  throw ValidationError(field, message, line_of(at));
}

class Reader {
 public:
  explicit Reader(std::filesystem::path base_dir) : base_dir_(std::move(base_dir)) {}

  Scenario read(const YAML::Node& root);

 private:
  void note(const std::string& field, const YAML::Node& node) { lines_[field] = line_of(node); }

  void allow_keys(const YAML::Node& node, const std::string& path,
                  std::initializer_list<const char*> keys) {
    if (!node.IsMap()) fail(path.empty() ? "scenario" : path, "expected a mapping", node);
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      if (!allowed.count(key)) {
        fail(path.empty() ? key : path + "." + key, "unknown key", kv.first);
      }
    }
  }

  double number(const YAML::Node& node, const std::string& field) {
    note(field, node);
    if (!node.IsScalar()) fail(field, "expected a number", node);
    try {
      return node.as<double>();
    } catch (const YAML::BadConversion&) {
      fail(field, "expected a number, got '" + node.Scalar() + "'", node);
    }
  }

  double number(const YAML::Node& parent, const char* key, const std::string& field,
                double fallback) {
    const YAML::Node node = parent[key];
    return node ? number(node, field) : fallback;
  }

  long long integer(const YAML::Node& node, const std::string& field) {
    note(field, node);
    if (!node.IsScalar()) fail(field, "expected an integer", node);
    try {
      return node.as<long long>();
    } catch (const YAML::BadConversion&) {
      fail(field, "expected an integer, got '" + node.Scalar() + "'", node);
    }
  }

  bool boolean(const YAML::Node& parent, const char* key, const std::string& field, bool fallback) {
    const YAML::Node node = parent[key];
    if (!node) return fallback;
    note(field, node);
    try {
      return node.as<bool>();
    } catch (const YAML::BadConversion&) {
      fail(field, "expected true or false", node);
    }
  }

  std::string text(const YAML::Node& node, const std::string& field) {
    note(field, node);
    if (!node.IsScalar()) fail(field, "expected a string", node);
    return node.Scalar();
  }

  std::vector<double> list(const YAML::Node& node, const std::string& field) {
    note(field, node);
    if (!node.IsSequence()) fail(field, "expected a list of numbers", node);
    std::vector<double> out;
    out.reserve(node.size());
    for (const auto& item : node) out.push_back(number(item, field));
    note(field, node);
    return out;
  }

  Eigen::VectorXd vector(const YAML::Node& node, const std::string& field, Index size) {
    const std::vector<double> v = list(node, field);
    if (size >= 0 && static_cast<Index>(v.size()) != size) {
      fail(field, fmt::format("expected {} entries, got {}", size, v.size()), node);
    }
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
  }

  Eigen::MatrixXd matrix(const YAML::Node& node, const std::string& field, Index rows, Index cols) {
    note(field, node);
    if (!node.IsSequence() || static_cast<Index>(node.size()) != rows) {
      fail(field, fmt::format("expected {} rows", rows), node);
    }
    Eigen::MatrixXd M(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      const YAML::Node row = node[static_cast<std::size_t>(r)];
      const Eigen::VectorXd v = vector(row, field, cols);
      M.row(r) = v.transpose();
    }
    note(field, node);
    return M;
  }

  YAML::Node required(const YAML::Node& parent, const char* key, const std::string& field) {
    const YAML::Node node = parent[key];
    if (!node) fail(field, "is required", parent);
    return node;
  }

  void read_model(const YAML::Node& node, Scenario& s, const Eigen::VectorXd& supply);
  void read_hvac(const YAML::Node& node, Scenario& s);
  void read_battery(const YAML::Node& node, Scenario& s);
  void read_comfort(const YAML::Node& node, Scenario& s);
  void read_traces(const YAML::Node& root, Scenario& s);
  void read_csv(const std::filesystem::path& path, const YAML::Node& at, Scenario& s,
                std::vector<double>& alpha);
  void read_forecast_error(const YAML::Node& node, Scenario& s);
  void read_controller(const YAML::Node& node, Scenario& s);

  int line_for(const std::string& field) const {
    std::string key = field;
    while (true) {
      const auto it = lines_.find(key);
      if (it != lines_.end()) return it->second;
      const auto dot = key.rfind('.');
      if (dot == std::string::npos) return -1;
      key.resize(dot);
    }
  }

  std::filesystem::path base_dir_;
  std::map<std::string, int> lines_;
};

Scenario Reader::read(const YAML::Node& root) {
  allow_keys(root, "",
             {"name", "step_hours", "span", "seed", "model", "hvac", "battery", "pv", "comfort",
              "tariff", "traces", "forecast_error", "controller"});
  Scenario s;
  if (root["name"]) s.name = text(root["name"], "name");
  s.step_hours = number(root, "step_hours", "step_hours", s.step_hours);
  if (root["span"]) s.span = static_cast<int>(integer(root["span"], "span"));
  if (root["seed"]) s.seed = static_cast<std::uint64_t>(integer(root["seed"], "seed"));

  read_hvac(required(root, "hvac", "hvac"), s);
  read_model(required(root, "model", "model"), s, s.hvac.supply_temperature);
  if (root["battery"]) read_battery(root["battery"], s);
  if (root["pv"]) {
    const YAML::Node pv = root["pv"];
    allow_keys(pv, "pv", {"rated_kw"});
    s.pv = PvParams{number(required(pv, "rated_kw", "pv.rated_kw"), "pv.rated_kw"), {}};
  }
  read_comfort(required(root, "comfort", "comfort"), s);
  read_traces(root, s);
  if (root["forecast_error"]) read_forecast_error(root["forecast_error"], s);
  if (root["controller"]) read_controller(root["controller"], s);

  try {
    s.validate();
  } catch (const ValidationError& e) {
    if (e.line() > 0) throw;
    throw ValidationError(e.field(), e.message(), line_for(e.field()));
  }
  return s;
}

void Reader::read_hvac(const YAML::Node& node, Scenario& s) {
  allow_keys(node, "hvac",
             {"rated_fan_power_w", "rated_flow_kg_s", "supply_temperature_c", "flow_min_kg_s",
              "flow_max_kg_s", "cop", "air_specific_heat", "return_ratio", "max_power_w"});
  HvacParams& h = s.hvac;
  h.rated_flow = vector(required(node, "rated_flow_kg_s", "hvac.rated_flow_kg_s"),
                        "hvac.rated_flow_kg_s", -1);
  const Index m = h.rated_flow.size();
  h.rated_fan_power_w = vector(required(node, "rated_fan_power_w", "hvac.rated_fan_power_w"),
                               "hvac.rated_fan_power_w", m);
  h.supply_temperature =
      node["supply_temperature_c"]
          ? vector(node["supply_temperature_c"], "hvac.supply_temperature_c", m)
          : Eigen::VectorXd::Constant(m, 12.8);
  h.flow_min = node["flow_min_kg_s"] ? vector(node["flow_min_kg_s"], "hvac.flow_min_kg_s", m)
                                     : Eigen::VectorXd::Zero(m);
  h.flow_max = node["flow_max_kg_s"] ? vector(node["flow_max_kg_s"], "hvac.flow_max_kg_s", m)
                                     : Eigen::VectorXd(h.rated_flow);
  h.cop = number(node, "cop", "hvac.cop", h.cop);
  h.air_specific_heat = number(node, "air_specific_heat", "hvac.air_specific_heat", h.air_specific_heat);
  h.return_ratio = number(node, "return_ratio", "hvac.return_ratio", h.return_ratio);
  h.max_power_w = number(node, "max_power_w", "hvac.max_power_w", h.max_power_w);
}

void Reader::read_model(const YAML::Node& node, Scenario& s, const Eigen::VectorXd& supply) {
  allow_keys(node, "model", {"builtin", "n", "m", "l", "A", "B", "C", "E", "x0"});
  if (node["builtin"]) {
    const std::string name = text(node["builtin"], "model.builtin");
    if (name != "single_zone") fail("model.builtin", "unknown model '" + name + "'", node["builtin"]);
    for (const char* key : {"n", "m", "l", "A", "B", "C", "E"}) {
      if (node[key]) fail(std::string("model.") + key, "not allowed with a builtin model", node[key]);
    }
    const ThermalModel base = default_single_zone();
    if (!same_vector(supply, base.supply_temperature())) {
      s.model = ThermalModel(base.A(), base.B(), base.C(), base.E(),
                             supply.size() == base.zones() ? supply : base.supply_temperature());
    } else {
      s.model = base;
    }
  } else {
    const auto n = static_cast<Index>(integer(required(node, "n", "model.n"), "model.n"));
    const auto m = static_cast<Index>(integer(required(node, "m", "model.m"), "model.m"));
    const auto l = static_cast<Index>(integer(required(node, "l", "model.l"), "model.l"));
    if (n < 1) fail("model.n", "must be >= 1", node["n"]);
    if (m < 1 || m > n) fail("model.m", "must satisfy 1 <= m <= n", node["m"]);
    if (l < 1) fail("model.l", "must be >= 1", node["l"]);
    if (supply.size() != m) {
      fail("hvac.rated_flow_kg_s", fmt::format("must have m = {} entries", m), node["m"]);
    }
    const Eigen::MatrixXd A = matrix(required(node, "A", "model.A"), "model.A", n, n);
    const Eigen::MatrixXd B = matrix(required(node, "B", "model.B"), "model.B", n, m);
    const Eigen::MatrixXd C = matrix(required(node, "C", "model.C"), "model.C", m, n);
    const Eigen::MatrixXd E = matrix(required(node, "E", "model.E"), "model.E", n, l);
    if (!A.allFinite()) fail("model.A", "must be finite", node["A"]);
    if (!B.allFinite()) fail("model.B", "must be finite", node["B"]);
    if (!E.allFinite()) fail("model.E", "must be finite", node["E"]);
    for (Index i = 0; i < m; ++i) {
      const bool binary = ((C.row(i).array() == 0.0) || (C.row(i).array() == 1.0)).all();
      if (!binary || C.row(i).sum() != 1.0) {
        fail("model.C", fmt::format("row {} must select exactly one node", i), node["C"]);
      }
    }
    if (!supply.allFinite()) fail("hvac.supply_temperature_c", "must be finite", node);
    s.model = ThermalModel(A, B, C, E, supply);
  }
  s.initial_state = node["x0"] ? vector(node["x0"], "model.x0", s.model.states())
                               : Eigen::VectorXd::Constant(s.model.states(), 24.0);
}

void Reader::read_battery(const YAML::Node& node, Scenario& s) {
  allow_keys(node, "battery",
             {"capacity_kwh", "decay_per_step", "efficiency", "soc_min", "soc_max",
              "max_discharge_kw", "max_charge_kw", "strict_efficiency", "initial_soc"});
  BatteryParams b;
  b.capacity_kwh = number(node, "capacity_kwh", "battery.capacity_kwh", b.capacity_kwh);
  b.decay_per_step = number(node, "decay_per_step", "battery.decay_per_step", b.decay_per_step);
  b.efficiency = number(node, "efficiency", "battery.efficiency", b.efficiency);
  b.soc_min = number(node, "soc_min", "battery.soc_min", b.soc_min);
  b.soc_max = number(node, "soc_max", "battery.soc_max", b.soc_max);
  b.max_discharge_kw = number(node, "max_discharge_kw", "battery.max_discharge_kw", b.max_discharge_kw);
  b.max_charge_kw = number(node, "max_charge_kw", "battery.max_charge_kw", b.max_charge_kw);
  b.strict_efficiency =
      boolean(node, "strict_efficiency", "battery.strict_efficiency", b.strict_efficiency);
  b.step_hours = s.step_hours;
  s.initial_soc = number(node, "initial_soc", "battery.initial_soc", b.soc_min);
  s.battery = b;
}

void Reader::read_comfort(const YAML::Node& node, Scenario& s) {
  allow_keys(node, "comfort", {"occupied_c", "unoccupied_c", "occupancy"});
  ComfortBand& c = s.comfort;
  auto band = [&](const char* key, double& lo, double& hi) {
    const std::string field = std::string("comfort.") + key;
    if (!node[key]) return;
    const Eigen::VectorXd v = vector(node[key], field, 2);
    lo = v[0];
    hi = v[1];
  };
  band("occupied_c", c.occupied_min, c.occupied_max);
  band("unoccupied_c", c.unoccupied_min, c.unoccupied_max);
  const YAML::Node occ = required(node, "occupancy", "comfort.occupancy");
  note("comfort.occupancy", occ);
  if (!occ.IsSequence()) fail("comfort.occupancy", "expected one list of windows per zone", occ);
  c.occupancy.clear();
  for (const auto& zone : occ) {
    if (!zone.IsSequence()) fail("comfort.occupancy", "expected a list of [start, end] windows", zone);
    std::vector<OccupancyWindow> windows;
    for (const auto& w : zone) {
      const Eigen::VectorXd v = vector(w, "comfort.occupancy", 2);
      windows.push_back({v[0], v[1]});
    }
    c.occupancy.push_back(std::move(windows));
  }
  note("comfort.occupancy", occ);
}

void Reader::read_traces(const YAML::Node& root, Scenario& s) {
  const YAML::Node traces = required(root, "traces", "traces");
  allow_keys(traces, "traces", {"csv", "disturbances", "alpha", "load_kw"});
  std::vector<double> alpha;
  if (traces["csv"]) {
    for (const char* key : {"disturbances", "alpha", "load_kw"}) {
      if (traces[key]) fail(std::string("traces.") + key, "not allowed together with traces.csv", traces[key]);
    }
    if (root["tariff"]) fail("tariff", "not allowed together with traces.csv", root["tariff"]);
    std::filesystem::path path = text(traces["csv"], "traces.csv");
    if (path.is_relative()) path = base_dir_ / path;
    read_csv(path, traces["csv"], s, alpha);
  } else {
    const YAML::Node d = required(traces, "disturbances", "traces.disturbances");
    note("traces.disturbances", d);
    if (!d.IsSequence()) fail("traces.disturbances", "expected a list of samples", d);
    s.disturbances.clear();
    for (const auto& row : d) {
      s.disturbances.push_back(vector(row, "traces.disturbances", s.model.disturbances()));
    }
    note("traces.disturbances", d);
    s.load.kw = list(required(traces, "load_kw", "traces.load_kw"), "traces.load_kw");
    s.price = list(required(root, "tariff", "tariff"), "tariff");
    if (traces["alpha"]) alpha = list(traces["alpha"], "traces.alpha");
  }
  if (s.pv) {
    if (alpha.empty() && !traces["csv"]) fail("traces.alpha", "is required when pv is present", traces);
    s.pv->alpha = std::move(alpha);
  }
}

void Reader::read_csv(const std::filesystem::path& path, const YAML::Node& at, Scenario& s,
                      std::vector<double>& alpha) {
  std::ifstream in(path);
  if (!in) fail("traces.csv", "cannot open " + path.string(), at);
  if (s.model.disturbances() != 3) {
    fail("traces.csv", "the CSV sidecar needs exactly three disturbance channels", at);
  }
  std::string line;
  int line_number = 0;
  auto csv_fail = [&](const std::string& message) {
    throw ValidationError("traces.csv", path.filename().string() + ": " + message, line_number);
  };
  if (!std::getline(in, line)) csv_fail("empty file");
  ++line_number;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) csv_fail(std::string("header must be '") + kCsvHeader + "'");
  s.disturbances.clear();
  s.load.kw.clear();
  s.price.clear();
  alpha.clear();
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(row, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        csv_fail("'" + cell + "' is not a number");
      }
      if (used != cell.size()) csv_fail("'" + cell + "' is not a number");
      values.push_back(v);
    }
    if (values.size() != 7) csv_fail(fmt::format("expected 7 columns, got {}", values.size()));
    s.disturbances.push_back(Eigen::Vector3d(values[1], values[2], values[3]));
    alpha.push_back(values[4]);
    s.load.kw.push_back(values[5]);
    s.price.push_back(values[6]);
  }
}

void Reader::read_forecast_error(const YAML::Node& node, Scenario& s) {
  allow_keys(node, "forecast_error", {"seed", "mean", "variance"});
  ForecastErrorSpec& f = s.forecast_error;
  if (node["seed"]) f.seed = static_cast<std::uint64_t>(integer(node["seed"], "forecast_error.seed"));
  const Index l = s.model.disturbances();
  const Eigen::VectorXd variance = node["variance"]
                                       ? vector(node["variance"], "forecast_error.variance", l)
                                       : Eigen::VectorXd::Zero(l);
  const Eigen::VectorXd mean =
      node["mean"] ? vector(node["mean"], "forecast_error.mean", l) : Eigen::VectorXd::Zero(l);
  f.channels.clear();
  if (node["variance"] || node["mean"]) {
    for (Index i = 0; i < l; ++i) f.channels.push_back({mean[i], variance[i]});
  }
}

void Reader::read_controller(const YAML::Node& node, Scenario& s) {
  allow_keys(node, "controller",
             {"window", "window_mode", "soft_comfort", "comfort_penalty", "terminal_soc",
              "tolerance", "max_iterations", "multistart", "warm_start", "on_failure",
              "export_guard"});
  ControllerOptions& c = s.controller;
  if (node["window"]) c.window = static_cast<int>(integer(node["window"], "controller.window"));
  if (node["window_mode"]) {
    const std::string mode = text(node["window_mode"], "controller.window_mode");
    if (mode == "wrap") {
      c.window_mode = WindowMode::Wrap;
    } else if (mode == "shrink") {
      c.window_mode = WindowMode::Shrink;
    } else {
      fail("controller.window_mode", "expected wrap or shrink", node["window_mode"]);
    }
  }
  c.soft_comfort = boolean(node, "soft_comfort", "controller.soft_comfort", c.soft_comfort);
  c.comfort_penalty = number(node, "comfort_penalty", "controller.comfort_penalty", c.comfort_penalty);
  c.terminal_soc = boolean(node, "terminal_soc", "controller.terminal_soc", c.terminal_soc);
  c.tolerance = number(node, "tolerance", "controller.tolerance", c.tolerance);
  if (node["max_iterations"]) {
    c.max_iterations = static_cast<int>(integer(node["max_iterations"], "controller.max_iterations"));
  }
  if (node["multistart"]) {
    c.multistart = static_cast<int>(integer(node["multistart"], "controller.multistart"));
  }
  c.warm_start = boolean(node, "warm_start", "controller.warm_start", c.warm_start);
  if (node["on_failure"]) {
    const std::string policy = text(node["on_failure"], "controller.on_failure");
    if (policy == "reuse") {
      c.on_failure = FailurePolicy::ReusePrevious;
    } else if (policy == "abort") {
      c.on_failure = FailurePolicy::Abort;
    } else {
      fail("controller.on_failure", "expected reuse or abort", node["on_failure"]);
    }
  }
  c.export_guard = boolean(node, "export_guard", "controller.export_guard", c.export_guard);
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ValidationError("scenario", e.msg, e.mark.line >= 0 ? e.mark.line + 1 : -1);
  }
  if (!root || root.IsNull()) throw ValidationError("scenario", "empty document");
  return Reader(base_dir).read(root);
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("scenario", "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Writing

namespace {

void emit_numbers(YAML::Emitter& out, const double* data, Index size) {
  out << YAML::Flow << YAML::BeginSeq;
  for (Index i = 0; i < size; ++i) out << num(data[i]);
  out << YAML::EndSeq;
}

void emit_vector(YAML::Emitter& out, const Eigen::VectorXd& v) { emit_numbers(out, v.data(), v.size()); }

void emit_vector(YAML::Emitter& out, const std::vector<double>& v) {
  emit_numbers(out, v.data(), static_cast<Index>(v.size()));
}

void emit_matrix(YAML::Emitter& out, const Eigen::MatrixXd& M) {
  out << YAML::BeginSeq;
  for (Index r = 0; r < M.rows(); ++r) {
    const Eigen::VectorXd row = M.row(r).transpose();
    emit_vector(out, row);
  }
  out << YAML::EndSeq;
}

std::string render(const Scenario& s, const std::optional<std::string>& csv_name) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << s.name;
  out << YAML::Key << "step_hours" << YAML::Value << num(s.step_hours);
  out << YAML::Key << "span" << YAML::Value << s.span;
  out << YAML::Key << "seed" << YAML::Value << s.seed;

  const ThermalModel& m = s.model;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "n" << YAML::Value << m.states();
  out << YAML::Key << "m" << YAML::Value << m.zones();
  out << YAML::Key << "l" << YAML::Value << m.disturbances();
  out << YAML::Key << "A" << YAML::Value;
  emit_matrix(out, m.A());
  out << YAML::Key << "B" << YAML::Value;
  emit_matrix(out, m.B());
  out << YAML::Key << "C" << YAML::Value;
  emit_matrix(out, m.C());
  out << YAML::Key << "E" << YAML::Value;
  emit_matrix(out, m.E());
  out << YAML::Key << "x0" << YAML::Value;
  emit_vector(out, s.initial_state);
  out << YAML::EndMap;

  const HvacParams& h = s.hvac;
  out << YAML::Key << "hvac" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rated_fan_power_w" << YAML::Value;
  emit_vector(out, h.rated_fan_power_w);
  out << YAML::Key << "rated_flow_kg_s" << YAML::Value;
  emit_vector(out, h.rated_flow);
  out << YAML::Key << "supply_temperature_c" << YAML::Value;
  emit_vector(out, h.supply_temperature);
  out << YAML::Key << "flow_min_kg_s" << YAML::Value;
  emit_vector(out, h.flow_min);
  out << YAML::Key << "flow_max_kg_s" << YAML::Value;
  emit_vector(out, h.flow_max);
  out << YAML::Key << "cop" << YAML::Value << num(h.cop);
  out << YAML::Key << "air_specific_heat" << YAML::Value << num(h.air_specific_heat);
  out << YAML::Key << "return_ratio" << YAML::Value << num(h.return_ratio);
  out << YAML::Key << "max_power_w" << YAML::Value << num(h.max_power_w);
  out << YAML::EndMap;

  if (s.battery) {
    const BatteryParams& b = *s.battery;
    out << YAML::Key << "battery" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "capacity_kwh" << YAML::Value << num(b.capacity_kwh);
    out << YAML::Key << "decay_per_step" << YAML::Value << num(b.decay_per_step);
    out << YAML::Key << "efficiency" << YAML::Value << num(b.efficiency);
    out << YAML::Key << "soc_min" << YAML::Value << num(b.soc_min);
    out << YAML::Key << "soc_max" << YAML::Value << num(b.soc_max);
    out << YAML::Key << "max_discharge_kw" << YAML::Value << num(b.max_discharge_kw);
    out << YAML::Key << "max_charge_kw" << YAML::Value << num(b.max_charge_kw);
    out << YAML::Key << "strict_efficiency" << YAML::Value << b.strict_efficiency;
    out << YAML::Key << "initial_soc" << YAML::Value << num(s.initial_soc);
    out << YAML::EndMap;
  }
  if (s.pv) {
    out << YAML::Key << "pv" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "rated_kw" << YAML::Value << num(s.pv->rated_kw);
    out << YAML::EndMap;
  }

  const ComfortBand& c = s.comfort;
  out << YAML::Key << "comfort" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "occupied_c" << YAML::Value;
  emit_vector(out, std::vector<double>{c.occupied_min, c.occupied_max});
  out << YAML::Key << "unoccupied_c" << YAML::Value;
  emit_vector(out, std::vector<double>{c.unoccupied_min, c.unoccupied_max});
  out << YAML::Key << "occupancy" << YAML::Value << YAML::BeginSeq;
  for (const auto& zone : c.occupancy) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const OccupancyWindow& w : zone) {
      emit_vector(out, std::vector<double>{w.start_hour, w.end_hour});
    }
    out << YAML::EndSeq;
  }
  out << YAML::EndSeq << YAML::EndMap;

  if (csv_name) {
    out << YAML::Key << "traces" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "csv" << YAML::Value << *csv_name;
    out << YAML::EndMap;
  } else {
    out << YAML::Key << "tariff" << YAML::Value;
    emit_vector(out, s.price);
    out << YAML::Key << "traces" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "disturbances" << YAML::Value << YAML::BeginSeq;
    for (const DisturbanceSample& d : s.disturbances) emit_vector(out, d);
    out << YAML::EndSeq;
    out << YAML::Key << "load_kw" << YAML::Value;
    emit_vector(out, s.load.kw);
    if (s.pv) {
      out << YAML::Key << "alpha" << YAML::Value;
      emit_vector(out, s.pv->alpha);
    }
    out << YAML::EndMap;
  }

  const ForecastErrorSpec& f = s.forecast_error;
  out << YAML::Key << "forecast_error" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << f.seed;
  if (!f.channels.empty()) {
    std::vector<double> mean, variance;
    for (const NoiseChannel& ch : f.channels) {
      mean.push_back(ch.mean);
      variance.push_back(ch.variance);
    }
    out << YAML::Key << "mean" << YAML::Value;
    emit_vector(out, mean);
    out << YAML::Key << "variance" << YAML::Value;
    emit_vector(out, variance);
  }
  out << YAML::EndMap;

  const ControllerOptions& k = s.controller;
  out << YAML::Key << "controller" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "window" << YAML::Value << k.window;
  out << YAML::Key << "window_mode" << YAML::Value << to_string(k.window_mode);
  out << YAML::Key << "soft_comfort" << YAML::Value << k.soft_comfort;
  out << YAML::Key << "comfort_penalty" << YAML::Value << num(k.comfort_penalty);
  out << YAML::Key << "terminal_soc" << YAML::Value << k.terminal_soc;
  out << YAML::Key << "tolerance" << YAML::Value << num(k.tolerance);
  out << YAML::Key << "max_iterations" << YAML::Value << k.max_iterations;
  out << YAML::Key << "multistart" << YAML::Value << k.multistart;
  out << YAML::Key << "warm_start" << YAML::Value << k.warm_start;
  out << YAML::Key << "on_failure" << YAML::Value << to_string(k.on_failure);
  out << YAML::Key << "export_guard" << YAML::Value << k.export_guard;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace

std::string dump_scenario(const Scenario& s) { return render(s, std::nullopt); }

void save_scenario(const Scenario& s, const std::filesystem::path& path,
                   const std::optional<std::filesystem::path>& csv_sidecar) {
  if (csv_sidecar) {
    if (s.model.disturbances() != 3) {
      throw ValidationError("traces.csv", "the CSV sidecar needs exactly three disturbance channels");
    }
    std::ofstream csv(*csv_sidecar, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + csv_sidecar->string());
    csv << kCsvHeader << '\n';
    for (std::size_t k = 0; k < s.disturbances.size(); ++k) {
      const DisturbanceSample& d = s.disturbances[k];
      const double alpha = s.pv && k < s.pv->alpha.size() ? s.pv->alpha[k] : 0.0;
      csv << num(static_cast<double>(k) * s.step_hours) << ',' << num(d[0]) << ',' << num(d[1])
          << ',' << num(d[2]) << ',' << num(alpha) << ',' << num(s.load.kw[k]) << ','
          << num(s.price[k]) << '\n';
    }
  }
  std::optional<std::string> csv_name;
  if (csv_sidecar) {
    const auto relative = std::filesystem::relative(*csv_sidecar, path.parent_path().empty()
                                                                      ? std::filesystem::path(".")
                                                                      : path.parent_path());
    csv_name = relative.empty() ? csv_sidecar->string() : relative.generic_string();
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << render(s, csv_name);
}

std::string to_string(Configuration config) {
  switch (config) {
    case Configuration::Loads: return "loads";
    case Configuration::LoadsBattery: return "battery";
    case Configuration::LoadsBatteryPv: return "battery+pv";
  }
  return "loads";
}

Configuration parse_configuration(const std::string& text) {
  if (text == "loads") return Configuration::Loads;
  if (text == "battery" || text == "loads+battery") return Configuration::LoadsBattery;
  if (text == "battery+pv" || text == "loads+battery+pv") return Configuration::LoadsBatteryPv;
  throw ValidationError("config", "expected loads, battery or battery+pv, got '" + text + "'");
}

std::vector<DisturbanceSample> realize_disturbances(const Scenario& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> standard(0.0, 1.0);
  std::vector<DisturbanceSample> out;
  out.reserve(static_cast<std::size_t>(s.span));
  const auto& channels = s.forecast_error.channels;
  for (std::size_t k = 0; k < static_cast<std::size_t>(s.span); ++k) {
    DisturbanceSample d = s.disturbance(k);
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const NoiseChannel& c = channels[i];
      double noise = c.mean;
      if (c.variance > 0.0) noise += std::sqrt(c.variance) * standard(rng);
      d[static_cast<Index>(i)] += noise;
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace bems
