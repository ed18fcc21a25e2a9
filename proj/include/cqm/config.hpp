#pragma once

// Experiment configuration (JSON) and its validation. See README for the
// schema. Parsing only checks presence and types; validate_experiment reports
// every semantic problem at once.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <algorithm>
#include <limits>
#include <optional>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include <json.hpp>

#include "cqm/digest.hpp"
#include "cqm/ensemble.hpp"
#include "cqm/trajectory.hpp"

namespace cqm {

struct DetectorConfig {
  Vec3 axis = Vec3::UnitZ();
  double tau_min = 1.0;    // us
  double phi_a_deg = 0.0;
  double eta = 1.0;
  double response = 1.0;   // per unit of I at phi_a = 0
  double offset = 0.0;
};

struct SegmentConfig {
  double t_end = 0.0;  // us
  double gamma = 0.0;  // 1/us
  double rabi_mhz = 0.0;
};

struct EvolutionConfig {
  double gamma = 0.0;
  double rabi_mhz = 0.0;
  std::vector<SegmentConfig> segments;  // optional; consecutive from grid.t0
};

struct GridConfig {
  double t0 = 0.0;
  std::optional<double> dt;  // default_time_step when absent
  double duration = 1.0;
};

struct EnsembleConfig {
  std::uint64_t n_traj = 1;
  std::uint64_t seed = 0;
  std::size_t block_size = 3000;
};

enum class CorrelatorMode { mc, gcr, analytic };

struct CorrelatorConfig {
  CorrelatorMode mode = CorrelatorMode::gcr;
  std::vector<std::size_t> detectors{0, 0};
  std::vector<double> times;  // explicit N-time evaluation (gcr only)
  double lag_max = 4.0;
  double lag_step = 0.04;
  double t_avg = 0.28;
  double t_skip = 0.28;
};

struct CalibrationConfig {
  std::vector<double> phi_a_deg{0.0, 70.0};
  std::uint64_t traces_per_state = 17000;
  double duration = 4.0;
  double dt = 0.004;
  double response_window = 0.6;
  double variance_window = 4.0;
};

struct ExperimentConfig {
  std::vector<DetectorConfig> detectors;
  EvolutionConfig evolution;
  Vec3 initial_state = Vec3::Zero();
  GridConfig grid;
  EnsembleConfig ensemble;
  CorrelatorConfig correlator;
  CalibrationConfig calibration;
  std::uint64_t digest = 0;  // FNV-1a of the canonical JSON dump
};

inline const char* mode_name(CorrelatorMode m) {
  switch (m) {
    case CorrelatorMode::mc: return "mc";
    case CorrelatorMode::gcr: return "gcr";
    case CorrelatorMode::analytic: return "analytic";
  }
  return "?";
}

inline CorrelatorMode parse_mode(const std::string& s) {
  if (s == "mc") return CorrelatorMode::mc;
  if (s == "gcr") return CorrelatorMode::gcr;
  if (s == "analytic") return CorrelatorMode::analytic;
  throw ConfigError("unknown correlator mode '" + s + "' (expected mc, gcr or analytic)");
}

namespace detail {

using json = nlohmann::json;

inline const json& required(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + " must be an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError("missing field " + (path.empty() ? key : path + "." + key));
  return *it;
}

template <class T>
T as(const json& v, const std::string& path) {
  try {
    if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path + " must be a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0))
        throw ConfigError(path + " must be a non-negative integer");
    }
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + " has the wrong type");
  }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path) {
  return as<T>(required(j, key, path), (path.empty() ? key : path + "." + key));
}

template <class T>
T get_or(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  return as<T>(j.at(key), path + "." + key);
}

inline Vec3 get_vec3(const json& v, const std::string& path) {
  if (v.is_array()) {
    if (v.size() != 3) throw ConfigError(path + " must have 3 components");
    return Vec3(as<double>(v[0], path + "[0]"), as<double>(v[1], path + "[1]"), as<double>(v[2], path + "[2]"));
  }
  return Vec3(get<double>(v, "x", path), get<double>(v, "y", path), get<double>(v, "z", path));
}

}  // namespace detail

inline ExperimentConfig parse_experiment(const nlohmann::json& root) {
  using detail::get;
  using detail::get_or;
  ExperimentConfig c;
  c.digest = fnv1a64(root.dump());

  const auto& dets = detail::required(root, "detectors", "");
  if (!dets.is_array()) throw ConfigError("detectors must be a list");
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const std::string p = "detectors[" + std::to_string(i) + "]";
    DetectorConfig d;
    d.axis = detail::get_vec3(detail::required(dets[i], "axis", p), p + ".axis");
    d.tau_min = get<double>(dets[i], "tau_min_us", p);
    d.phi_a_deg = get<double>(dets[i], "phi_a_deg", p);
    d.eta = get<double>(dets[i], "eta", p);
    d.response = get_or<double>(dets[i], "response", p, 1.0);
    d.offset = get_or<double>(dets[i], "offset", p, 0.0);
    c.detectors.push_back(d);
  }

  const auto& ev = detail::required(root, "evolution", "");
  c.evolution.gamma = get<double>(ev, "gamma_per_us", "evolution");
  c.evolution.rabi_mhz = get<double>(ev, "rabi_mhz", "evolution");
  if (ev.contains("segments")) {
    const auto& segs = ev.at("segments");
    if (!segs.is_array()) throw ConfigError("evolution.segments must be a list");
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const std::string p = "evolution.segments[" + std::to_string(i) + "]";
      c.evolution.segments.push_back({get<double>(segs[i], "t_end_us", p),
                                      get<double>(segs[i], "gamma_per_us", p),
                                      get<double>(segs[i], "rabi_mhz", p)});
    }
  }

  c.initial_state = detail::get_vec3(detail::required(root, "initial_state", ""), "initial_state");

  const auto& grid = detail::required(root, "grid", "");
  c.grid.t0 = get_or<double>(grid, "t0_us", "grid", 0.0);
  if (grid.contains("dt_us")) c.grid.dt = detail::as<double>(grid.at("dt_us"), "grid.dt_us");
  c.grid.duration = get<double>(grid, "duration_us", "grid");

  if (root.contains("ensemble")) {
    const auto& e = root.at("ensemble");
    c.ensemble.n_traj = get<std::uint64_t>(e, "n_traj", "ensemble");
    c.ensemble.seed = get<std::uint64_t>(e, "seed", "ensemble");
    c.ensemble.block_size = get_or<std::size_t>(e, "block_size", "ensemble", 3000);
  }

  if (root.contains("correlator")) {
    const auto& k = root.at("correlator");
    c.correlator.mode = parse_mode(get<std::string>(k, "mode", "correlator"));
    if (k.contains("detectors")) {
      c.correlator.detectors.clear();
      const auto& d = k.at("detectors");
      if (!d.is_array()) throw ConfigError("correlator.detectors must be a list");
      for (std::size_t i = 0; i < d.size(); ++i)
        c.correlator.detectors.push_back(detail::as<std::size_t>(d[i], "correlator.detectors[" + std::to_string(i) + "]"));
    }
    if (k.contains("times")) {
      const auto& t = k.at("times");
      if (!t.is_array()) throw ConfigError("correlator.times must be a list");
      for (std::size_t i = 0; i < t.size(); ++i)
        c.correlator.times.push_back(detail::as<double>(t[i], "correlator.times[" + std::to_string(i) + "]"));
    }
    c.correlator.lag_max = get_or<double>(k, "lag_max_us", "correlator", 4.0);
    c.correlator.lag_step = get_or<double>(k, "lag_step_us", "correlator", 0.04);
    c.correlator.t_avg = get_or<double>(k, "T_us", "correlator", 0.28);
    c.correlator.t_skip = get_or<double>(k, "t_skip_us", "correlator", 0.28);
  }

  if (root.contains("calibration")) {
    const auto& k = root.at("calibration");
    if (k.contains("phi_a_deg")) {
      c.calibration.phi_a_deg.clear();
      const auto& a = k.at("phi_a_deg");
      if (!a.is_array()) throw ConfigError("calibration.phi_a_deg must be a list");
      for (std::size_t i = 0; i < a.size(); ++i)
        c.calibration.phi_a_deg.push_back(detail::as<double>(a[i], "calibration.phi_a_deg[" + std::to_string(i) + "]"));
    }
    c.calibration.traces_per_state = get_or<std::uint64_t>(k, "traces_per_state", "calibration", 17000);
    c.calibration.duration = get_or<double>(k, "duration_us", "calibration", 4.0);
    c.calibration.dt = get_or<double>(k, "dt_us", "calibration", 0.004);
    c.calibration.response_window = get_or<double>(k, "response_window_us", "calibration", 0.6);
    c.calibration.variance_window = get_or<double>(k, "variance_window_us", "calibration", 4.0);
  }
  return c;
}

inline ExperimentConfig parse_experiment(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_experiment(j);
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str());
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationReport {
  std::vector<std::string> violations;

  bool ok() const noexcept { return violations.empty(); }
  bool contains(const std::string& fragment) const {
    for (const auto& v : violations)
      if (v.find(fragment) != std::string::npos) return true;
    return false;
  }
};

/// Time step actually used by the config.
inline double effective_dt(const ExperimentConfig& c) {
  if (c.grid.dt) return *c.grid.dt;
  double tau_min = std::numeric_limits<double>::infinity();
  for (const auto& d : c.detectors) tau_min = std::min(tau_min, d.tau_min);
  return default_time_step(c.evolution.gamma, angular_from_mhz(c.evolution.rabi_mhz), tau_min);
}

inline ValidationReport validate_experiment(const ExperimentConfig& c) {
  ValidationReport r;
  auto add = [&](std::string s) { r.violations.push_back(std::move(s)); };

  if (c.detectors.empty()) add("at least one detector is required");
  for (std::size_t i = 0; i < c.detectors.size(); ++i) {
    const auto& d = c.detectors[i];
    const std::string p = "detectors[" + std::to_string(i) + "]: ";
    if (!is_finite(d.axis) || std::abs(d.axis.norm() - 1.0) > unit_axis_tolerance) add(p + "axis is not a unit vector");
    if (!(d.tau_min > 0.0) || !std::isfinite(d.tau_min)) add(p + "tau_min must be positive");
    if (!(d.eta > 0.0 && d.eta <= 1.0)) add(p + "eta out of range");
    if (!(std::abs(d.phi_a_deg) < 90.0)) add(p + "phi_a out of range (-90, 90) degrees");
    if (!(d.response != 0.0) || !std::isfinite(d.response)) add(p + "response must be non-zero");
    if (!std::isfinite(d.offset)) add(p + "offset must be finite");
  }

  if (!(c.evolution.gamma >= 0.0) || !std::isfinite(c.evolution.gamma)) add("evolution: gamma must be non-negative");
  if (!std::isfinite(c.evolution.rabi_mhz)) add("evolution: Rabi frequency must be finite");

  if (!is_finite(c.initial_state) || c.initial_state.norm() > 1.0 + physical_norm_tolerance)
    add("initial_state lies outside the Bloch sphere");

  const double t_end = c.grid.t0 + c.grid.duration;
  if (!(c.grid.duration > 0.0)) add("grid: duration must be positive");
  if (c.grid.dt && !(*c.grid.dt > 0.0)) add("grid: dt must be positive");
  if (c.grid.duration > 0.0 && (!c.grid.dt || *c.grid.dt > 0.0) && !c.detectors.empty()) {
    try {
      TimeGrid::from_duration(c.grid.t0, effective_dt(c), c.grid.duration);
    } catch (const ConfigError& e) {
      add(std::string("grid: ") + e.what());
    }
  }

  if (!c.evolution.segments.empty()) {
    double prev = c.grid.t0;
    for (std::size_t i = 0; i < c.evolution.segments.size(); ++i) {
      const auto& s = c.evolution.segments[i];
      if (!(s.t_end > prev)) add("evolution.segments[" + std::to_string(i) + "]: end time not after its start");
      if (!(s.gamma >= 0.0)) add("evolution.segments[" + std::to_string(i) + "]: gamma must be non-negative");
      prev = std::max(prev, s.t_end);
    }
    if (c.evolution.segments.back().t_end < t_end) add("evolution.segments do not cover the simulation window");
  }

  if (c.ensemble.n_traj < 1) add("ensemble: n_traj must be at least 1");
  if (c.ensemble.block_size < 2) add("ensemble: block_size must be at least 2");

  const auto& k = c.correlator;
  for (std::size_t i = 0; i < k.detectors.size(); ++i)
    if (k.detectors[i] >= c.detectors.size()) add("correlator: detector index " + std::to_string(k.detectors[i]) + " out of range");
  if (!k.times.empty()) {
    for (std::size_t i = 1; i < k.times.size(); ++i)
      if (!(k.times[i] > k.times[i - 1])) {
        add("correlator: times not strictly ordered");
        break;
      }
    if (k.times.front() < c.grid.t0) add("correlator: times precede the initial time");
    if (k.detectors.size() != k.times.size()) add("correlator: one detector index per time argument required");
    if (k.mode != CorrelatorMode::gcr) add("correlator: explicit time lists are supported in gcr mode only");
  } else {
    if (k.detectors.size() != 2) add("correlator: lag sweeps need exactly two detector indices");
    if (!(k.lag_step > 0.0) || !(k.lag_max >= k.lag_step)) add("correlator: invalid lag grid");
    if (!(k.t_avg > 0.0)) add("correlator: T must be positive");
    if (!(k.t_skip >= 0.0)) add("correlator: t_skip must be non-negative");
    if (k.mode == CorrelatorMode::mc && k.t_skip + k.t_avg + k.lag_max > c.grid.duration + 1e-9)
      add("correlator: t_skip + T + lag_max exceeds the trace duration");
  }
  return r;
}

/// Extra conditions for trajectory simulation: the configured ensemble
/// dephasing must cover the measurement-induced part.
inline ValidationReport validate_for_simulation(const ExperimentConfig& c) {
  ValidationReport r = validate_experiment(c);
  if (!r.ok()) return r;
  double gamma_m = 0.0;
  for (const auto& d : c.detectors) gamma_m += 1.0 / (2.0 * d.eta * d.tau_min);
  auto check = [&](double g, const std::string& where) {
    if (g < gamma_m * (1.0 - 1e-9))
      r.violations.push_back(where + ": gamma " + std::to_string(g) +
                             " is below the measurement-induced dephasing rate " + std::to_string(gamma_m));
  };
  if (c.evolution.segments.empty())
    check(c.evolution.gamma, "evolution");
  else
    for (std::size_t i = 0; i < c.evolution.segments.size(); ++i)
      check(c.evolution.segments[i].gamma, "evolution.segments[" + std::to_string(i) + "]");
  return r;
}

inline void require_valid(const ValidationReport& r) {
  if (r.ok()) return;
  std::string msg = "invalid configuration:";
  for (const auto& v : r.violations) msg += "\n  " + v;
  throw ConfigError(msg);
}

// ---------------------------------------------------------------------------
// Builders

inline std::vector<DetectorModel> build_detectors(const ExperimentConfig& c) {
  std::vector<DetectorModel> out;
  for (const auto& d : c.detectors)
    out.push_back(DetectorModel::from_quadrature(d.axis, d.tau_min, radians(d.phi_a_deg), d.eta,
                                                 d.response, d.offset));
  return out;
}

inline EnsembleSchedule build_schedule(const ExperimentConfig& c) {
  if (c.evolution.segments.empty())
    return EnsembleSchedule(rabi_dephasing_generator(c.evolution.gamma, angular_from_mhz(c.evolution.rabi_mhz)));
  std::vector<EnsembleGenerator> segs;
  double start = c.grid.t0;
  for (const auto& s : c.evolution.segments) {
    auto g = rabi_dephasing_generator(s.gamma, angular_from_mhz(s.rabi_mhz));
    g.t_begin = start;
    g.t_end = s.t_end;
    segs.push_back(g);
    start = s.t_end;
  }
  return EnsembleSchedule(std::move(segs));
}

inline TimeGrid build_grid(const ExperimentConfig& c) {
  return TimeGrid::from_duration(c.grid.t0, effective_dt(c), c.grid.duration);
}

inline SimulationSetup build_setup(const ExperimentConfig& c) {
  require_valid(validate_for_simulation(c));
  SimulationSetup s;
  s.detectors = build_detectors(c);
  s.schedule = build_schedule(c);
  s.grid = build_grid(c);
  s.initial_state = PhysicalState(c.initial_state);
  return s;
}

}  // namespace cqm
