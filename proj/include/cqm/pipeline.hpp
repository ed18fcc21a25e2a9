#pragma once

// Config-driven workflows shared by the command-line tool and the tests:
// correlator tables in the three modes and the calibration report.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "cqm/analytic.hpp"
#include "cqm/archive.hpp"
#include "cqm/calibration.hpp"
#include "cqm/config.hpp"
#include "cqm/gcr.hpp"
#include "cqm/monte_carlo.hpp"

namespace cqm {

inline constexpr const char* artifact_version = "1.0.0";

inline std::string hex_digest(std::uint64_t d) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(d));
  return buf;
}

/// "# cqm <version> config_digest=0x..." plus optional extra fields.
inline void write_csv_preamble(std::ostream& os, std::uint64_t config_digest, const std::string& extra = "") {
  os << "# cqm " << artifact_version << " config_digest=" << hex_digest(config_digest);
  if (!extra.empty()) os << ' ' << extra;
  os << '\n';
}

/// tau_i = i * step, i = 1 .. floor(max / step).
inline std::vector<double> lag_grid(double step, double max) {
  if (!(step > 0.0) || !(max >= step)) throw ConfigError("invalid lag grid");
  const auto n = static_cast<std::size_t>(std::floor(max / step + 1e-9));
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i + 1) * step;
  return t;
}

// ---------------------------------------------------------------------------
// Correlator tables. K_plus uses the configured initial state, K_minus its
// negation (for r0 = (x0, 0, 0) the subscript is the sign of x0 * Omega_R when
// Omega_R > 0).

inline CorrelatorTable correlate_gcr(const ExperimentConfig& c) {
  require_valid(validate_experiment(c));
  const auto& k = c.correlator;
  if (!k.times.empty()) throw ConfigError("explicit time lists produce a point value; use gcr_point");
  const auto detectors = build_detectors(c);
  const auto schedule = build_schedule(c);
  const auto taus = lag_grid(k.lag_step, k.lag_max);
  const PhysicalState r0(c.initial_state);
  CorrelatorTable t;
  t.plus = averaged_lag_curve(detectors, k.detectors[0], k.detectors[1], schedule, r0, c.grid.t0, k.t_skip,
                              k.t_avg, taus);
  t.minus = averaged_lag_curve(detectors, k.detectors[0], k.detectors[1], schedule, -r0, c.grid.t0, k.t_skip,
                               k.t_avg, taus);
  return t;
}

/// N-time correlator at the configured explicit times.
inline double gcr_point(const ExperimentConfig& c) {
  require_valid(validate_experiment(c));
  if (c.correlator.times.empty()) throw ConfigError("correlator.times is empty");
  CorrelatorSpec spec{c.correlator.times, c.correlator.detectors, PhysicalState(c.initial_state), c.grid.t0};
  return correlator_recursive(spec, build_detectors(c), build_schedule(c));
}

inline RabiCaseParams rabi_case(const ExperimentConfig& c) {
  const auto& k = c.correlator;
  const bool single_z = k.detectors.size() == 2 && k.detectors[0] == k.detectors[1] &&
                        k.detectors[0] < c.detectors.size() &&
                        (c.detectors[k.detectors[0]].axis - Vec3::UnitZ()).norm() < 1e-12;
  const Vec3& r0 = c.initial_state;
  if (!single_z || std::abs(std::abs(r0.x()) - 1.0) > 1e-12 || r0.y() != 0.0 || r0.z() != 0.0 ||
      !c.evolution.segments.empty())
    throw ConfigError("analytic mode requires a z-detector autocorrelator, r0 = (+-1, 0, 0) and constant evolution");
  RabiCaseParams p;
  p.gamma = c.evolution.gamma;
  p.omega_r = angular_from_mhz(c.evolution.rabi_mhz);
  p.phi_a = radians(c.detectors[k.detectors[0]].phi_a_deg);
  p.x0 = r0.x() > 0 ? 1.0 : -1.0;
  p.t_skip = k.t_skip;
  p.t_avg = k.t_avg;
  return p;
}

inline CorrelatorTable correlate_analytic(const ExperimentConfig& c) {
  require_valid(validate_experiment(c));
  const auto p = rabi_case(c);
  auto q = p;
  q.x0 = -p.x0;
  CorrelatorTable t;
  for (double tau : lag_grid(c.correlator.lag_step, c.correlator.lag_max)) {
    t.plus.tau.push_back(tau);
    t.plus.value.push_back(k_analytic_averaged(p, tau));
    t.minus.tau.push_back(tau);
    t.minus.value.push_back(k_analytic_averaged(q, tau));
  }
  return t;
}

inline RawCorrelatorOptions raw_options(const ExperimentConfig& c, double dt, double response, double offset) {
  const auto& k = c.correlator;
  if (k.detectors.size() != 2 || k.detectors[0] != k.detectors[1])
    throw ConfigError("mc mode supports single-detector autocorrelators only");
  RawCorrelatorOptions o;
  o.detector = k.detectors[0];
  o.response = response;
  o.fixed_offset = offset;
  o.dt = dt;
  o.dt_out = k.lag_step;
  o.t_skip = k.t_skip;
  o.t_avg = k.t_avg;
  o.lag_max = k.lag_max;
  return o;
}

/// Monte Carlo estimate from freshly simulated raw records (n_traj per case).
inline CorrelatorTable correlate_mc(const ExperimentConfig& c, std::uint64_t seed, unsigned threads) {
  const auto setup = build_setup(c);
  require_valid(validate_experiment(c));
  const auto& det = setup.detectors.at(c.correlator.detectors.at(0));
  const auto opt = raw_options(c, setup.grid.dt(), det.response(), det.offset());
  EnsembleRunOptions run{c.ensemble.n_traj, seed, c.ensemble.block_size, threads};

  auto estimate = [&](const PhysicalState& r0) {
    auto s = setup;
    s.initial_state = r0;
    TrajectorySimulator sim(std::move(s));
    RawSynthesizer<RawCorrelatorEstimator> proto(RawCorrelatorEstimator(opt), setup.detectors);
    auto done = run_ensemble(sim, run, proto);
    return done.inner().result();
  };
  CorrelatorTable t;
  t.plus = estimate(setup.initial_state);
  t.minus = estimate(-setup.initial_state);
  return t;
}

/// Monte Carlo estimate from two raw archives.
inline CorrelatorTable correlate_archives(const ExperimentConfig& c, const std::string& plus_path,
                                          const std::string& minus_path) {
  require_valid(validate_experiment(c));
  auto estimate = [&](const std::string& path) {
    ArchiveReader reader(path);
    const auto& h = reader.header();
    if (h.kind != SignalKind::raw) throw ConfigError(path + ": mc mode expects a raw archive");
    const std::size_t l = c.correlator.detectors.at(0);
    if (l >= h.n_detectors()) throw ConfigError(path + ": detector index out of range for this archive");
    RawCorrelatorEstimator est(raw_options(c, h.dt, h.responses[l], h.offsets[l]));
    reader.feed(est, c.ensemble.block_size);
    return est.result();
  };
  CorrelatorTable t;
  t.plus = estimate(plus_path);
  t.minus = estimate(minus_path);
  return t;
}

// ---------------------------------------------------------------------------
// Calibration

struct AngleCalibration {
  double phi_a_deg = 0.0;
  DetectorModel truth;
  ResponseEstimate response;
  TauEstimate tau;
  IntegratedSignalStats plus;
  IntegratedSignalStats minus;
};

struct CalibrationReport {
  std::vector<AngleCalibration> angles;
  double pooled_variance_slope = 0.0;
  bool variances_consistent = true;
};

/// Simulates z_in = +-1 raw runs (no Rabi drive) with detector 0 at every
/// calibration angle, then estimates response, tau_m and eta. The variance
/// slope is pooled over all runs.
inline CalibrationReport calibrate(const ExperimentConfig& c, std::uint64_t seed, unsigned threads) {
  require_valid(validate_experiment(c));
  const auto& cal = c.calibration;
  if (cal.phi_a_deg.empty()) throw ConfigError("calibration.phi_a_deg is empty");
  if (cal.traces_per_state < 2) throw ConfigError("calibration needs at least 2 traces per state");
  const auto& d0 = c.detectors.at(0);
  // One extra sample so the integrated records span [0, duration].
  const TimeGrid grid(0.0, cal.dt, TimeGrid::from_duration(0.0, cal.dt, cal.duration).n_steps() + 1);
  const std::size_t n_samples = grid.n_steps();

  CalibrationReport rep;
  std::uint64_t stream = 0;
  for (double phi_deg : cal.phi_a_deg) {
    const auto det = DetectorModel::from_quadrature(d0.axis, d0.tau_min, radians(phi_deg), d0.eta, d0.response,
                                                    d0.offset);
    auto run = [&](double z) {
      SimulationSetup s;
      s.detectors = {det};
      s.schedule = EnsembleSchedule(rabi_dephasing_generator(c.evolution.gamma, 0.0));
      s.grid = grid;
      s.initial_state = PhysicalState(z * d0.axis);
      TrajectorySimulator sim(std::move(s));
      RawSynthesizer<IntegratedSignalStats> proto(IntegratedSignalStats(n_samples, cal.dt), {det});
      // Each run gets its own seed so no noise is shared between runs.
      EnsembleRunOptions o{cal.traces_per_state, seed + stream++, std::max<std::size_t>(c.ensemble.block_size, 1),
                           threads};
      auto r = run_ensemble(sim, o, proto);
      return r.inner();
    };
    auto plus = run(1.0);
    auto minus = run(-1.0);
    auto resp = estimate_response(plus, minus, cal.response_window);
    rep.angles.push_back({phi_deg, det, resp, {}, std::move(plus), std::move(minus)});
  }

  std::vector<const IntegratedSignalStats*> pool;
  for (const auto& a : rep.angles) {
    pool.push_back(&a.plus);
    pool.push_back(&a.minus);
  }
  for (auto& a : rep.angles) {
    a.tau = estimate_tau_m(pool, a.response.response, c.evolution.gamma, radians(a.phi_a_deg), cal.variance_window);
    rep.pooled_variance_slope = a.tau.variance_slope;
    rep.variances_consistent = rep.variances_consistent && a.tau.variances_consistent;
  }
  return rep;
}

inline void write_calibration_text(std::ostream& os, const CalibrationReport& rep, double gamma) {
  char line[256];
  std::snprintf(line, sizeof line, "pooled variance slope: %.5f (raw units^2/us)%s\n", rep.pooled_variance_slope,
                rep.variances_consistent ? "" : "  [WARNING: sigma^2 differs between runs]");
  os << line;
  for (const auto& a : rep.angles) {
    const double true_eta = 1.0 / (2.0 * gamma * a.truth.tau_min());
    std::snprintf(line, sizeof line, "phi_a = %6.2f deg\n", a.phi_a_deg);
    os << line;
    std::snprintf(line, sizeof line, "  Delta I (separation) %.5f  injected %.5f  (%+.2f%%)\n", a.response.separation,
                  2.0 * a.truth.response(), 100.0 * (a.response.response / a.truth.response() - 1.0));
    os << line;
    std::snprintf(line, sizeof line, "  tau_m %.5f us  injected %.5f us  (%+.2f%%)\n", a.tau.tau_m, a.truth.tau_m(),
                  100.0 * (a.tau.tau_m / a.truth.tau_m() - 1.0));
    os << line;
    std::snprintf(line, sizeof line, "  eta %.5f  from injected tau_min %.5f  (%+.2f%%)\n", a.tau.eta, true_eta,
                  100.0 * (a.tau.eta / true_eta - 1.0));
    os << line;
  }
  if (rep.angles.size() >= 2) {
    const auto& a = rep.angles.front();
    for (std::size_t i = 1; i < rep.angles.size(); ++i) {
      const auto& b = rep.angles[i];
      const double ratio = b.response.response / a.response.response;
      const double expect = std::cos(radians(b.phi_a_deg)) / std::cos(radians(a.phi_a_deg));
      std::snprintf(line, sizeof line, "cos law %.1f/%.1f: ratio %.5f expected %.5f (%+.2f%%)\n", b.phi_a_deg,
                    a.phi_a_deg, ratio, expect, 100.0 * (ratio / expect - 1.0));
      os << line;
    }
  }
}

/// Columns t_us, then per angle: dII (mean integral difference), var_plus, var_minus.
inline void write_calibration_csv(std::ostream& os, const CalibrationReport& rep) {
  os << "t_us";
  for (const auto& a : rep.angles) {
    char h[96];
    std::snprintf(h, sizeof h, ",dII_%g,var_plus_%g,var_minus_%g", a.phi_a_deg, a.phi_a_deg, a.phi_a_deg);
    os << h;
  }
  os << '\n';
  if (rep.angles.empty()) return;
  const auto& ref = rep.angles.front().plus;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", ref.time(k));
    os << buf;
    for (const auto& a : rep.angles) {
      std::snprintf(buf, sizeof buf, ",%.17g", a.plus.mean(k) - a.minus.mean(k));
      os << buf;
      std::snprintf(buf, sizeof buf, ",%.17g", a.plus.variance(k));
      os << buf;
      std::snprintf(buf, sizeof buf, ",%.17g", a.minus.variance(k));
      os << buf;
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// dK input for the phase fit

/// Reads tau_us, dK and err_dK columns (by header name); '#' lines are
/// skipped. Rows with zero error get unit weight when every error is zero.
inline std::vector<DeltaKSample> read_delta_k_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
      if (ch == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    out.push_back(cur);
    return out;
  };
  std::vector<DeltaKSample> rows;
  long i_tau = -1, i_dk = -1, i_err = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line);
    if (header.empty()) {
      header = cells;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "tau_us") i_tau = static_cast<long>(i);
        if (cells[i] == "dK") i_dk = static_cast<long>(i);
        if (cells[i] == "err_dK") i_err = static_cast<long>(i);
      }
      if (i_tau < 0 || i_dk < 0) throw ConfigError("dK csv needs tau_us and dK columns");
      continue;
    }
    try {
      DeltaKSample s;
      s.tau = std::stod(cells.at(static_cast<std::size_t>(i_tau)));
      s.value = std::stod(cells.at(static_cast<std::size_t>(i_dk)));
      s.sigma = i_err >= 0 ? std::stod(cells.at(static_cast<std::size_t>(i_err))) : 0.0;
      rows.push_back(s);
    } catch (const std::exception&) {
      throw ConfigError("malformed dK csv row: " + line);
    }
  }
  bool all_zero = true;
  for (const auto& r : rows) all_zero = all_zero && r.sigma == 0.0;
  if (all_zero)
    for (auto& r : rows) r.sigma = 1.0;
  return rows;
}

}  // namespace cqm
