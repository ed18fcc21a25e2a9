#pragma once

// Monte Carlo quantum trajectories of a qubit under simultaneous continuous
// measurement by several detectors (Ito form of the quantum Bayesian equation)
// and the output signals they produce.
//
// Within one step k the same standard normal w_{l,k} enters both the sampled
// signal I_l(t_k) = n_l.r_k + sqrt(tau_l/dt) w_{l,k} and the backaction kick
// that moves r_k to r_{k+1}. Splitting these draws would decorrelate signal
// and backaction and destroy every nontrivial correlator.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cqm/core.hpp"
#include "cqm/ensemble.hpp"
#include "cqm/rng.hpp"

namespace cqm {

/// Keys the noise of one trajectory; draws are a pure function of
/// (seed, trajectory_index, detector, step).
struct NoisePlan {
  std::uint64_t seed = 0;
  std::uint64_t trajectory_index = 0;
  std::size_t detector_count = 1;
  double dt = 0.0;

  double draw(std::size_t detector, std::uint64_t step) const noexcept {
    return standard_normal(seed, trajectory_index, static_cast<std::uint32_t>(detector), step);
  }
};

enum class SignalKind { normalized, raw };

/// One stochastic run: states r(t_k) before step k and per-detector signal
/// samples, detector-major (signals[l * n_steps + k]).
struct TrajectoryRecord {
  TimeGrid grid{0.0, 1.0, 1};
  std::size_t detector_count = 0;
  std::vector<Vec3> states;
  std::vector<double> signals;
  SignalKind kind = SignalKind::normalized;

  std::span<const double> signal(std::size_t detector) const {
    return std::span<const double>(signals).subspan(detector * grid.n_steps(), grid.n_steps());
  }
  std::span<double> signal(std::size_t detector) {
    return std::span<double>(signals).subspan(detector * grid.n_steps(), grid.n_steps());
  }
};

/// Backaction direction of one detector, without the 1/sqrt(tau) factor:
/// n - (n.r) r + K n x r.
inline Vec3 backaction_direction(const Vec3& r, const Vec3& n, double k_phase) {
  return n - n.dot(r) * r + k_phase * n.cross(r);
}

/// One plain Euler-Maruyama step of the Ito equation
///   dr = Lambda (r - r_st) dt + sum_l [n_l - (n_l.r) r + K_l n_l x r] / sqrt(tau_l) dW_l
/// with dW_l = sqrt(dt) w_l.
inline BlochVector step_ito(const BlochVector& r, std::span<const DetectorModel> detectors,
                            const EnsembleGenerator& generator, double dt,
                            std::span<const double> noise_draws) {
  if (noise_draws.size() != detectors.size())
    throw ConfigError("step_ito: one noise draw per detector required");
  Vec3 next = r + generator.lambda * (r - generator.r_st) * dt;
  const double sdt = std::sqrt(dt);
  for (std::size_t l = 0; l < detectors.size(); ++l) {
    const auto& d = detectors[l];
    next += backaction_direction(r, d.axis(), d.k_phase()) * (sdt * noise_draws[l] / std::sqrt(d.tau_m()));
  }
  return next;
}

/// Integration scheme for the deterministic part of a step.
///
/// `exponential_euler` applies the stochastic kick first and then the exact
/// ensemble propagator over the step, r_{k+1} = P(dt) (r_k + kick) + p_st(dt).
/// Its ensemble mean follows the ensemble equation exactly on the grid, and
/// the discrete signal correlators coincide with the collapse-recipe values at
/// the grid times. `euler_maruyama` is the textbook scheme (step_ito).
enum class Scheme { exponential_euler, euler_maruyama };

/// Everything needed to simulate trajectories.
struct SimulationSetup {
  std::vector<DetectorModel> detectors;
  EnsembleSchedule schedule;
  TimeGrid grid{0.0, 1.0, 1};
  PhysicalState initial_state;
  Scheme scheme = Scheme::exponential_euler;
  /// Allowed overshoot of |r| above 1 before the run is aborted.
  double norm_tolerance = 0.05;
};

/// Step size heuristic min(1/Gamma, 2 pi/|Omega_R|, tau_min) / 250; zero
/// rates are ignored.
inline double default_time_step(double gamma, double omega_r, double tau_min) {
  double scale = std::numeric_limits<double>::infinity();
  if (gamma > 0.0) scale = std::min(scale, 1.0 / gamma);
  if (omega_r != 0.0) scale = std::min(scale, two_pi / std::abs(omega_r));
  if (tau_min > 0.0) scale = std::min(scale, tau_min);
  if (!std::isfinite(scale)) throw ConfigError("cannot derive a default time step");
  return scale / 250.0;
}

/// Precomputes step propagators for a setup and simulates trajectories.
/// Immutable after construction, so one instance may be shared by workers.
class TrajectorySimulator {
 public:
  explicit TrajectorySimulator(SimulationSetup setup) : setup_(std::move(setup)) {
    if (setup_.detectors.empty()) throw ConfigError("at least one detector is required");
    const auto& g = setup_.grid;
    const std::size_t n = g.n_steps();
    if (!setup_.schedule.covers(g.t0(), g.time(n)))
      throw ConfigError("ensemble schedule does not cover the simulation window");

    step_table_.resize(n);
    step_segment_.resize(n);
    std::vector<std::ptrdiff_t> cached(setup_.schedule.segments().size(), -1);
    for (std::size_t k = 0; k < n; ++k) {
      const double a = g.time(k);
      const double b = g.time(k + 1);
      const std::size_t seg = setup_.schedule.segment_index(a);
      step_segment_[k] = static_cast<std::uint32_t>(seg);
      const auto& s = setup_.schedule.segments()[seg];
      if (b <= s.t_end) {
        if (cached[seg] < 0) {
          cached[seg] = static_cast<std::ptrdiff_t>(propagators_.size());
          propagators_.push_back(constant_propagator(s.lambda, s.r_st, g.dt()));
        }
        step_table_[k] = static_cast<std::uint32_t>(cached[seg]);
      } else {
        step_table_[k] = static_cast<std::uint32_t>(propagators_.size());
        propagators_.push_back(setup_.schedule.propagator(a, b));
      }
    }

    for (const auto& d : setup_.detectors) {
      kick_scale_.push_back(std::sqrt(g.dt() / d.tau_m()));
      noise_scale_.push_back(std::sqrt(d.tau_m() / g.dt()));
    }
  }

  const SimulationSetup& setup() const noexcept { return setup_; }

  /// Simulates trajectory `trajectory` of the ensemble keyed by `seed` into
  /// `out`, reusing its storage.
  void simulate(std::uint64_t seed, std::uint64_t trajectory, TrajectoryRecord& out) const {
    const auto& g = setup_.grid;
    const std::size_t n = g.n_steps();
    const std::size_t nd = setup_.detectors.size();
    out.grid = g;
    out.detector_count = nd;
    out.kind = SignalKind::normalized;
    out.states.resize(n);
    out.signals.resize(nd * n);

    std::vector<NoiseStream> streams;
    streams.reserve(nd);
    for (std::size_t l = 0; l < nd; ++l)
      streams.emplace_back(seed, trajectory, static_cast<std::uint32_t>(l));
    std::vector<std::array<double, 2>> pairs(nd);

    Vec3 r = setup_.initial_state.vector();
    for (std::size_t k = 0; k < n; ++k) {
      out.states[k] = r;
      if ((k & 1) == 0)
        for (std::size_t l = 0; l < nd; ++l) pairs[l] = streams[l].normal_pair(k >> 1);

      Vec3 kick = Vec3::Zero();
      for (std::size_t l = 0; l < nd; ++l) {
        const auto& d = setup_.detectors[l];
        const double w = pairs[l][k & 1];
        const Vec3& axis = d.axis();
        const double proj = axis.dot(r);
        out.signals[l * n + k] = proj + noise_scale_[l] * w;
        kick += (axis - proj * r + d.k_phase() * axis.cross(r)) * (kick_scale_[l] * w);
      }

      if (setup_.scheme == Scheme::exponential_euler) {
        r = propagators_[step_table_[k]].apply(r + kick);
      } else {
        const auto& s = setup_.schedule.segments()[step_segment_[k]];
        r = r + s.lambda * (r - s.r_st) * g.dt() + kick;
      }

      const double norm = r.norm();
      if (!(norm <= 1.0 + setup_.norm_tolerance))
        throw NumericalError("state norm " + std::to_string(norm) + " exceeds 1 + " +
                                 std::to_string(setup_.norm_tolerance) + " at step " +
                                 std::to_string(k) + " of trajectory " +
                                 std::to_string(trajectory) + "; reduce dt",
                             trajectory, k);
    }
  }

  TrajectoryRecord simulate(std::uint64_t seed, std::uint64_t trajectory) const {
    TrajectoryRecord rec;
    simulate(seed, trajectory, rec);
    return rec;
  }

 private:
  SimulationSetup setup_;
  std::vector<Propagator> propagators_;
  std::vector<std::uint32_t> step_table_;
  std::vector<std::uint32_t> step_segment_;
  std::vector<double> kick_scale_;
  std::vector<double> noise_scale_;
};

inline TrajectoryRecord simulate_trajectory(const SimulationSetup& setup, const NoisePlan& plan) {
  if (plan.detector_count != setup.detectors.size())
    throw ConfigError("noise plan detector count does not match the setup");
  if (plan.dt != 0.0 && plan.dt != setup.grid.dt())
    throw ConfigError("noise plan dt does not match the grid");
  return TrajectorySimulator(setup).simulate(plan.seed, plan.trajectory_index);
}

// ---------------------------------------------------------------------------
// Raw signals

/// raw = offset_l + response_l * I for every detector row.
inline TrajectoryRecord synthesize_raw(const TrajectoryRecord& record,
                                       std::span<const DetectorModel> detectors) {
  if (record.kind != SignalKind::normalized) throw ConfigError("synthesize_raw expects a normalized record");
  if (detectors.size() != record.detector_count)
    throw ConfigError("synthesize_raw: one detector model per signal row required");
  TrajectoryRecord out = record;
  out.kind = SignalKind::raw;
  for (std::size_t l = 0; l < detectors.size(); ++l) {
    const double resp = detectors[l].response();
    const double off = detectors[l].offset();
    if (resp == 0.0) throw ConfigError("detector response must be non-zero");
    for (double& v : out.signal(l)) v = off + resp * v;
  }
  return out;
}

inline TrajectoryRecord synthesize_raw(const TrajectoryRecord& record, const DetectorModel& detector) {
  return synthesize_raw(record, std::span<const DetectorModel>(&detector, 1));
}

/// Inverse of synthesize_raw: I = (raw - offset) / response.
inline TrajectoryRecord normalize_raw(const TrajectoryRecord& record,
                                      std::span<const DetectorModel> detectors) {
  if (record.kind != SignalKind::raw) throw ConfigError("normalize_raw expects a raw record");
  if (detectors.size() != record.detector_count)
    throw ConfigError("normalize_raw: one detector model per signal row required");
  TrajectoryRecord out = record;
  out.kind = SignalKind::normalized;
  for (std::size_t l = 0; l < detectors.size(); ++l) {
    const double resp = detectors[l].response();
    if (resp == 0.0) throw ConfigError("detector response must be non-zero");
    for (double& v : out.signal(l)) v = (v - detectors[l].offset()) / resp;
  }
  return out;
}

/// Boxcar average of `factor` consecutive samples; trailing samples that do not
/// fill a bin are dropped.
inline std::vector<double> boxcar(std::span<const double> samples, std::size_t factor) {
  if (factor == 0) throw ConfigError("boxcar factor must be positive");
  std::vector<double> out(samples.size() / factor);
  for (std::size_t b = 0; b < out.size(); ++b) {
    double s = 0.0;
    for (std::size_t j = 0; j < factor; ++j) s += samples[b * factor + j];
    out[b] = s / static_cast<double>(factor);
  }
  return out;
}

}  // namespace cqm
