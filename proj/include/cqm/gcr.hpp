#pragma once

// Multi-time output-signal correlators K = <I_{l_1}(t_1) ... I_{l_N}(t_N)>
// from fictitious strong measurements. At each time argument the state
// collapses to I (n + K n x r), I = +-1, taken with "probability"
// (1 + I n.r)/2; collapsed states may leave the Bloch ball and the weights may
// leave [0, 1]. Neither is ever clamped.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cqm/ensemble.hpp"
#include "cqm/statistics.hpp"

namespace cqm {

/// Time arguments t_1 < ... < t_N, detector index per argument, and the
/// initial state at t_0 <= t_1.
struct CorrelatorSpec {
  std::vector<double> times;
  std::vector<std::size_t> detector_indices;
  PhysicalState initial_state;
  double initial_time = 0.0;
};

/// Largest N accepted by correlator_enumerate.
inline constexpr std::size_t max_enumerated_times = 20;

inline void validate_spec(const CorrelatorSpec& spec, std::span<const DetectorModel> detectors) {
  if (spec.times.empty()) throw ConfigError("correlator needs at least one time argument");
  if (spec.times.size() != spec.detector_indices.size())
    throw ConfigError("one detector index per time argument required");
  for (std::size_t i = 0; i < spec.times.size(); ++i) {
    if (!std::isfinite(spec.times[i])) throw ConfigError("correlator times must be finite");
    if (i > 0 && !(spec.times[i] > spec.times[i - 1]))
      throw ConfigError("times not strictly ordered");
    if (spec.detector_indices[i] >= detectors.size())
      throw ConfigError("detector index " + std::to_string(spec.detector_indices[i]) +
                        " out of range");
  }
  if (!(spec.initial_time <= spec.times.front()))
    throw ConfigError("initial time must not exceed t_1");
}

/// outcome * (n + K n x r_pre).
inline BlochVector collapsed_state(const BlochVector& r_pre, const Vec3& axis, double k_phase,
                                   int outcome) {
  return static_cast<double>(outcome) * (axis + k_phase * axis.cross(r_pre));
}

/// (1 + outcome n.r) / 2, unclamped.
inline double outcome_probability(const BlochVector& r, const Vec3& axis, int outcome) {
  return 0.5 * (1.0 + static_cast<double>(outcome) * axis.dot(r));
}

namespace detail {

struct GcrChain {
  Vec3 r1;                           // r(t_1 - 0)
  std::vector<Vec3> axes;            // n_{l_j}
  std::vector<double> k_phases;      // K_{l_j}
  std::vector<Propagator> gaps;      // (t_{j-1}, t_j) for j = 2..N
};

inline GcrChain make_chain(const CorrelatorSpec& spec, std::span<const DetectorModel> detectors,
                           const EnsembleSchedule& schedule) {
  validate_spec(spec, detectors);
  GcrChain c;
  c.r1 = schedule.evolve(spec.initial_state.vector(), spec.initial_time, spec.times.front());
  for (std::size_t j = 0; j < spec.times.size(); ++j) {
    const auto& d = detectors[spec.detector_indices[j]];
    c.axes.push_back(d.axis());
    c.k_phases.push_back(d.k_phase());
    if (j > 0) c.gaps.push_back(schedule.propagator(spec.times[j - 1], spec.times[j]));
  }
  return c;
}

}  // namespace detail

/// Vector recursion
///   Kvec_j = P_j [n_{j-1} K_{j-2} + K_{j-1}' n_{j-1} x Kvec_{j-1}] + K_{j-1} p_st,j
/// with K_0 = 1, Kvec_1 = r(t_1 - 0), K_j = n_j . Kvec_j (K' is the phase
/// strength of detector j-1). gaps[j-1] propagates from t_j to t_{j+1}.
inline double correlator_recursive(const Vec3& r1, std::span<const Vec3> axes,
                                   std::span<const double> k_phases,
                                   std::span<const Propagator> gaps) {
  const std::size_t n = axes.size();
  if (n == 0 || k_phases.size() != n || gaps.size() + 1 != n)
    throw ConfigError("correlator_recursive: inconsistent chain lengths");
  double k_prev = 1.0;  // K_{j-2}
  Vec3 kvec = r1;
  double k_cur = axes[0].dot(kvec);  // K_{j-1}
  for (std::size_t j = 1; j < n; ++j) {
    const Vec3& a = axes[j - 1];
    const Vec3 next = gaps[j - 1].matrix * (a * k_prev + k_phases[j - 1] * a.cross(kvec)) +
                      k_cur * gaps[j - 1].drift;
    k_prev = k_cur;
    kvec = next;
    k_cur = axes[j].dot(kvec);
  }
  return k_cur;
}

inline double correlator_recursive(const CorrelatorSpec& spec,
                                   std::span<const DetectorModel> detectors,
                                   const EnsembleSchedule& schedule) {
  const auto c = detail::make_chain(spec, detectors, schedule);
  return correlator_recursive(c.r1, c.axes, c.k_phases, c.gaps);
}

/// Sum over all 2^N outcome scenarios of (prod_j I_j) times the product of the
/// sequential outcome weights. Test oracle for the recursion; N <= 20.
inline double correlator_enumerate(const Vec3& r1, std::span<const Vec3> axes,
                                   std::span<const double> k_phases,
                                   std::span<const Propagator> gaps) {
  const std::size_t n = axes.size();
  if (n == 0 || k_phases.size() != n || gaps.size() + 1 != n)
    throw ConfigError("correlator_enumerate: inconsistent chain lengths");
  if (n > max_enumerated_times)
    throw ConfigError("scenario enumeration is capped at " + std::to_string(max_enumerated_times) +
                      " time arguments");
  const std::uint64_t n_scen = std::uint64_t{1} << n;
  std::vector<double> terms(n_scen);
  for (std::uint64_t mask = 0; mask < n_scen; ++mask) {
    Vec3 r = r1;
    double weight = 1.0;
    int sign = 1;
    for (std::size_t j = 0; j < n; ++j) {
      const int outcome = ((mask >> j) & 1) ? -1 : 1;
      weight *= outcome_probability(r, axes[j], outcome);
      sign *= outcome;
      if (j + 1 < n) r = gaps[j].apply(collapsed_state(r, axes[j], k_phases[j], outcome));
    }
    terms[mask] = sign * weight;
  }
  return pairwise_sum(terms);
}

inline double correlator_enumerate(const CorrelatorSpec& spec,
                                   std::span<const DetectorModel> detectors,
                                   const EnsembleSchedule& schedule) {
  if (spec.times.size() > max_enumerated_times)
    throw ConfigError("scenario enumeration is capped at " + std::to_string(max_enumerated_times) +
                      " time arguments");
  const auto c = detail::make_chain(spec, detectors, schedule);
  return correlator_enumerate(c.r1, c.axes, c.k_phases, c.gaps);
}

// ---------------------------------------------------------------------------
// Sweeps

/// Two-time correlator K(t1, t1 + tau) of detectors (a, b) for each tau >= 0;
/// tau = 0 gives the right limit t2 -> t1+.
inline std::vector<double> two_time_sweep(std::span<const DetectorModel> detectors,
                                          std::size_t a, std::size_t b,
                                          const EnsembleSchedule& schedule,
                                          const PhysicalState& r0, double t0, double t1,
                                          std::span<const double> taus) {
  if (a >= detectors.size() || b >= detectors.size()) throw ConfigError("detector index out of range");
  if (!(t0 <= t1)) throw ConfigError("initial time must not exceed t_1");
  const Vec3 r1 = schedule.evolve(r0.vector(), t0, t1);
  const Vec3 axes[2] = {detectors[a].axis(), detectors[b].axis()};
  const double ks[2] = {detectors[a].k_phase(), detectors[b].k_phase()};
  std::vector<double> out;
  out.reserve(taus.size());
  for (double tau : taus) {
    if (!(tau >= 0.0)) throw ConfigError("lag must be non-negative");
    const Propagator gap = schedule.propagator(t1, t1 + tau);
    out.push_back(correlator_recursive(r1, axes, ks, std::span<const Propagator>(&gap, 1)));
  }
  return out;
}

/// Time-averaged lag curve (1/T) int_{t_skip}^{t_skip+T} K(t1, t1 + tau) dt1 by
/// Gauss-Legendre quadrature over t1.
inline LagCurve averaged_lag_curve(std::span<const DetectorModel> detectors, std::size_t a,
                                   std::size_t b, const EnsembleSchedule& schedule,
                                   const PhysicalState& r0, double t0, double t_skip, double t_avg,
                                   std::span<const double> taus, std::size_t nodes = 32) {
  if (!(t_avg > 0.0)) throw ConfigError("averaging window T must be positive");
  const auto q = gauss_legendre(nodes, t0 + t_skip, t0 + t_skip + t_avg);
  LagCurve c;
  c.tau.assign(taus.begin(), taus.end());
  c.value.assign(taus.size(), 0.0);
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const auto k = two_time_sweep(detectors, a, b, schedule, r0, t0, q.nodes[i], taus);
    for (std::size_t m = 0; m < k.size(); ++m) c.value[m] += q.weights[i] * k[m] / t_avg;
  }
  return c;
}

/// Grid-snapped reference for ConditionedLagCorrelator: the mean over t1
/// grid indices window_begin .. window_begin + window_length - 1 of
/// K(t_k, t_{k + m stride}), m = 1 .. n_lags. The initial state sits at grid.t0().
inline LagCurve grid_lag_curve(const TimeGrid& grid, std::span<const DetectorModel> detectors,
                               std::size_t a, std::size_t b, const EnsembleSchedule& schedule,
                               const PhysicalState& r0, std::size_t window_begin,
                               std::size_t window_length, std::size_t lag_stride,
                               std::size_t n_lags) {
  if (a >= detectors.size() || b >= detectors.size()) throw ConfigError("detector index out of range");
  const Vec3 axes[2] = {detectors[a].axis(), detectors[b].axis()};
  const double ks[2] = {detectors[a].k_phase(), detectors[b].k_phase()};
  const bool invariant = schedule.segments().size() == 1;
  std::vector<Propagator> lag_props;
  if (invariant)
    for (std::size_t m = 1; m <= n_lags; ++m)
      lag_props.push_back(schedule.propagator(grid.time(0), grid.time(m * lag_stride)));

  LagCurve c;
  for (std::size_t m = 1; m <= n_lags; ++m) c.tau.push_back(static_cast<double>(m * lag_stride) * grid.dt());
  c.value.assign(n_lags, 0.0);
  for (std::size_t j = 0; j < window_length; ++j) {
    const std::size_t k = window_begin + j;
    const Vec3 r1 = schedule.evolve(r0.vector(), grid.t0(), grid.time(k));
    for (std::size_t m = 1; m <= n_lags; ++m) {
      const Propagator gap = invariant ? lag_props[m - 1]
                                       : schedule.propagator(grid.time(k), grid.time(k + m * lag_stride));
      c.value[m - 1] += correlator_recursive(r1, axes, ks, std::span<const Propagator>(&gap, 1));
    }
  }
  for (double& v : c.value) v /= static_cast<double>(window_length);
  return c;
}

/// Signal window on the grid: detector, first index, number of samples.
struct GridWindow {
  std::size_t detector = 0;
  std::size_t begin = 0;
  std::size_t length = 1;
};

/// Mean of the N-time correlator over every combination of grid indices drawn
/// from consecutive, non-overlapping windows (the last window is usually a
/// single index). Reference for window-averaged Monte Carlo products.
inline double grid_window_average(const TimeGrid& grid, std::span<const DetectorModel> detectors,
                                  const EnsembleSchedule& schedule, const PhysicalState& r0,
                                  std::span<const GridWindow> windows) {
  if (windows.empty()) throw ConfigError("at least one window required");
  std::size_t next = 0;
  for (const auto& w : windows) {
    if (w.length < 1 || w.begin < next) throw ConfigError("windows must be ordered and disjoint");
    if (w.detector >= detectors.size()) throw ConfigError("detector index out of range");
    next = w.begin + w.length;
  }
  if (next > grid.n_steps()) throw ConfigError("windows exceed the grid");

  const bool invariant = schedule.segments().size() == 1;
  std::map<std::size_t, Propagator> cache;
  auto gap = [&](std::size_t from, std::size_t to) -> Propagator {
    if (!invariant) return schedule.propagator(grid.time(from), grid.time(to));
    auto it = cache.find(to - from);
    if (it == cache.end())
      it = cache.emplace(to - from, schedule.propagator(grid.time(0), grid.time(to - from))).first;
    return it->second;
  };

  // Depth-first over index combinations carrying (K_{j-2}, K_{j-1}, Kvec_{j-1}).
  const std::size_t n = windows.size();
  double total = 0.0;
  auto visit = [&](auto&& self, std::size_t depth, std::size_t k_prev_idx, double k_prev2,
                   double k_prev, const Vec3& kvec_prev) -> void {
    const auto& w = windows[depth];
    const auto& d = detectors[w.detector];
    const auto& pd = detectors[windows[depth - 1].detector];
    for (std::size_t k = w.begin; k < w.begin + w.length; ++k) {
      const Propagator p = gap(k_prev_idx, k);
      const Vec3 kvec = p.matrix * (pd.axis() * k_prev2 + pd.k_phase() * pd.axis().cross(kvec_prev)) +
                        k_prev * p.drift;
      const double kk = d.axis().dot(kvec);
      if (depth + 1 == n)
        total += kk;
      else
        self(self, depth + 1, k, k_prev, kk, kvec);
    }
  };
  const auto& w0 = windows[0];
  for (std::size_t k = w0.begin; k < w0.begin + w0.length; ++k) {
    const Vec3 r1 = schedule.evolve(r0.vector(), grid.t0(), grid.time(k));
    const double k1 = detectors[w0.detector].axis().dot(r1);
    if (n == 1)
      total += k1;
    else
      visit(visit, 1, k, 1.0, k1, r1);
  }
  double combos = 1.0;
  for (const auto& w : windows) combos *= static_cast<double>(w.length);
  return total / combos;
}

// ---------------------------------------------------------------------------
// Cross-correlator without unitary evolution

struct ZxDemoSetup {
  std::vector<DetectorModel> detectors;  // 0: z, 1: x
  EnsembleSchedule schedule;
  PhysicalState initial_state;
};

/// sigma_z (phase strength k_z) and sigma_x (no phase backaction) detectors,
/// tau_m = 1 us, efficiency eta, r(0) = (0, -1, 0); the ensemble evolution is
/// the measurement-induced dephasing alone.
inline ZxDemoSetup zx_demo_setup(double k_z = 2.0, double eta = 1.0) {
  ZxDemoSetup s;
  s.detectors.emplace_back(Vec3::UnitZ(), 1.0, k_z, eta);
  s.detectors.emplace_back(Vec3::UnitX(), 1.0, 0.0, eta);
  s.schedule = EnsembleSchedule(measurement_dephasing_generator(s.detectors));
  s.initial_state = PhysicalState(0.0, -1.0, 0.0);
  return s;
}

/// K_zx(t1, t1 + tau) on t1, tau in {0.02, 0.04, ..., 0.2} us.
inline CorrelatorResult cross_correlator_zx_demo(double k_z = 2.0) {
  const auto s = zx_demo_setup(k_z);
  CorrelatorResult out;
  out.detectors = {0, 1};
  for (int i = 1; i <= 10; ++i) {
    for (int j = 1; j <= 10; ++j) {
      const double t1 = 0.02 * i;
      const double t2 = t1 + 0.02 * j;
      CorrelatorSpec spec{{t1, t2}, {0, 1}, s.initial_state, 0.0};
      out.times.push_back({t1, t2});
      out.values.push_back(correlator_recursive(spec, s.detectors, s.schedule));
    }
  }
  return out;
}

}  // namespace cqm
