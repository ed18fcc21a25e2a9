#pragma once

// Shared domain types for continuous qubit measurement: Bloch vectors,
// detector models, time grids and the error types used across the library.
//
// Units: time in microseconds, rates in 1/us, angular frequencies in rad/us.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cqm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Unbounded Bloch-type 3-vector. Collapsed states produced by the
/// collapse recipe routinely leave the unit ball, so no norm bound applies.
using BlochVector = Vec3;

inline constexpr double physical_norm_tolerance = 1e-9;
inline constexpr double unit_axis_tolerance = 1e-12;

/// Invalid user input: malformed config, bad parameters, uncovered time ranges.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown during integration (e.g. norm overshoot from too large a step).
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::uint64_t trajectory, std::uint64_t step)
      : std::runtime_error(what), trajectory_(trajectory), step_(step) {}

  std::uint64_t trajectory() const noexcept { return trajectory_; }
  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t trajectory_;
  std::uint64_t step_;
};

inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

/// A qubit state that is guaranteed to lie inside the Bloch ball
/// (|r| <= 1 + physical_norm_tolerance). Used for initial conditions.
class PhysicalState {
 public:
  PhysicalState() : r_(Vec3::Zero()) {}

  explicit PhysicalState(const Vec3& r) : r_(r) {
    if (!is_finite(r)) throw ConfigError("physical state has non-finite components");
    if (r.norm() > 1.0 + physical_norm_tolerance)
      throw ConfigError("physical state lies outside the Bloch sphere (|r| = " +
                        std::to_string(r.norm()) + ")");
  }

  PhysicalState(double x, double y, double z) : PhysicalState(Vec3(x, y, z)) {}

  const Vec3& vector() const noexcept { return r_; }

  PhysicalState operator-() const { return PhysicalState(Vec3(-r_)); }

 private:
  Vec3 r_;
};

// ---------------------------------------------------------------------------
// Unit conversions

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Rabi frequency f [MHz] -> angular frequency [rad/us].
constexpr double angular_from_mhz(double f_mhz) { return two_pi * f_mhz; }
constexpr double mhz_from_angular(double omega) { return omega / two_pi; }

constexpr double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }
constexpr double degrees(double radians) { return radians * 180.0 / std::numbers::pi; }

// ---------------------------------------------------------------------------

/// One continuously monitored observable n.sigma with its amplifier settings.
///
/// `tau_m` is the measurement time (SNR = 1), `k_phase` the relative strength of
/// phase backaction (tan of the quadrature misalignment angle), `eta` the
/// quantum efficiency. `response` and `offset` map the normalized signal to raw
/// detector units: raw = offset + response * I.
class DetectorModel {
 public:
  DetectorModel(const Vec3& axis, double tau_m, double k_phase, double eta,
                double response = 1.0, double offset = 0.0)
      : axis_(axis), tau_m_(tau_m), k_phase_(k_phase), eta_(eta), response_(response),
        offset_(offset) {
    if (!is_finite(axis) || std::abs(axis.norm() - 1.0) > unit_axis_tolerance)
      throw ConfigError("detector axis must be a unit vector");
    if (!(tau_m > 0.0) || !std::isfinite(tau_m)) throw ConfigError("tau_m must be positive");
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta out of range");
    if (!std::isfinite(k_phase)) throw ConfigError("phase backaction strength must be finite");
    if (!std::isfinite(response) || !std::isfinite(offset))
      throw ConfigError("response and offset must be finite");
  }

  /// Builds a detector from the quadrature angle phi_a:
  /// tau_m = tau_min / cos^2(phi_a), K = tan(phi_a), response = response_max * cos(phi_a).
  static DetectorModel from_quadrature(const Vec3& axis, double tau_min, double phi_a,
                                       double eta, double response_max = 1.0,
                                       double offset = 0.0) {
    if (!(std::abs(phi_a) < std::numbers::pi / 2))
      throw ConfigError("quadrature angle must lie in (-90, 90) degrees");
    const double c = std::cos(phi_a);
    return DetectorModel(axis, tau_min / (c * c), std::tan(phi_a), eta, response_max * c,
                         offset);
  }

  const Vec3& axis() const noexcept { return axis_; }
  double tau_m() const noexcept { return tau_m_; }
  double k_phase() const noexcept { return k_phase_; }
  double eta() const noexcept { return eta_; }
  double response() const noexcept { return response_; }
  double offset() const noexcept { return offset_; }

  /// Gamma_m = (1 + K^2) / (2 eta tau_m); independent of phi_a for fixed tau_min.
  double measurement_dephasing_rate() const noexcept {
    return (1.0 + k_phase_ * k_phase_) / (2.0 * eta_ * tau_m_);
  }

  /// tau_min = tau_m / (1 + K^2), i.e. tau_m cos^2(phi_a).
  double tau_min() const noexcept { return tau_m_ / (1.0 + k_phase_ * k_phase_); }

 private:
  Vec3 axis_;
  double tau_m_;
  double k_phase_;
  double eta_;
  double response_;
  double offset_;
};

/// Uniform time grid t_k = t0 + k dt, k = 0 .. n_steps - 1.
class TimeGrid {
 public:
  TimeGrid(double t0, double dt, std::size_t n_steps) : t0_(t0), dt_(dt), n_steps_(n_steps) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("grid dt must be positive");
    if (n_steps < 1) throw ConfigError("grid needs at least one step");
    if (!std::isfinite(t0)) throw ConfigError("grid t0 must be finite");
  }

  /// Grid covering [t0, t0 + duration) with duration an integer multiple of dt.
  static TimeGrid from_duration(double t0, double dt, double duration) {
    if (!(dt > 0.0)) throw ConfigError("grid dt must be positive");
    const double ratio = duration / dt;
    const double n = std::round(ratio);
    if (n < 1.0 || std::abs(ratio - n) > 1e-9 * std::max(1.0, n))
      throw ConfigError("grid duration must be a positive integer multiple of dt");
    return TimeGrid(t0, dt, static_cast<std::size_t>(n));
  }

  double t0() const noexcept { return t0_; }
  double dt() const noexcept { return dt_; }
  std::size_t n_steps() const noexcept { return n_steps_; }
  double duration() const noexcept { return static_cast<double>(n_steps_) * dt_; }

  // Multiplicative, not accumulated, so there is no drift over long grids.
  double time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }

  /// Nearest grid index to time t (clamped to the grid).
  std::size_t nearest_index(double t) const noexcept {
    const double k = std::round((t - t0_) / dt_);
    if (k <= 0.0) return 0;
    if (k >= static_cast<double>(n_steps_ - 1)) return n_steps_ - 1;
    return static_cast<std::size_t>(k);
  }

 private:
  double t0_;
  double dt_;
  std::size_t n_steps_;
};

// ---------------------------------------------------------------------------
// Correlator results

/// Multi-time correlator values. Point i has time arguments times[i] (one per
/// detector index); std_errors is empty for exact (non Monte Carlo) values.
struct CorrelatorResult {
  std::vector<std::size_t> detectors;
  std::vector<std::vector<double>> times;
  std::vector<double> values;
  std::vector<double> std_errors;
};

/// Time-averaged two-time correlator K(tau) on a lag grid.
struct LagCurve {
  std::vector<double> tau;
  std::vector<double> value;
  std::vector<double> error;  // empty for exact curves

  std::size_t size() const noexcept { return tau.size(); }
};

}  // namespace cqm
