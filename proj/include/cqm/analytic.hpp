#pragma once

// Closed-form two-time correlator for a z-measured qubit under Rabi rotation
// about x with dephasing Gamma, starting from r = (x0, 0, 0):
//
//   K(t1, t1 + tau) = [cos W tau + Gamma/(2W) sin W tau] e^{-Gamma tau/2}
//                   + x0 e^{-Gamma t1} tan(phi_a) (Omega/W) sin(W tau) e^{-Gamma tau/2},
//
// W = sqrt(Omega^2 - Gamma^2/4). Averaging t1 over [t_skip, t_skip + T]
// replaces e^{-Gamma t1} by the c-factor. The result does not involve eta.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "cqm/core.hpp"

namespace cqm {

struct RabiCaseParams {
  double gamma = 0.0;    // 1/us
  double omega_r = 0.0;  // rad/us, signed
  double phi_a = 0.0;    // rad
  double x0 = 1.0;       // +-1
  double t_skip = 0.0;   // us
  double t_avg = 1.0;    // us (T)
};

inline void validate(const RabiCaseParams& p) {
  if (!(p.gamma >= 0.0) || !std::isfinite(p.gamma)) throw ConfigError("gamma must be non-negative");
  if (std::abs(p.x0) != 1.0) throw ConfigError("x0 must be +1 or -1");
  if (!(p.t_avg > 0.0)) throw ConfigError("averaging window T must be positive");
  if (!(p.t_skip >= 0.0)) throw ConfigError("t_skip must be non-negative");
  if (!(std::abs(p.phi_a) < std::numbers::pi / 2)) throw ConfigError("phi_a must lie in (-90, 90) degrees");
  if (!(p.omega_r * p.omega_r > 0.25 * p.gamma * p.gamma))
    throw ConfigError("overdamped regime (Omega_R^2 <= Gamma^2/4) is not supported");
}

/// sqrt(Omega_R^2 - Gamma^2/4).
inline double omega_tilde(const RabiCaseParams& p) {
  validate(p);
  return std::sqrt(p.omega_r * p.omega_r - 0.25 * p.gamma * p.gamma);
}

/// c = e^{-Gamma t_skip} (1 - e^{-Gamma T}) / (Gamma T); 1 at Gamma = 0.
inline double c_factor(double gamma, double t_skip, double t_avg) {
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
  if (!(t_avg > 0.0)) throw ConfigError("averaging window T must be positive");
  const double g = gamma * t_avg;
  const double ratio = g == 0.0 ? 1.0 : -std::expm1(-g) / g;
  return std::exp(-gamma * t_skip) * ratio;
}

inline double c_factor(const RabiCaseParams& p) { return c_factor(p.gamma, p.t_skip, p.t_avg); }

/// Informational term, identical to the quantum regression result.
inline double k_qrf_baseline(const RabiCaseParams& p, double tau) {
  if (!(tau >= 0.0)) throw ConfigError("lag must be non-negative");
  const double w = omega_tilde(p);
  return (std::cos(w * tau) + p.gamma / (2.0 * w) * std::sin(w * tau)) * std::exp(-0.5 * p.gamma * tau);
}

/// Phase-backaction shape (Omega/W) sin(W tau) e^{-Gamma tau/2}.
inline double phase_term_shape(const RabiCaseParams& p, double tau) {
  const double w = omega_tilde(p);
  return p.omega_r / w * std::sin(w * tau) * std::exp(-0.5 * p.gamma * tau);
}

inline double k_analytic_pointwise(const RabiCaseParams& p, double t1, double tau) {
  return k_qrf_baseline(p, tau) +
         p.x0 * std::exp(-p.gamma * t1) * std::tan(p.phi_a) * phase_term_shape(p, tau);
}

inline double k_analytic_averaged(const RabiCaseParams& p, double tau) {
  return k_qrf_baseline(p, tau) + p.x0 * c_factor(p) * std::tan(p.phi_a) * phase_term_shape(p, tau);
}

/// K(x0 = +1) - K(x0 = -1) of the averaged correlator.
inline double delta_k(const RabiCaseParams& p, double tau) {
  if (!(tau >= 0.0)) throw ConfigError("lag must be non-negative");
  return 2.0 * c_factor(p) * std::tan(p.phi_a) * phase_term_shape(p, tau);
}

struct CurvePeak {
  double tau = 0.0;
  double value = 0.0;
};

/// Maximum of the averaged correlator over [0, tau_max]: grid scan with step
/// `scan_step`, then golden-section refinement around the best node.
inline CurvePeak averaged_peak(const RabiCaseParams& p, double tau_max, double scan_step = 1e-3) {
  if (!(tau_max > 0.0) || !(scan_step > 0.0)) throw ConfigError("invalid scan range");
  CurvePeak best{0.0, k_analytic_averaged(p, 0.0)};
  const auto n = static_cast<std::size_t>(std::ceil(tau_max / scan_step));
  for (std::size_t i = 1; i <= n; ++i) {
    const double t = std::min(tau_max, static_cast<double>(i) * scan_step);
    const double v = k_analytic_averaged(p, t);
    if (v > best.value) best = {t, v};
  }
  double a = std::max(0.0, best.tau - scan_step);
  double b = std::min(tau_max, best.tau + scan_step);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 100 && b - a > 1e-13; ++it) {
    const double c = b - g * (b - a);
    const double d = a + g * (b - a);
    if (k_analytic_averaged(p, c) > k_analytic_averaged(p, d))
      b = d;
    else
      a = c;
  }
  const double t = 0.5 * (a + b);
  const double v = k_analytic_averaged(p, t);
  if (v > best.value) best = {t, v};
  return best;
}

// ---------------------------------------------------------------------------
// Phase-angle fit

struct DeltaKSample {
  double tau = 0.0;
  double value = 0.0;
  double sigma = 1.0;
};

struct PhaseFit {
  double phi = 0.0;      // rad
  double ci = 0.0;       // 1 sigma, rad
  double tan_phi = 0.0;
  double tan_sigma = 0.0;
  double chi2 = 0.0;
};

/// Weighted least squares for tan(phi_a) in dK(tau) = tan(phi_a) * 2c (Omega/W) sin(W tau) e^{-Gamma tau/2}.
inline PhaseFit fit_phase_angle(std::span<const DeltaKSample> samples, double gamma, double omega_r,
                                double c) {
  if (samples.size() < 3) throw ConfigError("phase fit needs at least 3 samples");
  RabiCaseParams p;
  p.gamma = gamma;
  p.omega_r = omega_r;
  const double w = omega_tilde(p);

  double t_lo = samples.front().tau, t_hi = samples.front().tau;
  double sgg = 0.0, sgy = 0.0, max_sin = 0.0;
  for (const auto& s : samples) {
    if (!(s.sigma > 0.0) || !std::isfinite(s.value)) throw ConfigError("phase fit needs positive, finite errors");
    t_lo = std::min(t_lo, s.tau);
    t_hi = std::max(t_hi, s.tau);
    max_sin = std::max(max_sin, std::abs(std::sin(w * s.tau)));
    const double g = 2.0 * c * phase_term_shape(p, s.tau);
    const double wt = 1.0 / (s.sigma * s.sigma);
    sgg += wt * g * g;
    sgy += wt * g * s.value;
  }
  if (max_sin < 1e-6 || !(sgg > 0.0)) throw ConfigError("uninformative sample times");
  if (t_hi - t_lo < std::numbers::pi / w)
    throw ConfigError("sample times span less than half a Rabi period");

  PhaseFit f;
  f.tan_phi = sgy / sgg;
  f.tan_sigma = 1.0 / std::sqrt(sgg);
  f.phi = std::atan(f.tan_phi);
  f.ci = f.tan_sigma / (1.0 + f.tan_phi * f.tan_phi);
  for (const auto& s : samples) {
    const double r = (s.value - f.tan_phi * 2.0 * c * phase_term_shape(p, s.tau)) / s.sigma;
    f.chi2 += r * r;
  }
  return f;
}

}  // namespace cqm
