#pragma once

// Detector calibration from raw records and the experimental-style correlator
// estimator.
//
// Response convention: a detector maps I to raw = offset + response * I, so a
// qubit prepared in z = +-1 gives mean raw levels offset +- response. The
// measured quantity "Delta I" is the slope of <II_+(t)> - <II_-(t)>, which is
// the separation 2 * response; both are reported.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cqm/statistics.hpp"
#include "cqm/trajectory.hpp"

namespace cqm {

// ---------------------------------------------------------------------------
// Integrated signals

/// Ensemble statistics of the cumulative trapezoid integral
/// II(t_k) = sum_{j<k} (I_j + I_{j+1}) dt / 2 of raw traces. Usable as an
/// ensemble reducer (reads one detector row of raw or normalized records).
class IntegratedSignalStats {
 public:
  IntegratedSignalStats(std::size_t n_samples, double dt, std::size_t detector = 0)
      : dt_(dt), detector_(detector), sum_(n_samples, 0.0), sum_sq_(n_samples, 0.0) {
    if (n_samples < 2) throw ConfigError("integration needs at least 2 samples");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  }

  void add_trace(std::span<const double> trace) {
    if (trace.size() != sum_.size()) throw ConfigError("trace length does not match the run grid");
    double acc = 0.0;
    for (std::size_t k = 1; k < trace.size(); ++k) {
      acc += 0.5 * (trace[k - 1] + trace[k]) * dt_;
      sum_[k] += acc;
      sum_sq_[k] += acc * acc;
    }
    ++count_;
  }

  void add(std::uint64_t, const TrajectoryRecord& rec) { add_trace(rec.signal(detector_)); }

  void merge(IntegratedSignalStats&& later) {
    if (later.sum_.size() != sum_.size()) throw ConfigError("merging runs on different grids");
    for (std::size_t k = 0; k < sum_.size(); ++k) {
      sum_[k] += later.sum_[k];
      sum_sq_[k] += later.sum_sq_[k];
    }
    count_ += later.count_;
  }

  std::uint64_t count() const noexcept { return count_; }
  std::size_t size() const noexcept { return sum_.size(); }
  double dt() const noexcept { return dt_; }
  double time(std::size_t k) const noexcept { return static_cast<double>(k) * dt_; }

  double mean(std::size_t k) const { return sum_[k] / static_cast<double>(count_); }

  /// Unbiased sample variance sigma^2(t_k).
  double variance(std::size_t k) const {
    const double n = static_cast<double>(count_);
    const double m = mean(k);
    return (sum_sq_[k] / n - m * m) * n / (n - 1.0);
  }

 private:
  double dt_;
  std::size_t detector_;
  std::vector<double> sum_;
  std::vector<double> sum_sq_;
  std::uint64_t count_ = 0;
};

/// Raw traces for z_in = +1 and z_in = -1 on a common grid.
struct CalibrationRun {
  std::vector<std::vector<double>> raw_plus;
  std::vector<std::vector<double>> raw_minus;
  double dt = 0.004;
  double fit_window = 0.6;
};

struct IntegratedPair {
  IntegratedSignalStats plus;
  IntegratedSignalStats minus;
};

inline IntegratedSignalStats integrate_ensemble(const std::vector<std::vector<double>>& traces, double dt) {
  if (traces.empty()) throw ConfigError("calibration ensemble is empty");
  IntegratedSignalStats s(traces.front().size(), dt);
  for (const auto& t : traces) s.add_trace(t);
  return s;
}

/// Mean integrated signals <II_+(t)>, <II_-(t)> (and their variances).
inline IntegratedPair integrate_traces(const CalibrationRun& run) {
  if (run.raw_plus.empty() || run.raw_minus.empty()) throw ConfigError("calibration ensemble is empty");
  if (run.raw_plus.front().size() != run.raw_minus.front().size())
    throw ConfigError("plus and minus runs must share a grid");
  return {integrate_ensemble(run.raw_plus, run.dt), integrate_ensemble(run.raw_minus, run.dt)};
}

namespace detail {

inline std::size_t window_samples(const IntegratedSignalStats& s, double window) {
  if (!(window > 0.0)) throw ConfigError("fit window must be positive");
  const double last = s.time(s.size() - 1);
  if (window > last * (1.0 + 1e-12)) throw ConfigError("fit window exceeds the trace length");
  const auto n = static_cast<std::size_t>(std::floor(window / s.dt() + 1e-9)) + 1;
  if (n < 3) throw ConfigError("fit window shorter than 3 samples");
  return std::min(n, s.size());
}

}  // namespace detail

struct ResponseEstimate {
  double response = 0.0;          // per unit of I
  double separation = 0.0;        // d(<II_+> - <II_->)/dt = 2 response
  double separation_error = 0.0;  // OLS error, iid-residual assumption
};

/// LS slope of <II_+(t)> - <II_-(t)> over [0, fit_window].
inline ResponseEstimate estimate_response(const IntegratedSignalStats& plus,
                                          const IntegratedSignalStats& minus,
                                          double fit_window = 0.6) {
  if (plus.size() != minus.size() || plus.dt() != minus.dt())
    throw ConfigError("plus and minus runs must share a grid");
  if (plus.count() == 0 || minus.count() == 0) throw ConfigError("calibration ensemble is empty");
  const std::size_t n = detail::window_samples(plus, fit_window);
  std::vector<double> t(n), d(n);
  for (std::size_t k = 0; k < n; ++k) {
    t[k] = plus.time(k);
    d[k] = plus.mean(k) - minus.mean(k);
  }
  const auto f = fit_line(t, d);
  return {0.5 * f.slope, f.slope, f.slope_std_error};
}

inline ResponseEstimate estimate_response(const CalibrationRun& run) {
  const auto p = integrate_traces(run);
  return estimate_response(p.plus, p.minus, run.fit_window);
}

/// tau_m = [2 / separation]^2 * d sigma^2/dt.
inline double tau_m_from_variance_slope(double variance_slope, double separation) {
  if (!(separation > 0.0)) throw ConfigError("response must be positive");
  return (2.0 / separation) * (2.0 / separation) * variance_slope;
}

struct TauEstimate {
  double variance_slope = 0.0;  // raw units^2 / us
  double tau_m = 0.0;
  double tau_min = 0.0;
  double eta = 0.0;
  bool variances_consistent = true;  // sigma^2 agreement across the pooled runs
};

/// Pools sigma^2(t) of all runs (raw variance growth does not depend on phi_a
/// or z_in), fits its slope over [0, fit_window] and converts with the given
/// per-unit response: tau_m = slope / response^2, tau_min = tau_m cos^2 phi_a,
/// eta = 1 / (2 Gamma tau_min).
inline TauEstimate estimate_tau_m(std::span<const IntegratedSignalStats* const> runs, double response,
                                  double gamma, double phi_a, double fit_window) {
  if (runs.empty()) throw ConfigError("no runs to pool");
  if (!(response > 0.0)) throw ConfigError("response must be positive");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive to derive eta");
  const auto& first = *runs.front();
  const std::size_t n = detail::window_samples(first, fit_window);
  std::vector<double> t(n), v(n, 0.0);
  double total = 0.0;
  for (const auto* r : runs) {
    if (r->size() != first.size() || r->dt() != first.dt()) throw ConfigError("pooled runs must share a grid");
    if (r->count() < 2) throw ConfigError("variance needs at least 2 traces per run");
    total += static_cast<double>(r->count());
  }
  for (std::size_t k = 0; k < n; ++k) {
    t[k] = first.time(k);
    for (const auto* r : runs) v[k] += r->variance(k) * static_cast<double>(r->count()) / total;
  }
  const auto f = fit_line(t, v);
  if (!(f.slope > 0.0)) throw ConfigError("variance not growing");

  TauEstimate e;
  e.variance_slope = f.slope;
  e.tau_m = f.slope / (response * response);
  e.tau_min = e.tau_m * std::cos(phi_a) * std::cos(phi_a);
  e.eta = 1.0 / (2.0 * gamma * e.tau_min);

  // Endpoint variances agree within 4 sigma of the sample-variance scatter.
  const std::size_t last = n - 1;
  for (const auto* r : runs) {
    const double sd = v[last] * std::sqrt(2.0 / (static_cast<double>(r->count()) - 1.0));
    if (std::abs(r->variance(last) - v[last]) > 4.0 * sd) e.variances_consistent = false;
  }
  return e;
}

inline TauEstimate estimate_tau_m(const IntegratedSignalStats& plus, const IntegratedSignalStats& minus,
                                  double response, double gamma, double phi_a, double fit_window) {
  const IntegratedSignalStats* runs[] = {&plus, &minus};
  return estimate_tau_m(runs, response, gamma, phi_a, fit_window);
}

// ---------------------------------------------------------------------------
// Experimental correlator estimator

enum class OffsetMode { per_block, global, fixed };

struct RawCorrelatorOptions {
  std::size_t detector = 0;
  double response = 1.0;  // per unit of I
  double fixed_offset = 0.0;
  OffsetMode offset_mode = OffsetMode::per_block;
  double dt = 0.004;      // input sample spacing
  double dt_out = 0.04;   // after boxcar averaging
  double t_skip = 0.28;
  double t_avg = 0.28;    // T
  double lag_max = 4.0;
};

/// K(tau) = (1/T) sum_{t1} < (I~(t1) - <I~(t1)>)(I~(t1 + tau) - <I~(t1 + tau)>) > / response^2
/// on rebinned data. Samples are divided by the response right after rebinning. Offsets <I~(t)> come from the block itself (per_block),
/// the whole ensemble (global) or a constant. One pass: each block keeps the
/// uncentered sums, centering happens at the end. Blocks are the run_ensemble
/// chunks (or consecutive traces when fed with add_trace + finish_chunk).
class RawCorrelatorEstimator {
 public:
  explicit RawCorrelatorEstimator(const RawCorrelatorOptions& opt) : opt_(opt) {
    if (!(opt.response != 0.0) || !std::isfinite(opt.response))
      throw ConfigError("detector response must be non-zero");
    const double ratio = opt.dt_out / opt.dt;
    factor_ = static_cast<std::size_t>(std::llround(ratio));
    if (factor_ < 1 || std::abs(ratio - static_cast<double>(factor_)) > 1e-9 * ratio)
      throw ConfigError("dt_out must be an integer multiple of dt");
    first_bin_ = static_cast<std::size_t>(std::ceil(opt.t_skip / opt.dt_out - 1e-9));
    t1_bins_ = static_cast<std::size_t>(std::llround(opt.t_avg / opt.dt_out));
    n_lags_ = static_cast<std::size_t>(std::floor(opt.lag_max / opt.dt_out + 1e-9));
    if (t1_bins_ < 1 || n_lags_ < 1) throw ConfigError("empty averaging window or lag grid");
    n_bins_ = first_bin_ + t1_bins_ + n_lags_;
    reset_block();
  }

  std::size_t bins_needed() const noexcept { return n_bins_; }
  std::size_t samples_needed() const noexcept { return n_bins_ * factor_; }
  std::size_t n_lags() const noexcept { return n_lags_; }

  void add_trace(std::span<const double> raw) {
    if (raw.size() < samples_needed())
      throw ConfigError("trace too short for the requested T, t_skip and lag range");
    std::vector<double> x = boxcar(raw.first(samples_needed()), factor_);
    for (double& v : x) v /= opt_.response;
    for (std::size_t b = 0; b < n_bins_; ++b) sx_[b] += x[b];
    for (std::size_t i = 0; i < t1_bins_; ++i) {
      const std::size_t b1 = first_bin_ + i;
      double* row = &sxy_[i * n_lags_];
      for (std::size_t l = 0; l < n_lags_; ++l) row[l] += x[b1] * x[b1 + l + 1];
    }
    ++count_;
  }

  void add(std::uint64_t, const TrajectoryRecord& rec) { add_trace(rec.signal(opt_.detector)); }

  /// Closes the current block.
  void finish_chunk() {
    if (count_ == 0) return;
    blocks_.push_back(Block{std::move(sx_), std::move(sxy_), count_});
    reset_block();
  }

  void merge(RawCorrelatorEstimator&& later) {
    later.finish_chunk();
    for (auto& b : later.blocks_) blocks_.push_back(std::move(b));
  }

  std::size_t block_count() const noexcept { return blocks_.size(); }

  LagCurve result() {
    finish_chunk();
    if (blocks_.empty()) throw ConfigError("correlator estimator received no traces");
    std::vector<double> global_mean(n_bins_, 0.0);
    double n_total = 0.0;
    for (const auto& b : blocks_) {
      if (b.count < 2) throw ConfigError("insufficient traces per block (need at least 2)");
      for (std::size_t k = 0; k < n_bins_; ++k) global_mean[k] += b.sx[k];
      n_total += static_cast<double>(b.count);
    }
    for (double& m : global_mean) m /= n_total;

    const double norm = 1.0 / static_cast<double>(t1_bins_);
    std::vector<std::vector<double>> estimates;
    std::vector<double> weights;
    for (const auto& b : blocks_) {
      const double n = static_cast<double>(b.count);
      std::vector<double> mean(n_bins_);
      double bias = 1.0;
      switch (opt_.offset_mode) {
        case OffsetMode::per_block:
          for (std::size_t k = 0; k < n_bins_; ++k) mean[k] = b.sx[k] / n;
          bias = n / (n - 1.0);
          break;
        case OffsetMode::global:
          mean = global_mean;
          bias = n_total / (n_total - 1.0);
          break;
        case OffsetMode::fixed:
          mean.assign(n_bins_, opt_.fixed_offset / opt_.response);
          break;
      }
      std::vector<double> est(n_lags_, 0.0);
      for (std::size_t i = 0; i < t1_bins_; ++i) {
        const std::size_t b1 = first_bin_ + i;
        for (std::size_t l = 0; l < n_lags_; ++l) {
          const std::size_t b2 = b1 + l + 1;
          const double c = b.sxy[i * n_lags_ + l] / n - mean[b1] * b.sx[b2] / n -
                           mean[b2] * b.sx[b1] / n + mean[b1] * mean[b2];
          est[l] += c;
        }
      }
      for (double& e : est) e *= bias * norm;
      estimates.push_back(std::move(est));
      weights.push_back(n);
    }
    const auto jk = jackknife(estimates, weights);
    LagCurve c;
    for (std::size_t l = 1; l <= n_lags_; ++l) c.tau.push_back(static_cast<double>(l) * opt_.dt_out);
    c.value = jk.mean;
    c.error = jk.error;
    return c;
  }

  /// Fine-grid index ranges behind the estimate: bin b covers samples
  /// [b factor, (b + 1) factor).
  std::size_t bin_factor() const noexcept { return factor_; }
  std::size_t first_bin() const noexcept { return first_bin_; }
  std::size_t t1_bins() const noexcept { return t1_bins_; }

 private:
  struct Block {
    std::vector<double> sx;
    std::vector<double> sxy;
    std::uint64_t count;
  };

  void reset_block() {
    sx_.assign(n_bins_, 0.0);
    sxy_.assign(t1_bins_ * n_lags_, 0.0);
    count_ = 0;
  }

  RawCorrelatorOptions opt_;
  std::size_t factor_ = 1;
  std::size_t first_bin_ = 0;
  std::size_t t1_bins_ = 1;
  std::size_t n_lags_ = 1;
  std::size_t n_bins_ = 1;
  std::vector<double> sx_;
  std::vector<double> sxy_;
  std::uint64_t count_ = 0;
  std::vector<Block> blocks_;
};

/// Feeds raw detector units to an inner reducer by mapping normalized records
/// through synthesize_raw.
template <class Inner>
class RawSynthesizer {
 public:
  RawSynthesizer(Inner inner, std::vector<DetectorModel> detectors)
      : inner_(std::move(inner)), detectors_(std::move(detectors)) {}

  void add(std::uint64_t i, const TrajectoryRecord& rec) {
    if (rec.kind == SignalKind::raw)
      inner_.add(i, rec);
    else
      inner_.add(i, synthesize_raw(rec, detectors_));
  }
  void finish_chunk() {
    if constexpr (requires { inner_.finish_chunk(); }) inner_.finish_chunk();
  }
  void merge(RawSynthesizer&& later) { inner_.merge(std::move(later.inner_)); }

  Inner& inner() noexcept { return inner_; }

 private:
  Inner inner_;
  std::vector<DetectorModel> detectors_;
};

/// K_+, K_- and their difference on a common lag grid.
struct CorrelatorTable {
  LagCurve plus;
  LagCurve minus;

  std::vector<double> delta() const {
    std::vector<double> d(plus.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = plus.value[i] - minus.value[i];
    return d;
  }

  std::vector<double> delta_error() const {
    std::vector<double> d(plus.size(), 0.0);
    if (plus.error.empty() || minus.error.empty()) return d;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::hypot(plus.error[i], minus.error[i]);
    return d;
  }

  /// CSV columns tau_us, K_plus, err_plus, K_minus, err_minus, dK, err_dK;
  /// errors are written as 0 for exact curves.
  void write_csv(std::ostream& os) const {
    if (plus.size() != minus.size()) throw ConfigError("K_plus and K_minus lag grids differ");
    const auto d = delta();
    const auto de = delta_error();
    os << "tau_us,K_plus,err_plus,K_minus,err_minus,dK,err_dK\n";
    auto err = [](const LagCurve& c, std::size_t i) { return c.error.empty() ? 0.0 : c.error[i]; };
    for (std::size_t i = 0; i < plus.size(); ++i) {
      std::ostringstream line;
      line << std::setprecision(17) << plus.tau[i] << ',' << plus.value[i] << ',' << err(plus, i)
           << ',' << minus.value[i] << ',' << err(minus, i) << ',' << d[i] << ',' << de[i] << '\n';
      os << line.str();
    }
  }
};

/// Paired estimate from two archives' worth of raw traces (the subscript is
/// the sign of x0 * Omega_R).
inline CorrelatorTable estimate_correlator_pair(RawCorrelatorEstimator plus, RawCorrelatorEstimator minus) {
  CorrelatorTable t{plus.result(), minus.result()};
  return t;
}

}  // namespace cqm
