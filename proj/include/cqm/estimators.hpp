#pragma once

// Monte Carlo correlator estimators working directly on simulated trajectories.
//
// They use the "state-conditioned" form: the last signal factor I_l(t_N) is
// replaced by its conditional mean n_l.r(t_N). Because the white noise at t_N
// is independent of everything recorded before, both forms have the same
// expectation, but the conditioned one has far less variance. Earlier factors
// are real signal samples, so signal-backaction correlation is fully exercised.
//
// All estimators are ensemble reducers: one jackknife block per run_ensemble
// chunk.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cqm/statistics.hpp"
#include "cqm/trajectory.hpp"

namespace cqm {

/// Time-averaged lag correlator
///   K(tau_m) = < (1/W) sum_{k in window} I_a(t_k) n_b.r(t_k + tau_m) >,
/// tau_m = m * lag_stride * dt for m = 1 .. n_lags.
class ConditionedLagCorrelator {
 public:
  struct Options {
    std::size_t signal_detector = 0;
    Vec3 state_axis = Vec3::UnitZ();
    std::size_t window_begin = 0;   // first t1 index
    std::size_t window_length = 1;  // number of t1 samples
    std::size_t lag_stride = 1;     // grid steps per lag point
    std::size_t n_lags = 1;
  };

  explicit ConditionedLagCorrelator(const Options& opt) : opt_(opt), sum_(opt.n_lags, 0.0) {
    if (opt.window_length < 1 || opt.lag_stride < 1 || opt.n_lags < 1)
      throw ConfigError("lag correlator needs a non-empty window and lag grid");
  }

  std::size_t last_index() const noexcept {
    return opt_.window_begin + opt_.window_length - 1 + opt_.n_lags * opt_.lag_stride;
  }

  void add(std::uint64_t, const TrajectoryRecord& rec) {
    if (last_index() >= rec.grid.n_steps())
      throw ConfigError("lag correlator window exceeds the trajectory length");
    const auto sig = rec.signal(opt_.signal_detector);
    const double inv_w = 1.0 / static_cast<double>(opt_.window_length);
    for (std::size_t j = 0; j < opt_.window_length; ++j) {
      const std::size_t k = opt_.window_begin + j;
      const double a = sig[k] * inv_w;
      for (std::size_t m = 0; m < opt_.n_lags; ++m)
        sum_[m] += a * opt_.state_axis.dot(rec.states[k + (m + 1) * opt_.lag_stride]);
    }
    ++count_;
  }

  void finish_chunk() {
    if (count_ == 0) return;
    std::vector<double> block(sum_.size());
    for (std::size_t m = 0; m < sum_.size(); ++m) block[m] = sum_[m] / static_cast<double>(count_);
    blocks_.push_back(std::move(block));
    weights_.push_back(static_cast<double>(count_));
    std::fill(sum_.begin(), sum_.end(), 0.0);
    count_ = 0;
  }

  void merge(ConditionedLagCorrelator&& later) {
    later.finish_chunk();
    for (auto& b : later.blocks_) blocks_.push_back(std::move(b));
    weights_.insert(weights_.end(), later.weights_.begin(), later.weights_.end());
  }

  std::size_t block_count() const noexcept { return blocks_.size(); }

  /// Lag grid in time units and jackknife values.
  LagCurve result(double dt) {
    finish_chunk();
    const auto jk = jackknife(blocks_, weights_);
    LagCurve c;
    for (std::size_t m = 0; m < opt_.n_lags; ++m)
      c.tau.push_back(static_cast<double>((m + 1) * opt_.lag_stride) * dt);
    c.value = jk.mean;
    c.error = jk.error;
    return c;
  }

  const Options& options() const noexcept { return opt_; }

 private:
  Options opt_;
  std::vector<double> sum_;
  std::uint64_t count_ = 0;
  std::vector<std::vector<double>> blocks_;
  std::vector<double> weights_;
};

/// Window-averaged multi-time products
///   < prod_j Ibar_{l_j}(window_j) * n_last.r(t_last) >
/// where Ibar is the mean signal over a window of grid samples. Windows must
/// be ordered and end before the final state index.
class ConditionedProductEstimator {
 public:
  struct Window {
    std::size_t detector = 0;
    std::size_t begin = 0;
    std::size_t length = 1;
  };
  struct Product {
    std::vector<Window> signals;
    Vec3 state_axis = Vec3::UnitZ();
    std::size_t state_index = 0;
  };

  explicit ConditionedProductEstimator(std::vector<Product> products)
      : products_(std::move(products)), sum_(products_.size(), 0.0) {
    for (const auto& p : products_) {
      std::size_t next = 0;
      for (const auto& w : p.signals) {
        if (w.length < 1) throw ConfigError("product window must be non-empty");
        if (w.begin < next) throw ConfigError("product windows overlap or are not time ordered");
        next = w.begin + w.length;
      }
      if (p.state_index < next) throw ConfigError("final state index precedes a signal window");
    }
  }

  void add(std::uint64_t, const TrajectoryRecord& rec) {
    for (std::size_t i = 0; i < products_.size(); ++i) {
      const auto& p = products_[i];
      if (p.state_index >= rec.grid.n_steps())
        throw ConfigError("product estimator index exceeds the trajectory length");
      double v = p.state_axis.dot(rec.states[p.state_index]);
      for (const auto& w : p.signals) {
        const auto sig = rec.signal(w.detector);
        double s = 0.0;
        for (std::size_t k = w.begin; k < w.begin + w.length; ++k) s += sig[k];
        v *= s / static_cast<double>(w.length);
      }
      sum_[i] += v;
    }
    ++count_;
  }

  void finish_chunk() {
    if (count_ == 0) return;
    std::vector<double> block(sum_.size());
    for (std::size_t i = 0; i < sum_.size(); ++i) block[i] = sum_[i] / static_cast<double>(count_);
    blocks_.push_back(std::move(block));
    weights_.push_back(static_cast<double>(count_));
    std::fill(sum_.begin(), sum_.end(), 0.0);
    count_ = 0;
  }

  void merge(ConditionedProductEstimator&& later) {
    later.finish_chunk();
    for (auto& b : later.blocks_) blocks_.push_back(std::move(b));
    weights_.insert(weights_.end(), later.weights_.begin(), later.weights_.end());
  }

  JackknifeEstimate result() {
    finish_chunk();
    return jackknife(blocks_, weights_);
  }

  const std::vector<Product>& products() const noexcept { return products_; }

 private:
  std::vector<Product> products_;
  std::vector<double> sum_;
  std::uint64_t count_ = 0;
  std::vector<std::vector<double>> blocks_;
  std::vector<double> weights_;
};

}  // namespace cqm
