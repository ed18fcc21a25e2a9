#pragma once

// Ensemble runs. Trajectories are grouped into fixed-size chunks (independent
// of the worker count); each chunk is reduced by its own copy of a reducer and
// chunks are merged strictly in chunk order, so every result is bit-identical
// for any number of threads.
//
// Reducer requirements:
//   R(const R&)                                  copy of the prototype per chunk
//   void add(std::uint64_t traj, const TrajectoryRecord&)
//   void merge(R&& later_chunk)
//   void finish_chunk()                          optional, runs on the worker

#include <algorithm>
#include <atomic>
#include <concepts>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "cqm/trajectory.hpp"

namespace cqm {

template <class R>
concept EnsembleReducer = std::copy_constructible<R> &&
    requires(R r, std::uint64_t i, const TrajectoryRecord& rec) {
      r.add(i, rec);
      r.merge(std::move(r));
    };

struct EnsembleRunOptions {
  std::uint64_t n_traj = 1;
  std::uint64_t seed = 0;
  std::size_t chunk_size = 1000;
  unsigned threads = 1;  // 0: hardware concurrency
};

template <EnsembleReducer R>
R run_ensemble(const TrajectorySimulator& sim, const EnsembleRunOptions& opt, const R& prototype) {
  if (opt.n_traj < 1) throw ConfigError("n_traj must be at least 1");
  if (opt.chunk_size < 1) throw ConfigError("chunk size must be at least 1");
  const std::uint64_t n_chunks = (opt.n_traj + opt.chunk_size - 1) / opt.chunk_size;
  unsigned threads = opt.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opt.threads;
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, n_chunks));

  R result = prototype;
  std::atomic<std::uint64_t> next_chunk{0};
  std::atomic<bool> failed{false};
  std::mutex mutex;
  std::map<std::uint64_t, R> pending;
  std::uint64_t next_merge = 0;
  std::exception_ptr error;
  std::uint64_t error_chunk = n_chunks;

  auto worker = [&] {
    TrajectoryRecord rec;
    for (;;) {
      if (failed.load()) return;
      const std::uint64_t c = next_chunk.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        R local = prototype;
        const std::uint64_t begin = c * opt.chunk_size;
        const std::uint64_t end = std::min<std::uint64_t>(opt.n_traj, begin + opt.chunk_size);
        for (std::uint64_t i = begin; i < end; ++i) {
          sim.simulate(opt.seed, i, rec);
          local.add(i, rec);
        }
        if constexpr (requires { local.finish_chunk(); }) local.finish_chunk();

        std::lock_guard lock(mutex);
        pending.emplace(c, std::move(local));
        for (auto it = pending.find(next_merge); it != pending.end(); it = pending.find(next_merge)) {
          result.merge(std::move(it->second));
          pending.erase(it);
          ++next_merge;
        }
      } catch (...) {
        std::lock_guard lock(mutex);
        if (c < error_chunk) {
          error_chunk = c;
          error = std::current_exception();
        }
        failed.store(true);
      }
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  return result;
}

// ---------------------------------------------------------------------------
// Generic reducers

/// Keeps every record (small ensembles only).
struct RecordCollector {
  std::vector<TrajectoryRecord> records;

  void add(std::uint64_t, const TrajectoryRecord& rec) { records.push_back(rec); }
  void merge(RecordCollector&& later) {
    for (auto& r : later.records) records.push_back(std::move(r));
  }
};

/// Per-grid-point sums of states and signals for means and standard errors.
class MeanAccumulator {
 public:
  MeanAccumulator(std::size_t n_steps, std::size_t n_detectors)
      : n_steps_(n_steps), n_detectors_(n_detectors), state_sum_(n_steps, Vec3::Zero()),
        state_sq_(n_steps, Vec3::Zero()), signal_sum_(n_steps * n_detectors, 0.0),
        signal_sq_(n_steps * n_detectors, 0.0) {}

  void add(std::uint64_t, const TrajectoryRecord& rec) {
    for (std::size_t k = 0; k < n_steps_; ++k) {
      state_sum_[k] += rec.states[k];
      state_sq_[k] += rec.states[k].cwiseProduct(rec.states[k]);
    }
    for (std::size_t i = 0; i < signal_sum_.size(); ++i) {
      signal_sum_[i] += rec.signals[i];
      signal_sq_[i] += rec.signals[i] * rec.signals[i];
    }
    ++count_;
  }

  void merge(MeanAccumulator&& later) {
    for (std::size_t k = 0; k < n_steps_; ++k) {
      state_sum_[k] += later.state_sum_[k];
      state_sq_[k] += later.state_sq_[k];
    }
    for (std::size_t i = 0; i < signal_sum_.size(); ++i) {
      signal_sum_[i] += later.signal_sum_[i];
      signal_sq_[i] += later.signal_sq_[i];
    }
    count_ += later.count_;
  }

  std::uint64_t count() const noexcept { return count_; }
  std::size_t n_steps() const noexcept { return n_steps_; }
  std::size_t n_detectors() const noexcept { return n_detectors_; }

  Vec3 mean_state(std::size_t k) const { return state_sum_[k] / static_cast<double>(count_); }

  Vec3 state_std_error(std::size_t k) const {
    const double n = static_cast<double>(count_);
    const Vec3 m = mean_state(k);
    const Vec3 var = (state_sq_[k] / n - m.cwiseProduct(m)) * (n / (n - 1.0));
    return (var.cwiseMax(0.0) / n).cwiseSqrt();
  }

  double mean_signal(std::size_t detector, std::size_t k) const {
    return signal_sum_[detector * n_steps_ + k] / static_cast<double>(count_);
  }

  double signal_std_error(std::size_t detector, std::size_t k) const {
    const double n = static_cast<double>(count_);
    const double m = mean_signal(detector, k);
    const double var = (signal_sq_[detector * n_steps_ + k] / n - m * m) * (n / (n - 1.0));
    return std::sqrt(std::max(var, 0.0) / n);
  }

 private:
  std::size_t n_steps_;
  std::size_t n_detectors_;
  std::vector<Vec3> state_sum_;
  std::vector<Vec3> state_sq_;
  std::vector<double> signal_sum_;
  std::vector<double> signal_sq_;
  std::uint64_t count_ = 0;
};

}  // namespace cqm
