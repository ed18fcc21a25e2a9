#include <gtest/gtest.h>

#include "cqm/estimators.hpp"
#include "cqm/gcr.hpp"
#include "cqm/monte_carlo.hpp"

using namespace cqm;

namespace {

SimulationSetup rabi_setup(double k, std::size_t n_steps = 400) {
  SimulationSetup s;
  s.detectors = {DetectorModel::from_quadrature(Vec3::UnitZ(), 2.04, std::atan(k), 0.44117647058823528)};
  s.schedule = EnsembleSchedule(rabi_dephasing_generator(1.0 / 1.8, two_pi));
  s.grid = TimeGrid(0.0, 0.004, n_steps);
  s.initial_state = PhysicalState(1, 0, 0);
  return s;
}

struct Throwing {
  std::uint64_t at = 0;
  void add(std::uint64_t i, const TrajectoryRecord&) {
    if (i >= at) throw std::runtime_error("boom " + std::to_string(i));
  }
  void merge(Throwing&&) {}
};

}  // namespace

TEST(RunEnsemble, SingleTrajectory) {
  const TrajectorySimulator sim(rabi_setup(0.0, 50));
  const auto out = run_ensemble(sim, {1, 4, 1000, 1}, RecordCollector{});
  ASSERT_EQ(out.records.size(), 1u);
  EXPECT_EQ(out.records[0].signals, sim.simulate(4, 0).signals);
}

TEST(RunEnsemble, ThreadCountDoesNotChangeResults) {
  const TrajectorySimulator sim(rabi_setup(2.0, 200));
  ConditionedLagCorrelator::Options o;
  o.window_begin = 10;
  o.window_length = 20;
  o.lag_stride = 5;
  o.n_lags = 30;
  const ConditionedLagCorrelator proto(o);
  auto a = run_ensemble(sim, {900, 8, 64, 1}, proto).result(0.004);
  auto b = run_ensemble(sim, {900, 8, 64, 4}, proto).result(0.004);
  auto c = run_ensemble(sim, {900, 8, 64, 3}, proto).result(0.004);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.error, b.error);
  EXPECT_EQ(a.value, c.value);
  const auto ma = run_ensemble(sim, {300, 8, 64, 1}, MeanAccumulator(200, 1));
  const auto mb = run_ensemble(sim, {300, 8, 64, 5}, MeanAccumulator(200, 1));
  for (std::size_t k = 0; k < 200; ++k) EXPECT_EQ(ma.mean_state(k), mb.mean_state(k));
}

TEST(RunEnsemble, RecordsArriveInTrajectoryOrder) {
  const TrajectorySimulator sim(rabi_setup(0.0, 20));
  const auto out = run_ensemble(sim, {37, 1, 5, 4}, RecordCollector{});
  ASSERT_EQ(out.records.size(), 37u);
  for (std::uint64_t i = 0; i < 37; ++i) EXPECT_EQ(out.records[i].signals, sim.simulate(1, i).signals);
}

TEST(RunEnsemble, RethrowsEarliestFailure) {
  const TrajectorySimulator sim(rabi_setup(0.0, 10));
  try {
    run_ensemble(sim, {100, 1, 10, 1}, Throwing{42});
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_EQ(std::string(e.what()), "boom 42");
  }
  EXPECT_THROW(run_ensemble(sim, {0, 1, 10, 1}, RecordCollector{}), ConfigError);
}

TEST(RunEnsemble, EnsembleMeanFollowsEnsembleEquation) {
  const auto setup = rabi_setup(std::tan(radians(70.0)), 600);
  const TrajectorySimulator sim(setup);
  const auto acc = run_ensemble(sim, {4000, 21, 500, 1}, MeanAccumulator(600, 1));
  int outside = 0, total = 0;
  for (std::size_t k = 0; k < 600; k += 25) {
    const Vec3 ref = evolve(Vec3(1, 0, 0), 0.0, setup.grid.time(k), setup.schedule);
    const Vec3 m = acc.mean_state(k);
    const Vec3 e = acc.state_std_error(k);
    for (int i = 0; i < 3; ++i) {
      if (e[i] == 0.0) {
        EXPECT_NEAR(m[i], ref[i], 1e-12);
        continue;
      }
      ++total;
      if (std::abs(m[i] - ref[i]) > 4.0 * e[i]) ++outside;
    }
    EXPECT_NEAR(acc.mean_signal(0, k), ref.z(), 5.0 * acc.signal_std_error(0, k));
  }
  EXPECT_LE(outside, 1) << "of " << total;
}

TEST(ConditionedLagCorrelator, AgreesWithCollapseRecipe) {
  const double k = std::tan(radians(70.0));
  const auto setup = rabi_setup(k, 400);
  const TrajectorySimulator sim(setup);
  ConditionedLagCorrelator::Options o;
  o.window_begin = 70;
  o.window_length = 70;
  o.lag_stride = 10;
  o.n_lags = 25;
  auto curve = run_ensemble(sim, {20000, 99, 1000, 1}, ConditionedLagCorrelator(o)).result(0.004);
  const auto ref = grid_lag_curve(setup.grid, setup.detectors, 0, 0, setup.schedule, PhysicalState(1, 0, 0), 70, 70, 10, 25);
  ASSERT_EQ(ref.size(), curve.size());
  int outside = 0;
  for (std::size_t m = 0; m < curve.size(); ++m) {
    EXPECT_NEAR(curve.tau[m], ref.tau[m], 1e-15);
    if (std::abs(curve.value[m] - ref.value[m]) > 3.0 * curve.error[m]) ++outside;
  }
  EXPECT_LE(outside, 2);
}

TEST(ConditionedLagCorrelator, WindowBeyondRecordThrows) {
  const TrajectorySimulator sim(rabi_setup(0.0, 50));
  ConditionedLagCorrelator::Options o;
  o.window_begin = 40;
  o.window_length = 5;
  o.lag_stride = 5;
  o.n_lags = 3;
  EXPECT_THROW(run_ensemble(sim, {2, 1, 10, 1}, ConditionedLagCorrelator(o)), ConfigError);
}

TEST(ConditionedProductEstimator, OrderingChecks) {
  using P = ConditionedProductEstimator;
  EXPECT_THROW(P({P::Product{{{0, 10, 5}, {0, 12, 5}}, Vec3::UnitZ(), 30}}), ConfigError);
  EXPECT_THROW(P({P::Product{{{0, 10, 5}}, Vec3::UnitZ(), 12}}), ConfigError);
  EXPECT_NO_THROW(P({P::Product{{{0, 10, 5}, {0, 15, 5}}, Vec3::UnitZ(), 20}}));
}

TEST(ConditionedProductEstimator, ThreeTimeAgreesWithCollapseRecipe) {
  const auto setup = rabi_setup(std::tan(radians(70.0)), 200);
  const TrajectorySimulator sim(setup);
  using P = ConditionedProductEstimator;
  std::vector<P::Product> products;
  for (std::size_t j : {60u, 100u, 140u}) {
    products.push_back({{{0, 10, 10}, {0, 30, 10}}, Vec3::UnitZ(), j});
  }
  auto est = run_ensemble(sim, {20000, 5, 1000, 1}, P(products)).result();
  for (std::size_t i = 0; i < products.size(); ++i) {
    const std::size_t j = products[i].state_index;
    const std::vector<GridWindow> windows{{0, 10, 10}, {0, 30, 10}, {0, j, 1}};
    const double ref = grid_window_average(setup.grid, setup.detectors, setup.schedule, PhysicalState(1, 0, 0), windows);
    EXPECT_NEAR(est.mean[i], ref, 4.0 * est.error[i]) << j;
  }
}
