#include <gtest/gtest.h>

#include <random>

#include "cqm/analytic.hpp"
#include "cqm/gcr.hpp"

using namespace cqm;

namespace {

Vec3 random_unit(std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  Vec3 v(n(gen), n(gen), n(gen));
  return v / v.norm();
}

struct RandomCase {
  std::vector<DetectorModel> detectors;
  EnsembleSchedule schedule;
};

RandomCase random_case(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomCase c;
  for (int l = 0; l < 3; ++l)
    c.detectors.emplace_back(random_unit(gen), 0.5 + 2.0 * u(gen), 3.0 * (u(gen) - 0.5), 0.2 + 0.8 * u(gen));
  auto a = sum_generators(rabi_dephasing_generator(u(gen), 10.0 * (u(gen) - 0.5)),
                          relaxation_generator(0.5 * u(gen) + 0.01, 2.0 * u(gen) - 1.0));
  auto b = sum_generators(rotation_generator(random_unit(gen), 5.0 * u(gen)),
                          measurement_dephasing_generator(c.detectors));
  a.t_begin = 0.0;
  a.t_end = 0.6;
  b.t_begin = 0.6;
  b.t_end = 10.0;
  c.schedule = EnsembleSchedule({a, b});
  return c;
}

CorrelatorSpec random_spec(std::mt19937_64& gen, std::size_t n, std::size_t n_det) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CorrelatorSpec s;
  Vec3 r = random_unit(gen) * u(gen);
  s.initial_state = PhysicalState(r);
  s.initial_time = 0.0;
  double t = 0.05 * u(gen);
  for (std::size_t j = 0; j < n; ++j) {
    t += 0.01 + 0.2 * u(gen);
    s.times.push_back(t);
    s.detector_indices.push_back(static_cast<std::size_t>(u(gen) * static_cast<double>(n_det)) % n_det);
  }
  return s;
}

}  // namespace

TEST(CollapsedState, LeavesTheBall) {
  const double k = std::tan(radians(70.0));
  const Vec3 c = collapsed_state(Vec3(1, 0, 0), Vec3::UnitZ(), k, +1);
  EXPECT_NEAR(c.norm(), 2.9238044001630867, 1e-12);
  EXPECT_EQ(collapsed_state(Vec3(1, 0, 0), Vec3::UnitZ(), k, -1), Vec3(-c));
  EXPECT_DOUBLE_EQ(outcome_probability(Vec3(0, 0, 2.75), Vec3::UnitZ(), +1), 1.875);
  EXPECT_DOUBLE_EQ(outcome_probability(Vec3(0, 0, 2.75), Vec3::UnitZ(), -1), -0.875);
}

TEST(Correlator, RecursionMatchesEnumeration) {
  std::mt19937_64 gen(2718);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_case(gen);
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 9);
    const auto spec = random_spec(gen, n, c.detectors.size());
    const double rec = correlator_recursive(spec, c.detectors, c.schedule);
    const double en = correlator_enumerate(spec, c.detectors, c.schedule);
    EXPECT_NEAR(rec, en, 1e-10 * std::max(1.0, std::abs(en))) << "trial " << trial << " N=" << n;
  }
}

TEST(Correlator, SingleTimeIsEnsembleMean) {
  std::mt19937_64 gen(1);
  const auto c = random_case(gen);
  CorrelatorSpec s{{0.9}, {1}, PhysicalState(0.1, 0.2, -0.3), 0.1};
  const double expected = c.detectors[1].axis().dot(c.schedule.evolve(Vec3(0.1, 0.2, -0.3), 0.1, 0.9));
  EXPECT_NEAR(correlator_recursive(s, c.detectors, c.schedule), expected, 1e-14);
}

TEST(Correlator, AffineInInitialState) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = random_case(gen);
    auto s = random_spec(gen, 4, c.detectors.size());
    const Vec3 r = s.initial_state.vector();
    const double k_plus = correlator_recursive(s, c.detectors, c.schedule);
    s.initial_state = PhysicalState(Vec3(-r));
    const double k_minus = correlator_recursive(s, c.detectors, c.schedule);
    s.initial_state = PhysicalState();
    const double k_zero = correlator_recursive(s, c.detectors, c.schedule);
    EXPECT_NEAR(k_plus + k_minus, 2.0 * k_zero, 1e-12);
  }
}

TEST(Correlator, FlippedInitialStateIsolatesPhaseTerm) {
  const double k = std::tan(radians(70.0));
  const std::vector<DetectorModel> det{DetectorModel::from_quadrature(Vec3::UnitZ(), 2.04, radians(70.0), 0.44)};
  const EnsembleSchedule sched(rabi_dephasing_generator(1.0 / 1.8, two_pi));
  RabiCaseParams p{1.0 / 1.8, two_pi, radians(70.0), 1.0, 0.0, 1.0};
  std::vector<double> taus;
  for (int i = 0; i <= 100; ++i) taus.push_back(0.03 * i);
  const auto plus = two_time_sweep(det, 0, 0, sched, PhysicalState(1, 0, 0), 0.0, 0.3, taus);
  const auto minus = two_time_sweep(det, 0, 0, sched, PhysicalState(-1, 0, 0), 0.0, 0.3, taus);
  for (std::size_t i = 0; i < taus.size(); ++i) {
    EXPECT_NEAR(0.5 * (plus[i] + minus[i]), k_qrf_baseline(p, taus[i]), 1e-12);
    EXPECT_NEAR(plus[i] - minus[i],
                2.0 * std::exp(-p.gamma * 0.3) * k * phase_term_shape(p, taus[i]), 1e-12);
  }
}

TEST(Correlator, EqualTimeLimit) {
  std::mt19937_64 gen(77);
  const auto c = random_case(gen);
  const std::vector<double> taus{0.0};
  for (std::size_t a = 0; a < 3; ++a) {
    const auto same = two_time_sweep(c.detectors, a, a, c.schedule, PhysicalState(0.3, 0.1, 0.2), 0.0, 0.4, taus);
    EXPECT_NEAR(same[0], 1.0, 1e-14);
  }
  const Vec3 r1 = c.schedule.evolve(Vec3(0.3, 0.1, 0.2), 0.0, 0.4);
  const auto& da = c.detectors[0];
  const auto& db = c.detectors[1];
  const double expected = db.axis().dot(da.axis() + da.k_phase() * da.axis().cross(r1));
  const auto cross = two_time_sweep(c.detectors, 0, 1, c.schedule, PhysicalState(0.3, 0.1, 0.2), 0.0, 0.4, taus);
  EXPECT_NEAR(cross[0], expected, 1e-14);
}

TEST(Correlator, NoClampingOfIntermediateStates) {
  // Two z detectors with large phase strength: intermediate collapsed states
  // reach |r| ~ 3 and weights leave [0, 1]; enumeration still agrees.
  const std::vector<DetectorModel> det{DetectorModel(Vec3::UnitZ(), 1.0, 2.75, 1.0),
                                       DetectorModel(Vec3::UnitY(), 1.0, -2.0, 1.0)};
  const EnsembleSchedule sched(rotation_generator(Vec3::UnitX(), 1.0));
  CorrelatorSpec s{{0.1, 0.2, 0.3, 0.45}, {0, 1, 0, 1}, PhysicalState(1, 0, 0), 0.0};
  EXPECT_NEAR(correlator_recursive(s, det, sched), correlator_enumerate(s, det, sched), 1e-12);
}

TEST(Correlator, SpecValidation) {
  const std::vector<DetectorModel> det{DetectorModel(Vec3::UnitZ(), 1.0, 0.0, 1.0)};
  const EnsembleSchedule sched(rabi_dephasing_generator(0.1, 1.0));
  CorrelatorSpec s{{0.3, 0.2}, {0, 0}, PhysicalState(1, 0, 0), 0.0};
  try {
    correlator_recursive(s, det, sched);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("times not strictly ordered"), std::string::npos);
  }
  s.times = {0.2, 0.3};
  s.detector_indices = {0, 1};
  EXPECT_THROW(correlator_recursive(s, det, sched), ConfigError);
  s.detector_indices = {0};
  EXPECT_THROW(correlator_recursive(s, det, sched), ConfigError);
  s.detector_indices = {0, 0};
  s.initial_time = 0.25;
  EXPECT_THROW(correlator_recursive(s, det, sched), ConfigError);

  CorrelatorSpec big;
  big.initial_state = PhysicalState(1, 0, 0);
  for (int j = 1; j <= 21; ++j) {
    big.times.push_back(0.01 * j);
    big.detector_indices.push_back(0);
  }
  EXPECT_THROW(correlator_enumerate(big, det, sched), ConfigError);
  EXPECT_NO_THROW(correlator_recursive(big, det, sched));
}

TEST(Correlator, EnumerationAtTwentyTimes) {
  const std::vector<DetectorModel> det{DetectorModel(Vec3::UnitZ(), 1.0, 0.4, 1.0)};
  const EnsembleSchedule sched(rabi_dephasing_generator(0.3, two_pi));
  CorrelatorSpec s;
  s.initial_state = PhysicalState(1, 0, 0);
  for (int j = 1; j <= 20; ++j) {
    s.times.push_back(0.05 * j);
    s.detector_indices.push_back(0);
  }
  const double rec = correlator_recursive(s, det, sched);
  EXPECT_NEAR(correlator_enumerate(s, det, sched), rec, 1e-10 * std::max(1.0, std::abs(rec)));
}

TEST(CrossCorrelatorDemo, GridAndRegressionValue) {
  const auto r = cross_correlator_zx_demo();
  ASSERT_EQ(r.values.size(), 100u);
  EXPECT_EQ(r.times.front(), (std::vector<double>{0.02, 0.04}));
  EXPECT_NEAR(r.values.front(), 1.7916682705930564, 1e-12);
  // Gamma_m = 5/2 (z) and 1/2 (x): r_y decays at 3, r_x at 5/2, so
  // K_zx = K_z e^{-3 t1} e^{-5 tau / 2}.
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    const double t1 = r.times[i][0], tau = r.times[i][1] - t1;
    EXPECT_NEAR(r.values[i], 2.0 * std::exp(-3.0 * t1) * std::exp(-2.5 * tau), 1e-12);
  }
  for (double v : cross_correlator_zx_demo(0.0).values) EXPECT_EQ(v, 0.0);
}

TEST(LagCurves, AveragedMatchesClosedForm) {
  const std::vector<DetectorModel> det{DetectorModel::from_quadrature(Vec3::UnitZ(), 2.04, radians(70.0), 0.44)};
  const EnsembleSchedule sched(rabi_dephasing_generator(1.0 / 1.8, two_pi));
  std::vector<double> taus;
  for (int i = 1; i <= 100; ++i) taus.push_back(0.04 * i);
  for (double x0 : {1.0, -1.0}) {
    const RabiCaseParams p{1.0 / 1.8, two_pi, radians(70.0), x0, 0.28, 0.28};
    const auto curve = averaged_lag_curve(det, 0, 0, sched, PhysicalState(x0, 0, 0), 0.0, 0.28, 0.28, taus);
    for (std::size_t i = 0; i < taus.size(); ++i)
      EXPECT_NEAR(curve.value[i], k_analytic_averaged(p, taus[i]), 1e-9);
    for (double t1 : {0.0, 0.1, 0.5}) {
      const auto pt = two_time_sweep(det, 0, 0, sched, PhysicalState(x0, 0, 0), 0.0, t1, taus);
      for (std::size_t i = 0; i < taus.size(); i += 7)
        EXPECT_NEAR(pt[i], k_analytic_pointwise(p, t1, taus[i]), 1e-12);
    }
  }
}

TEST(LagCurves, GridCurveIsWindowMean) {
  const std::vector<DetectorModel> det{DetectorModel(Vec3::UnitZ(), 2.0, 1.0, 1.0)};
  const EnsembleSchedule sched(rabi_dephasing_generator(0.5, two_pi));
  const TimeGrid grid(0.0, 0.01, 200);
  const auto c = grid_lag_curve(grid, det, 0, 0, sched, PhysicalState(1, 0, 0), 10, 5, 3, 4);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_NEAR(c.tau[2], 0.09, 1e-15);
  double expected = 0.0;
  for (int k = 10; k < 15; ++k) {
    CorrelatorSpec s{{grid.time(k), grid.time(k + 9)}, {0, 0}, PhysicalState(1, 0, 0), 0.0};
    expected += correlator_recursive(s, det, sched) / 5.0;
  }
  EXPECT_NEAR(c.value[2], expected, 1e-13);
  const std::vector<GridWindow> w{{0, 10, 5}, {0, 19, 1}};
  double direct = 0.0;
  for (int k = 10; k < 15; ++k) {
    CorrelatorSpec sp{{grid.time(k), grid.time(19)}, {0, 0}, PhysicalState(1, 0, 0), 0.0};
    direct += correlator_recursive(sp, det, sched) / 5.0;
  }
  EXPECT_NEAR(grid_window_average(grid, det, sched, PhysicalState(1, 0, 0), w), direct, 1e-13);
}
