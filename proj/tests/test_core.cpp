#include <gtest/gtest.h>

#include <random>

#include "cqm/config.hpp"
#include "cqm/core.hpp"

using namespace cqm;

TEST(Units, RabiFrequencyRoundTrip) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> f(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double mhz = f(gen);
    EXPECT_NEAR(mhz_from_angular(angular_from_mhz(mhz)), mhz, 1e-12);
  }
  EXPECT_DOUBLE_EQ(angular_from_mhz(1.0), 2.0 * std::numbers::pi);
}

TEST(DetectorModel, DephasingRateIndependentOfQuadratureAngle) {
  const double tau_min = 2.04, eta = 0.44;
  const double ref = 1.0 / (2.0 * eta * tau_min);
  for (double deg = -85.0; deg <= 85.0; deg += 0.5) {
    const auto d = DetectorModel::from_quadrature(Vec3::UnitZ(), tau_min, radians(deg), eta);
    EXPECT_NEAR(d.measurement_dephasing_rate(), ref, 1e-12) << deg;
    EXPECT_NEAR(d.tau_min(), tau_min, 1e-12);
  }
}

TEST(DetectorModel, QuadratureAngleSeventyDegrees) {
  const auto d = DetectorModel::from_quadrature(Vec3::UnitZ(), 2.04, radians(70.0), 0.44, 1.005, -0.4);
  EXPECT_NEAR(d.k_phase(), 2.7474774194546216, 1e-12);
  EXPECT_NEAR(d.tau_m(), 17.439209627642573, 1e-9);
  EXPECT_NEAR(d.response(), 1.005 * std::cos(radians(70.0)), 1e-15);
  EXPECT_EQ(d.offset(), -0.4);
}

TEST(DetectorModel, RejectsInvalidFields) {
  EXPECT_THROW(DetectorModel(Vec3(0, 0, 1.001), 1.0, 0.0, 1.0), ConfigError);
  EXPECT_THROW(DetectorModel(Vec3::UnitZ(), 0.0, 0.0, 1.0), ConfigError);
  EXPECT_THROW(DetectorModel(Vec3::UnitZ(), 1.0, 0.0, 0.0), ConfigError);
  EXPECT_THROW(DetectorModel(Vec3::UnitZ(), 1.0, 0.0, 1.5), ConfigError);
  EXPECT_NO_THROW(DetectorModel(Vec3::UnitZ(), 1.0, 0.0, 1.0));
  try {
    DetectorModel(Vec3::UnitZ(), 1.0, 0.0, 0.0);
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("eta out of range"), std::string::npos);
  }
}

TEST(PhysicalState, NormBound) {
  EXPECT_NO_THROW(PhysicalState(0.0, 0.0, 1.0 + 0.5e-9));
  EXPECT_THROW(PhysicalState(0.0, 0.0, 1.0 + 2e-9), ConfigError);
  EXPECT_THROW(PhysicalState(std::nan(""), 0.0, 0.0), ConfigError);
  const PhysicalState s(0.6, 0.0, 0.8);
  EXPECT_EQ((-s).vector(), Vec3(-0.6, 0.0, -0.8));
}

TEST(TimeGrid, MultiplicativeTimes) {
  const TimeGrid g(0.1, 0.004, 1220);
  for (std::size_t k = 0; k < g.n_steps(); ++k) EXPECT_EQ(g.time(k), 0.1 + static_cast<double>(k) * 0.004);
  EXPECT_EQ(TimeGrid::from_duration(0.0, 0.004, 4.88).n_steps(), 1220u);
  EXPECT_THROW(TimeGrid::from_duration(0.0, 0.004, 4.881), ConfigError);
  EXPECT_THROW(TimeGrid(0.0, 0.0, 10), ConfigError);
  EXPECT_THROW(TimeGrid(0.0, 0.1, 0), ConfigError);
  EXPECT_EQ(g.nearest_index(0.1 + 0.0041), 1u);
  EXPECT_EQ(g.nearest_index(-5.0), 0u);
}

namespace {

ExperimentConfig base_config() {
  return parse_experiment(std::string(R"({
    "detectors": [{"axis": [0, 0, 1], "tau_min_us": 2.04, "phi_a_deg": 0, "eta": 0.44}],
    "evolution": {"gamma_per_us": 0.5555555555555556, "rabi_mhz": 1.0},
    "initial_state": {"x": 1, "y": 0, "z": 0},
    "grid": {"dt_us": 0.004, "duration_us": 4.88},
    "ensemble": {"n_traj": 10, "seed": 1, "block_size": 5},
    "correlator": {"mode": "gcr", "detectors": [0, 0]}
  })"));
}

}  // namespace

TEST(ValidateExperiment, ValidConfig) {
  const auto c = base_config();
  const auto r = validate_experiment(c);
  EXPECT_TRUE(r.ok()) << (r.violations.empty() ? "" : r.violations.front());
}

TEST(ValidateExperiment, EtaZero) {
  auto c = base_config();
  c.detectors[0].eta = 0.0;
  const auto r = validate_experiment(c);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(r.contains("eta out of range"));
}

TEST(ValidateExperiment, UnorderedTimes) {
  auto c = base_config();
  c.correlator.times = {0.5, 0.3};
  const auto r = validate_experiment(c);
  EXPECT_TRUE(r.contains("times not strictly ordered"));
}

TEST(ValidateExperiment, ReportsEveryViolation) {
  auto c = base_config();
  c.detectors[0].axis = Vec3(1, 1, 0);
  c.detectors[0].tau_min = -1.0;
  c.evolution.segments = {{1.0, 0.5, 1.0}};
  const auto r = validate_experiment(c);
  EXPECT_TRUE(r.contains("axis is not a unit vector"));
  EXPECT_TRUE(r.contains("tau_min must be positive"));
  EXPECT_TRUE(r.contains("segments do not cover"));
}
