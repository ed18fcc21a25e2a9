#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cqm/calibration.hpp"
#include "cqm/rng.hpp"

using namespace cqm;

namespace {

/// raw = offset + response * (z + sqrt(tau/dt) w) for a static z eigenstate.
std::vector<std::vector<double>> static_traces(double z, double response, double offset, double tau,
                                               double dt, std::size_t n, std::size_t count,
                                               std::uint64_t seed) {
  std::vector<std::vector<double>> out(count, std::vector<double>(n));
  const double s = std::sqrt(tau / dt);
  for (std::size_t j = 0; j < count; ++j) {
    const NoiseStream ns(seed, j, 0);
    for (std::size_t k = 0; k < n; ++k) out[j][k] = offset + response * (z + s * ns.normal(k));
  }
  return out;
}

}  // namespace

TEST(IntegratedSignal, ConstantTrace) {
  IntegratedSignalStats s(11, 0.1);
  const std::vector<double> c(11, 2.5);
  s.add_trace(c);
  s.add_trace(c);
  for (std::size_t k = 0; k < 11; ++k) {
    EXPECT_NEAR(s.mean(k), 2.5 * 0.1 * static_cast<double>(k), 1e-14);
    EXPECT_NEAR(s.variance(k), 0.0, 1e-14);
  }
  EXPECT_THROW(s.add_trace(std::vector<double>(10, 0.0)), ConfigError);
}

TEST(IntegratedSignal, TrapezoidOfLinearTrace) {
  IntegratedSignalStats s(5, 0.5);
  s.add_trace(std::vector<double>{0.0, 1.0, 2.0, 3.0, 4.0});
  // integral of 2t from 0 to t_k = t_k^2 (exact for the trapezoid rule)
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(s.mean(k), s.time(k) * s.time(k), 1e-14);
}

TEST(Calibration, ConversionFormulas) {
  EXPECT_NEAR(tau_m_from_variance_slope(2.06, 2.01), 2.0395534763990995, 1e-12);
  EXPECT_NEAR(tau_m_from_variance_slope(2.06, 0.66), 18.916437, 1e-6);
  EXPECT_NEAR(1.0 / (2.0 * (1.0 / 1.8) * 2.04), 0.4411764705882353, 1e-15);
  EXPECT_THROW(tau_m_from_variance_slope(2.0, 0.0), ConfigError);
}

TEST(Calibration, ZeroNoiseResponse) {
  CalibrationRun run;
  run.dt = 0.004;
  run.raw_plus = static_traces(1.0, 1.005, -0.4, 0.0, 0.004, 1000, 3, 1);
  run.raw_minus = static_traces(-1.0, 1.005, -0.4, 0.0, 0.004, 1000, 3, 1);
  const auto r = estimate_response(run);
  EXPECT_NEAR(r.separation, 2.01, 1e-10);
  EXPECT_NEAR(r.response, 1.005, 1e-10);
  EXPECT_NEAR(r.separation_error, 0.0, 1e-9);
}

TEST(Calibration, WhiteNoiseRoundTrip) {
  const double tau = 2.04, resp = 1.005, dt = 0.004;
  const std::size_t n = 1001, count = 17000;
  CalibrationRun run;
  run.dt = dt;
  run.raw_plus = static_traces(1.0, resp, 0.3, tau, dt, n, count, 10);
  run.raw_minus = static_traces(-1.0, resp, 0.3, tau, dt, n, count, 11);
  const auto pair = integrate_traces(run);
  const auto r = estimate_response(pair.plus, pair.minus, 0.6);
  EXPECT_NEAR(r.separation, 2.01, 0.02 * 2.01);
  const auto t = estimate_tau_m(pair.plus, pair.minus, r.response, 1.0 / 1.8, 0.0, 4.0);
  EXPECT_NEAR(t.variance_slope, resp * resp * tau, 0.04 * resp * resp * tau);
  EXPECT_NEAR(t.tau_m, tau, 0.06 * tau);
  EXPECT_NEAR(t.eta, 1.0 / (2.0 / 1.8 * tau), 0.06 / (2.0 / 1.8 * tau));
  EXPECT_TRUE(t.variances_consistent);
}

TEST(Calibration, VarianceNotGrowing) {
  CalibrationRun run;
  run.raw_plus = static_traces(1.0, 1.0, 0.0, 0.0, 0.004, 200, 4, 1);
  run.raw_minus = static_traces(-1.0, 1.0, 0.0, 0.0, 0.004, 200, 4, 1);
  const auto pair = integrate_traces(run);
  try {
    estimate_tau_m(pair.plus, pair.minus, 1.0, 0.5, 0.0, 0.6);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("variance not growing"), std::string::npos);
  }
}

TEST(Calibration, WindowChecks) {
  IntegratedSignalStats s(100, 0.004);
  s.add_trace(std::vector<double>(100, 1.0));
  EXPECT_THROW(estimate_response(s, s, 0.005), ConfigError);
  EXPECT_THROW(estimate_response(s, s, 1.0), ConfigError);
  EXPECT_NO_THROW(estimate_response(s, s, 0.3));
}

// ---------------------------------------------------------------------------

namespace {

RawCorrelatorOptions small_options() {
  RawCorrelatorOptions o;
  o.dt = 0.01;
  o.dt_out = 0.05;
  o.t_skip = 0.1;
  o.t_avg = 0.1;
  o.lag_max = 0.5;
  return o;
}

}  // namespace

TEST(RawCorrelator, Geometry) {
  const RawCorrelatorEstimator e(RawCorrelatorOptions{});
  EXPECT_EQ(e.bin_factor(), 10u);
  EXPECT_EQ(e.first_bin(), 7u);
  EXPECT_EQ(e.t1_bins(), 7u);
  EXPECT_EQ(e.n_lags(), 100u);
  EXPECT_EQ(e.samples_needed(), 1140u);
  auto bad = RawCorrelatorOptions{};
  bad.dt_out = 0.041;
  EXPECT_THROW(RawCorrelatorEstimator{bad}, ConfigError);
}

TEST(RawCorrelator, ConstantAndDeterministicTracesGiveZero) {
  for (auto mode : {OffsetMode::per_block, OffsetMode::global}) {
    auto o = small_options();
    o.offset_mode = mode;
    RawCorrelatorEstimator e(o);
    std::vector<double> trace(e.samples_needed());
    for (std::size_t k = 0; k < trace.size(); ++k) trace[k] = 0.7 + std::sin(0.3 * static_cast<double>(k));
    for (int j = 0; j < 10; ++j) e.add_trace(trace);
    const auto c = e.result();
    for (double v : c.value) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

TEST(RawCorrelator, FixedOffsetIsPlainProductAverage) {
  auto o = small_options();
  o.offset_mode = OffsetMode::fixed;
  o.fixed_offset = 0.2;
  o.response = 2.0;
  RawCorrelatorEstimator e(o);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  const std::size_t n = e.samples_needed();
  std::vector<std::vector<double>> traces(6, std::vector<double>(n));
  for (auto& t : traces)
    for (double& v : t) v = nd(gen);
  for (const auto& t : traces) e.add_trace(t);
  const auto c = e.result();
  // Direct evaluation.
  for (std::size_t l = 0; l < e.n_lags(); ++l) {
    double s = 0.0;
    for (const auto& t : traces) {
      const auto b = boxcar(t, 5);
      for (std::size_t i = 0; i < e.t1_bins(); ++i) {
        const std::size_t b1 = e.first_bin() + i;
        s += (b[b1] / 2.0 - 0.1) * (b[b1 + l + 1] / 2.0 - 0.1);
      }
    }
    EXPECT_NEAR(c.value[l], s / 6.0 / static_cast<double>(e.t1_bins()), 1e-13);
  }
}

TEST(RawCorrelator, NormalizationIndependence) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  auto o = small_options();
  RawCorrelatorEstimator unit(o);
  o.response = 0.37;
  RawCorrelatorEstimator scaled(o);
  const std::size_t n = unit.samples_needed();
  for (int j = 0; j < 40; ++j) {
    std::vector<double> t(n), raw(n);
    const double a = nd(gen);
    for (std::size_t k = 0; k < n; ++k) {
      t[k] = a * std::cos(0.2 * static_cast<double>(k)) + nd(gen);
      raw[k] = -0.4 + 0.37 * t[k];
    }
    unit.add_trace(t);
    scaled.add_trace(raw);
    if (j % 10 == 9) {
      unit.finish_chunk();
      scaled.finish_chunk();
    }
  }
  const auto a = unit.result();
  const auto b = scaled.result();
  for (std::size_t l = 0; l < a.size(); ++l) {
    EXPECT_NEAR(a.value[l], b.value[l], 1e-12 * (1.0 + std::abs(a.value[l])));
    EXPECT_NEAR(a.error[l], b.error[l], 1e-10 * (1.0 + a.error[l]));
  }
}

TEST(RawCorrelator, OffsetModesEstimateTheCovariance) {
  // x_j(t) = A_j f(t) + noise with A ~ N(m, 1): Cov = f(t1) f(t2).
  auto f = [](std::size_t bin) { return std::cos(0.4 * static_cast<double>(bin)); };
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd;
  auto o = small_options();
  o.offset_mode = OffsetMode::per_block;
  RawCorrelatorEstimator pb(o);
  o.offset_mode = OffsetMode::global;
  RawCorrelatorEstimator gl(o);
  const std::size_t n = pb.samples_needed();
  for (int j = 0; j < 4000; ++j) {
    const double a = 1.5 + nd(gen);
    std::vector<double> t(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = a * f(k / 5) + 0.5 * nd(gen);
    pb.add_trace(t);
    gl.add_trace(t);
    if (j % 200 == 199) {
      pb.finish_chunk();
      gl.finish_chunk();
    }
  }
  EXPECT_EQ(pb.block_count(), 20u);
  const auto cp = pb.result();
  const auto cg = gl.result();
  for (std::size_t l = 0; l < cp.size(); ++l) {
    double expected = 0.0;
    for (std::size_t i = 0; i < pb.t1_bins(); ++i) expected += f(pb.first_bin() + i) * f(pb.first_bin() + i + l + 1);
    expected /= static_cast<double>(pb.t1_bins());
    EXPECT_NEAR(cp.value[l], expected, 5.0 * cp.error[l]);
    EXPECT_NEAR(cg.value[l], expected, 5.0 * cg.error[l]);
  }
}

TEST(RawCorrelator, InsufficientTracesPerBlock) {
  RawCorrelatorEstimator e(small_options());
  std::vector<double> t(e.samples_needed(), 1.0);
  e.add_trace(t);
  e.add_trace(t);
  e.finish_chunk();
  e.add_trace(t);
  e.finish_chunk();
  try {
    e.result();
    FAIL();
  } catch (const ConfigError& err) {
    EXPECT_NE(std::string(err.what()).find("insufficient traces per block"), std::string::npos);
  }
  RawCorrelatorEstimator s(small_options());
  EXPECT_THROW(s.add_trace(std::vector<double>(10, 0.0)), ConfigError);
}

TEST(CorrelatorTable, CsvLayout) {
  CorrelatorTable t;
  t.plus = {{0.04, 0.08}, {1.0, 0.5}, {}};
  t.minus = {{0.04, 0.08}, {0.25, 0.125}, {}};
  std::ostringstream os;
  t.write_csv(os);
  EXPECT_EQ(os.str(), "tau_us,K_plus,err_plus,K_minus,err_minus,dK,err_dK\n"
                      "0.040000000000000001,1,0,0.25,0,0.75,0\n"
                      "0.080000000000000002,0.5,0,0.125,0,0.375,0\n");
}
