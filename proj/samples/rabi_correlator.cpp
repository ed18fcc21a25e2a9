// Averaged two-time correlator of a Rabi-driven qubit under a misaligned
// quadrature measurement: closed form, collapse recipe and a small Monte Carlo run.
//
//   rabi_correlator [phi_a_deg] [n_traj]

#include <cstdio>
#include <algorithm>
#include <cstdlib>

#include "cqm/cqm.hpp"

using namespace cqm;

int main(int argc, char** argv) {
  const double phi_deg = argc > 1 ? std::atof(argv[1]) : 70.0;
  const std::uint64_t n_traj = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 20000;
  const double gamma = 1.0 / 1.8;
  const double tau_min = 2.04;

  SimulationSetup s;
  s.detectors = {DetectorModel::from_quadrature(Vec3::UnitZ(), tau_min, radians(phi_deg), 1.0 / (2 * gamma * tau_min))};
  s.schedule = EnsembleSchedule(rabi_dephasing_generator(gamma, two_pi));
  s.grid = TimeGrid(0.0, 0.004, 1220);
  s.initial_state = PhysicalState(1, 0, 0);

  const RabiCaseParams p{gamma, two_pi, radians(phi_deg), 1.0, 0.28, 0.28};
  const auto taus = lag_grid(0.04, 4.0);
  const auto gcr = averaged_lag_curve(s.detectors, 0, 0, s.schedule, s.initial_state, 0.0, 0.28, 0.28, taus);

  ConditionedLagCorrelator::Options o;
  o.window_begin = 70;
  o.window_length = 70;
  o.lag_stride = 10;
  o.n_lags = 100;
  auto mc = run_ensemble(TrajectorySimulator(s), {n_traj, 1, std::max<std::size_t>(1, n_traj / 20), 0}, ConditionedLagCorrelator(o)).result(0.004);

  std::printf("tau_us,analytic,gcr,mc,mc_err\n");
  for (std::size_t i = 0; i < taus.size(); ++i)
    std::printf("%.2f,%.6f,%.6f,%.6f,%.6f\n", taus[i], k_analytic_averaged(p, taus[i]), gcr.value[i], mc.value[i],
                mc.error[i]);
  const auto peak = averaged_peak(p, 4.0);
  std::fprintf(stderr, "c = %.4f, peak K = %.4f at tau = %.4f us\n", c_factor(p), peak.value, peak.tau);
}
