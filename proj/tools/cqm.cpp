// cqm: command-line front end.
//
//   cqm simulate   --config exp.json [--seed N] [--threads N] [--out ens.cqma] [--flip-initial-state]
//   cqm correlate  --config exp.json [--mode mc|gcr|analytic] [--archive a --archive-minus b] [--out k.csv]
//   cqm calibrate  --config exp.json [--seed N] [--threads N] [--out cal.csv]
//   cqm fit-phase  --dk-csv k.csv --gamma G --rabi-mhz F (--c C | --t-skip S --T T) [--out fit.txt]
//
// Exit codes: 0 ok, 2 configuration error, 3 numerical diagnostic, 4 I/O error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cqm/cqm.hpp"

namespace {

enum Exit { ok = 0, config_error = 2, numerical_error = 3, io_error = 4 };

/// Writes to `path` or stdout when empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw cqm::IoError("cannot write " + path);
  out << text;
  out.flush();
  if (!out) throw cqm::IoError("write failure on " + path);
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool with_seed) {
  cmd->add_option("--config", c.config, "experiment configuration (JSON)")->required();
  if (with_seed) cmd->add_option("--seed", c.seed, "override ensemble.seed");
  cmd->add_option("--threads", c.threads, "worker threads (0: all cores)");
  cmd->add_option("--out", c.out, "output path");
}

int cmd_simulate(const Common& c, bool flip) {
  auto cfg = cqm::load_experiment(c.config);
  auto setup = cqm::build_setup(cfg);
  if (flip) setup.initial_state = -setup.initial_state;
  const std::uint64_t seed = c.seed.value_or(cfg.ensemble.seed);
  const std::string out = c.out.empty() ? "ensemble.cqma" : c.out;

  cqm::ArchiveHeader h;
  h.kind = cqm::SignalKind::raw;
  h.config_digest = cfg.digest;
  h.seed = seed;
  h.n_traj = cfg.ensemble.n_traj;
  h.n_steps = setup.grid.n_steps();
  h.t0 = setup.grid.t0();
  h.dt = setup.grid.dt();
  for (const auto& d : setup.detectors) {
    h.responses.push_back(d.response());
    h.offsets.push_back(d.offset());
  }
  const auto detectors = setup.detectors;
  cqm::TrajectorySimulator sim(std::move(setup));
  cqm::RawSynthesizer<cqm::ArchiveWriter> writer(cqm::ArchiveWriter(out, h), detectors);
  auto done = cqm::run_ensemble(sim, {cfg.ensemble.n_traj, seed, cfg.ensemble.block_size, c.threads}, writer);
  done.inner().close();

  std::ostringstream manifest;
  manifest << "{\n  \"artifact_version\": \"" << cqm::artifact_version << "\",\n"
           << "  \"config_digest\": \"" << cqm::hex_digest(cfg.digest) << "\",\n"
           << "  \"seed\": " << seed << ",\n"
           << "  \"n_traj\": " << h.n_traj << ",\n"
           << "  \"n_steps\": " << h.n_steps << ",\n"
           << "  \"dt_us\": " << h.dt << ",\n"
           << "  \"initial_state_flipped\": " << (flip ? "true" : "false") << ",\n"
           << "  \"archive_digest\": \"" << cqm::hex_digest(done.inner().digest()) << "\"\n}\n";
  emit(out + ".manifest.json", manifest.str());
  std::cout << "wrote " << out << ": " << h.n_traj << " trajectories x " << h.n_steps << " steps, digest "
            << cqm::hex_digest(done.inner().digest()) << '\n';
  return ok;
}

int cmd_correlate(const Common& c, const std::string& mode_flag, const std::string& archive,
                  const std::string& archive_minus) {
  auto cfg = cqm::load_experiment(c.config);
  if (!mode_flag.empty()) cfg.correlator.mode = cqm::parse_mode(mode_flag);
  const bool have_archive = !archive.empty() || !archive_minus.empty();
  if (have_archive && cfg.correlator.mode != cqm::CorrelatorMode::mc)
    throw cqm::ConfigError("mode/archive mismatch: archives can only be used in mc mode");
  if (have_archive && (archive.empty() || archive_minus.empty()))
    throw cqm::ConfigError("mc mode needs both --archive and --archive-minus");

  std::ostringstream os;
  cqm::write_csv_preamble(os, cfg.digest, std::string("mode=") + cqm::mode_name(cfg.correlator.mode));
  if (!cfg.correlator.times.empty()) {
    const double k = cqm::gcr_point(cfg);
    for (std::size_t i = 0; i < cfg.correlator.times.size(); ++i) os << "t" << i + 1 << "_us,";
    os << "K\n";
    char buf[64];
    for (double t : cfg.correlator.times) {
      std::snprintf(buf, sizeof buf, "%.17g,", t);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", k);
    os << buf;
    emit(c.out, os.str());
    return ok;
  }

  cqm::CorrelatorTable table;
  switch (cfg.correlator.mode) {
    case cqm::CorrelatorMode::gcr: table = cqm::correlate_gcr(cfg); break;
    case cqm::CorrelatorMode::analytic: table = cqm::correlate_analytic(cfg); break;
    case cqm::CorrelatorMode::mc:
      table = have_archive ? cqm::correlate_archives(cfg, archive, archive_minus)
                           : cqm::correlate_mc(cfg, c.seed.value_or(cfg.ensemble.seed), c.threads);
      break;
  }
  table.write_csv(os);
  emit(c.out, os.str());
  return ok;
}

int cmd_calibrate(const Common& c) {
  const auto cfg = cqm::load_experiment(c.config);
  const auto rep = cqm::calibrate(cfg, c.seed.value_or(cfg.ensemble.seed), c.threads);
  cqm::write_calibration_text(std::cout, rep, cfg.evolution.gamma);
  if (!c.out.empty()) {
    std::ostringstream os;
    cqm::write_csv_preamble(os, cfg.digest, "calibration");
    cqm::write_calibration_csv(os, rep);
    emit(c.out, os.str());
  }
  return ok;
}

int cmd_fit_phase(const std::string& csv, double gamma, double rabi_mhz, std::optional<double> c_opt,
                  std::optional<double> t_skip, std::optional<double> t_avg, const std::string& out) {
  std::ifstream in(csv);
  if (!in) throw cqm::IoError("cannot read " + csv);
  const auto samples = cqm::read_delta_k_csv(in);
  double c;
  if (c_opt) {
    c = *c_opt;
  } else if (t_skip && t_avg) {
    c = cqm::c_factor(gamma, *t_skip, *t_avg);
  } else {
    throw cqm::ConfigError("give --c or both --t-skip and --T");
  }
  const auto fit = cqm::fit_phase_angle(samples, gamma, cqm::angular_from_mhz(rabi_mhz), c);
  char buf[256];
  std::snprintf(buf, sizeof buf, "phi_a = %.4f +- %.4f deg (tan phi_a = %.6f +- %.6f, chi2 = %.3f, n = %zu, c = %.6f)\n",
                cqm::degrees(fit.phi), cqm::degrees(fit.ci), fit.tan_phi, fit.tan_sigma, fit.chi2, samples.size(), c);
  emit(out, buf);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous qubit measurement: trajectories, collapse-recipe correlators, calibration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cqm::artifact_version));

  Common sim_opts, cor_opts, cal_opts;
  bool flip = false;
  auto* sim = app.add_subcommand("simulate", "simulate an ensemble and write a raw archive");
  add_common(sim, sim_opts, true);
  sim->add_flag("--flip-initial-state", flip, "simulate from -r0 (the K_minus case)");

  std::string mode, archive, archive_minus;
  auto* cor = app.add_subcommand("correlate", "time-averaged correlators K_plus, K_minus and dK as CSV");
  add_common(cor, cor_opts, true);
  cor->add_option("--mode", mode, "mc, gcr or analytic (overrides correlator.mode)");
  cor->add_option("--archive", archive, "raw archive for K_plus (mc mode)");
  cor->add_option("--archive-minus", archive_minus, "raw archive for K_minus (mc mode)");

  auto* cal = app.add_subcommand("calibrate", "recover response, tau_m and eta from synthetic z_in = +-1 runs");
  add_common(cal, cal_opts, true);

  std::string dk_csv, fit_out;
  double gamma = 0.0, rabi = 0.0;
  std::optional<double> c_opt, t_skip, t_avg;
  auto* fit = app.add_subcommand("fit-phase", "estimate phi_a from a dK(tau) table");
  fit->add_option("--dk-csv", dk_csv, "CSV with tau_us, dK and err_dK columns")->required();
  fit->add_option("--gamma", gamma, "ensemble dephasing rate [1/us]")->required();
  fit->add_option("--rabi-mhz", rabi, "Rabi frequency [MHz]")->required();
  fit->add_option("--c", c_opt, "averaging factor c");
  fit->add_option("--t-skip", t_skip, "t_skip [us] (to compute c)");
  fit->add_option("--T", t_avg, "averaging window T [us] (to compute c)");
  fit->add_option("--out", fit_out, "report path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (*sim) return cmd_simulate(sim_opts, flip);
    if (*cor) return cmd_correlate(cor_opts, mode, archive, archive_minus);
    if (*cal) return cmd_calibrate(cal_opts);
    if (*fit) return cmd_fit_phase(dk_csv, gamma, rabi, c_opt, t_skip, t_avg, fit_out);
  } catch (const cqm::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return config_error;
  } catch (const cqm::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return numerical_error;
  } catch (const cqm::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return io_error;
  }
  return ok;
}
