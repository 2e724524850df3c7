#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "qsmc/errors.hpp"
#include "qsmc/experiment.hpp"
#include "qsmc/fpt.hpp"

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

void set_echo(qsmc::ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (auto& [k, v] : cfg.echo)
    if (k == key) v = value;
}

qsmc::ExperimentConfig load_with_overrides(const std::string& path, const std::uint64_t* seed,
                                           const int* threads, const std::string* output) {
  qsmc::ExperimentConfig cfg = qsmc::load_config(path);
  if (seed) {
    cfg.run.seed = *seed;
    set_echo(cfg, "seed", std::to_string(*seed));
  }
  if (threads) {
    if (*threads < 1) throw qsmc::ConfigError("--threads must be >= 1");
    cfg.run.threads = *threads;
    set_echo(cfg, "threads", std::to_string(*threads));
  }
  if (output) {
    cfg.output = *output;
    set_echo(cfg, "output", *output);
  }
  return cfg;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-stationary Monte Carlo runner"};
  app.require_subcommand(1);

  std::string config, output, reference, lo_text, hi_text;
  std::uint64_t seed = 1;
  int threads = 1, bins = 50, grid = 0;
  std::size_t draws = 10000;
  double burn_in = -1.0;
  std::vector<std::string> run_dirs;

  auto* run = app.add_subcommand("run", "Run the configured engine and write its outputs");
  run->add_option("--config", config, "Config file")->required();
  auto* run_seed = run->add_option("--seed", seed, "Override the master seed");
  auto* run_threads = run->add_option("--threads", threads, "Override the thread count");
  auto* run_output = run->add_option("--output", output, "Override the output directory");

  auto* diag = app.add_subcommand("diagnose", "Summarize finished runs");
  diag->add_option("runs", run_dirs, "Run directories (several give a cost table)")->required();
  diag->add_option("--reference", reference, "normal:mu,sd or another run directory");
  diag->add_option("--burn-in", burn_in, "Override the burn-in time");
  diag->add_option("--bins", bins, "Histogram bins");
  diag->add_option("--output", output, "Report directory (default <run>/diagnose)");

  auto* fpt = app.add_subcommand("simulate-fpt", "Draw unit first-passage times");
  fpt->add_option("--draws", draws, "Number of draws");
  fpt->add_option("--seed", seed, "Seed");
  fpt->add_option("--output", output, "CSV file for the draws");

  auto* kbm = app.add_subcommand("simulate-kbm", "Draw killing times of the configured model");
  kbm->add_option("--config", config, "Config file")->required();
  kbm->add_option("--draws", draws, "Number of killed trajectories");
  auto* kbm_seed = kbm->add_option("--seed", seed, "Override the master seed");
  kbm->add_option("--output", output, "CSV file for the draws");

  auto* phib = app.add_subcommand("estimate-phi-bound", "Advisory search for the rate minimum");
  phib->add_option("--config", config, "Config file")->required();
  phib->add_option("--lo", lo_text, "Box lower corner, comma separated")->required();
  phib->add_option("--hi", hi_text, "Box upper corner, comma separated")->required();
  phib->add_option("--grid", grid, "Grid points per coordinate (0: automatic)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*run) {
      auto cfg = load_with_overrides(config, *run_seed ? &seed : nullptr,
                                     *run_threads ? &threads : nullptr,
                                     *run_output ? &output : nullptr);
      qsmc::run_experiment(cfg, std::cerr);
    } else if (*diag) {
      qsmc::DiagnoseOptions opts;
      opts.run_dirs = run_dirs;
      opts.reference = reference;
      opts.burn_in = burn_in;
      opts.bins = bins;
      opts.output = output;
      std::cout << qsmc::diagnose(opts);
    } else if (*fpt) {
      qsmc::RandomStream rng(seed);
      qsmc::FptStats stats;
      std::ostringstream csv;
      csv << "tau,sign\n";
      double sum = 0.0;
      long plus = 0;
      for (std::size_t i = 0; i < draws; ++i) {
        auto u = qsmc::sample_unit_fpt(rng, &stats);
        sum += u.tau_bar;
        plus += u.sign > 0;
        csv << fmt(u.tau_bar) << ',' << u.sign << "\n";
      }
      if (!output.empty()) qsmc::write_atomic(output, csv.str());
      std::cout << "draws = " << draws << "\nmean_tau = " << fmt(sum / draws)
                << "\nplus_fraction = " << fmt(static_cast<double>(plus) / draws)
                << "\nproposals_per_draw = " << fmt(static_cast<double>(stats.proposals) / draws)
                << "\nrefinements_per_proposal = "
                << fmt(static_cast<double>(stats.refinements) / stats.proposals) << "\n";
    } else if (*kbm) {
      auto cfg = load_with_overrides(config, *kbm_seed ? &seed : nullptr, nullptr, nullptr);
      auto pm = qsmc::prepare_model(cfg);
      auto phi = qsmc::make_phi_provider(cfg, pm);
      const qsmc::Vec theta = qsmc::layer_widths(pm.precond, cfg.run.theta_scale);
      std::ostringstream csv;
      csv << "draw,kill_time";
      for (int j = 0; j < pm.model->dim(); ++j) csv << ",x" << j;
      csv << "\n";
      double sum = 0.0;
      for (std::size_t i = 0; i < draws; ++i) {
        auto rng = qsmc::RandomStream::derive(cfg.run.seed, i, 0);
        auto rec = qsmc::kbm_kill(0.0, pm.start, *phi, pm.precond, theta, rng, cfg.run.kbm);
        sum += rec.kill_time;
        csv << i << ',' << fmt(rec.kill_time);
        for (int j = 0; j < rec.kill_state.size(); ++j) csv << ',' << fmt(rec.kill_state[j]);
        csv << "\n";
      }
      if (!output.empty()) qsmc::write_atomic(output, csv.str());
      std::cout << "draws = " << draws << "\nmean_kill_time = " << fmt(sum / draws) << "\n";
    } else if (*phib) {
      auto cfg = qsmc::load_config(config);
      auto pm = qsmc::prepare_model(cfg);
      qsmc::Vec lo = qsmc::parse_vector(lo_text, "--lo"), hi = qsmc::parse_vector(hi_text, "--hi");
      auto est = qsmc::estimate_phi_bound(*pm.model, pm.precond, lo, hi, grid);
      std::cout << "advisory_phi_lower = " << fmt(est.value) << "\nargmin =";
      for (int j = 0; j < est.argmin.size(); ++j) std::cout << (j ? "," : " ") << fmt(est.argmin[j]);
      std::cout << "\ngrid_points = " << est.grid_points
                << "\nnote = advisory only: grid plus local search, not a certified bound\n";
    }
  } catch (const qsmc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case qsmc::ErrorKind::Config: return kConfig;
      case qsmc::ErrorKind::Data: return kData;
      case qsmc::ErrorKind::Numeric: return kNumeric;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOk;
}
