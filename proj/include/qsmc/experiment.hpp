#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "qsmc/models.hpp"
#include "qsmc/smc.hpp"

namespace qsmc {

/// Everything a run needs, parsed from a flat key = value file.
struct ExperimentConfig {
  RunConfig run;
  ModelSpec model;
  std::string data_path;  // empty: synthetic data
  std::size_t synthetic_n = 0;
  Vec true_params;
  std::uint64_t data_seed = 1;
  std::string precond = "default";  // default | identity | scaled | info | explicit list
  Vec precond_diag;                 // filled for an explicit list
  Vec x_hat;                        // empty: search for the mode
  Vec mode_start;                   // empty: prior mean
  Vec start;                        // empty: start at x_hat
  int batch = 1;
  double floor_region_sd = 8.0;
  std::string output = "qsmc_out";
  /// Every key with the value in effect, in a fixed order.
  std::vector<std::pair<std::string, std::string>> echo;
};

/// The documented keys with their defaults.
const std::vector<std::pair<std::string, std::string>>& config_defaults();

/// Parses config text. Relative data paths are resolved against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::string& origin,
                              const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

/// Data, model, preconditioner and centering point, ready to run.
struct PreparedModel {
  Dataset data;
  std::unique_ptr<TargetModel> model;
  Preconditioner precond;
  Vec x_hat;
  Vec start;
  double prepare_seconds = 0.0;
};

PreparedModel prepare_model(const ExperimentConfig& cfg);

/// The rate matching the configured engine (exact or subsampled).
std::unique_ptr<PhiProvider> make_phi_provider(const ExperimentConfig& cfg,
                                               const PreparedModel& pm);

/// Runs the configured engine and writes particles.csv, summary.csv and
/// run_summary.txt atomically into cfg.output.
RunResult run_experiment(const ExperimentConfig& cfg, std::ostream& log);

/// Writes `content` to `path` through a temporary file and a rename.
void write_atomic(const std::string& path, const std::string& content);

/// Parses "a,b,c" into a vector.
Vec parse_vector(const std::string& text, const std::string& key);

struct DiagnoseOptions {
  std::vector<std::string> run_dirs;
  std::string reference;  // "normal:mu,sd" or a run directory; empty for none
  double burn_in = -1.0;  // < 0: take it from the run summary
  int bins = 50;
  std::string output;     // default: <first run>/diagnose
};

/// Reads one or more finished runs and writes the report files. Returns the
/// text report.
std::string diagnose(const DiagnoseOptions& opts);

struct PhiBoundEstimate {
  double value;
  Vec argmin;
  std::size_t grid_points;
};

/// Grid search plus simplex refinement of the unshifted rate over a box.
PhiBoundEstimate estimate_phi_bound(const TargetModel& model, const Preconditioner& precond,
                                    const Vec& lo, const Vec& hi, int grid_per_dim = 0);

}  // namespace qsmc
