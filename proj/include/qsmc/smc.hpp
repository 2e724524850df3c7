#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qsmc/samplers.hpp"

namespace qsmc {

enum class Engine { Qsmc, Scale, RQsmc, RScale };
enum class Resampler { Multinomial, Systematic };

Engine parse_engine(const std::string& s);
std::string engine_name(Engine e);
Resampler parse_resampler(const std::string& s);
std::string resampler_name(Resampler r);
/// True for the engines that use the subsampled rate.
bool engine_subsamples(Engine e);
/// True for the engines that kill and clone instead of weighting.
bool engine_rejects(Engine e);

struct RunConfig {
  Engine engine = Engine::Qsmc;
  std::size_t particles = 1024;
  double horizon = 10.0;
  double checkpoint_gap = 0.1;
  /// Resample when ESS <= ess_threshold * particles.
  double ess_threshold = 0.5;
  double burn_in = 0.0;
  std::uint64_t seed = 1;
  int threads = 1;
  Resampler resampler = Resampler::Systematic;
  double theta_scale = 1.0;
  /// Weighted engines: Poisson event rate as a fraction of U - L.
  double event_rate_fraction = 1.0;
  KbmOptions kbm;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
  std::vector<double> checkpoint_times() const;
};

/// Particle cloud at one checkpoint. Weights are normalized.
struct CheckpointRecord {
  double time = 0.0;
  double ess = 0.0;
  bool resampled = false;  // resampling followed this checkpoint
  CostCounters counters;   // work done since the previous checkpoint
  std::vector<Vec> states;
  std::vector<double> weights;
};

struct RunResult {
  std::vector<CheckpointRecord> records;
  CostCounters total;
};

using CheckpointCallback = std::function<void(const CheckpointRecord&)>;

double effective_sample_size(const std::vector<double>& weights);

/// Offspring indices for N draws from `weights`.
std::vector<std::size_t> resample_indices(const std::vector<double>& weights, Resampler kind,
                                          RandomStream& rng);

/// Importance-weighted engine: particles carry IS weights between checkpoints
/// and are resampled when the ESS drops to the threshold.
RunResult run_weighted(const RunConfig& cfg, const PhiProvider& phi,
                       const Preconditioner& precond, const Vec& x0,
                       const CheckpointCallback& on_checkpoint = {});

/// Rejection engine: a killed particle is replaced by a copy of a uniformly
/// chosen survivor at the kill time. Runs single-threaded.
RunResult run_rejection(const RunConfig& cfg, const PhiProvider& phi,
                        const Preconditioner& precond, const Vec& x0,
                        const CheckpointCallback& on_checkpoint = {});

/// Dispatches on cfg.engine. The caller supplies the rate matching the engine.
RunResult run_engine(const RunConfig& cfg, const PhiProvider& phi, const Preconditioner& precond,
                     const Vec& x0, const CheckpointCallback& on_checkpoint = {});

/// Weighted occupation measure of the checkpoint clouds with time >= t_star.
class OccupationEstimate {
 public:
  OccupationEstimate() = default;
  explicit OccupationEstimate(double t_star) : t_star_(t_star) {}
  static OccupationEstimate from_records(const std::vector<CheckpointRecord>& records,
                                         double t_star);

  /// Ignored when record.time < t_star.
  void add(const CheckpointRecord& record);
  void add(double time, const std::vector<Vec>& states, const std::vector<double>& weights);

  std::size_t checkpoints() const { return checkpoint_means_.size(); }
  std::size_t size() const { return states_.size(); }
  Vec mean() const;
  Mat covariance() const;
  /// Marginal weighted empirical CDF against a reference CDF.
  double ks_distance(int coord, const std::function<double(double)>& cdf) const;
  /// Marginal weighted KS distance between two occupation measures.
  double ks_distance(int coord, const OccupationEstimate& other) const;
  /// Smallest and largest pooled value of one coordinate.
  std::pair<double, double> range(int coord) const;
  /// Counts of pooled weight in `bins` equal bins over [lo, hi] (mass outside dropped).
  std::vector<double> histogram(int coord, int bins, double lo, double hi) const;
  /// Standard error of mean() from means over consecutive checkpoint batches.
  Vec batch_means_se(int batches = 20) const;
  /// Per-checkpoint weighted means in time order.
  const std::vector<Vec>& checkpoint_means() const { return checkpoint_means_; }

 private:
  std::vector<std::pair<double, double>> sorted_marginal(int coord) const;

  double t_star_ = 0.0;
  std::vector<Vec> states_;
  std::vector<double> weights_;  // each checkpoint's weights sum to 1
  std::vector<Vec> checkpoint_means_;
};

}  // namespace qsmc
