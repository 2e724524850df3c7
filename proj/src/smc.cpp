#include "qsmc/smc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <queue>
#include <thread>

#include "qsmc/errors.hpp"

namespace qsmc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Runs fn(k) for k in [0, n) on up to `threads` threads in contiguous chunks.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w * n / workers; k < (w + 1) * n / workers; ++k) fn(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

Engine parse_engine(const std::string& s) {
  if (s == "qsmc") return Engine::Qsmc;
  if (s == "scale") return Engine::Scale;
  if (s == "r-qsmc") return Engine::RQsmc;
  if (s == "r-scale") return Engine::RScale;
  throw ConfigError("unknown engine '" + s + "' (qsmc, scale, r-qsmc, r-scale)");
}

std::string engine_name(Engine e) {
  switch (e) {
    case Engine::Qsmc: return "qsmc";
    case Engine::Scale: return "scale";
    case Engine::RQsmc: return "r-qsmc";
    case Engine::RScale: return "r-scale";
  }
  return "?";
}

Resampler parse_resampler(const std::string& s) {
  if (s == "multinomial") return Resampler::Multinomial;
  if (s == "systematic") return Resampler::Systematic;
  throw ConfigError("unknown resampler '" + s + "' (multinomial, systematic)");
}

std::string resampler_name(Resampler r) {
  return r == Resampler::Multinomial ? "multinomial" : "systematic";
}

bool engine_subsamples(Engine e) { return e == Engine::Scale || e == Engine::RScale; }
bool engine_rejects(Engine e) { return e == Engine::RQsmc || e == Engine::RScale; }

void RunConfig::validate() const {
  if (particles < 1) throw ConfigError("particles must be >= 1");
  if (engine_rejects(engine) && particles < 2)
    throw ConfigError("rejection engines need at least 2 particles to clone from");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be > 0");
  if (!(checkpoint_gap > 0.0) || checkpoint_gap > horizon)
    throw ConfigError("checkpoint_gap must be in (0, horizon]");
  if (!(ess_threshold >= 0.0 && ess_threshold <= 1.0))
    throw ConfigError("ess_threshold must be in [0, 1]");
  if (!(burn_in >= 0.0 && burn_in < horizon)) throw ConfigError("burn_in must be in [0, horizon)");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(theta_scale > 0.0)) throw ConfigError("theta_scale must be > 0");
  if (!(event_rate_fraction > 0.0) || !std::isfinite(event_rate_fraction))
    throw ConfigError("event_rate_fraction must be > 0");
}

std::vector<double> RunConfig::checkpoint_times() const {
  const auto count = static_cast<std::size_t>(std::ceil(horizon / checkpoint_gap - 1e-9));
  std::vector<double> times;
  for (std::size_t i = 1; i <= count; ++i)
    times.push_back(std::min(horizon, static_cast<double>(i) * checkpoint_gap));
  times.back() = horizon;
  return times;
}

double effective_sample_size(const std::vector<double>& weights) {
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    s += w;
    s2 += w * w;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

std::vector<std::size_t> resample_indices(const std::vector<double>& weights, Resampler kind,
                                          RandomStream& rng) {
  const std::size_t n = weights.size();
  std::vector<double> cum(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) cum[k] = acc += weights[k];
  std::vector<std::size_t> out(n);
  auto locate = [&](double u) {
    auto it = std::upper_bound(cum.begin(), cum.end(), u * acc);
    return std::min<std::size_t>(it - cum.begin(), n - 1);
  };
  if (kind == Resampler::Systematic) {
    const double u0 = rng.uniform();
    for (std::size_t k = 0; k < n; ++k) out[k] = locate((static_cast<double>(k) + u0) / n);
  } else {
    for (std::size_t k = 0; k < n; ++k) out[k] = locate(rng.uniform());
  }
  return out;
}

RunResult run_weighted(const RunConfig& cfg, const PhiProvider& phi,
                       const Preconditioner& precond, const Vec& x0,
                       const CheckpointCallback& on_checkpoint) {
  cfg.validate();
  const std::size_t n = cfg.particles;
  const Vec theta = layer_widths(precond, cfg.theta_scale);
  std::vector<TrajectoryState> particles(n, TrajectoryState::start(0.0, x0, theta, false));
  std::vector<double> base(n, 1.0 / static_cast<double>(n));
  std::vector<double> log_w(n);
  RunResult result;
  const auto times = cfg.checkpoint_times();

  for (std::size_t i = 0; i < times.size(); ++i) {
    const double until = times[i];
    parallel_for(n, cfg.threads, [&](std::size_t k) {
      TrajectoryState& p = particles[k];
      RandomStream rng = RandomStream::derive(cfg.seed, k, i + 1);
      p.log_weight = 0.0;
      p.counters = {};
      is_kbm_advance(p, phi, precond, until, rng, cfg.event_rate_fraction);
      p.skeleton.truncate_history();
      log_w[k] = base[k] > 0.0 ? std::log(base[k]) + p.log_weight : -kInf;
    });

    CheckpointRecord rec;
    rec.time = until;
    const double top = *std::max_element(log_w.begin(), log_w.end());
    if (!std::isfinite(top))
      throw NumericFault("every particle has zero weight at t = " + std::to_string(until));
    rec.weights.resize(n);
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += rec.weights[k] = std::exp(log_w[k] - top);
    for (double& w : rec.weights) w /= sum;
    rec.ess = effective_sample_size(rec.weights);
    rec.states.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      rec.states.push_back(particles[k].state());
      rec.counters += particles[k].counters;
    }
    rec.resampled = rec.ess <= cfg.ess_threshold * static_cast<double>(n);
    result.total += rec.counters;

    if (rec.resampled) {
      RandomStream rng = RandomStream::derive(cfg.seed, kResampleStream, i + 1);
      auto idx = resample_indices(rec.weights, cfg.resampler, rng);
      std::vector<TrajectoryState> next;
      next.reserve(n);
      for (std::size_t k = 0; k < n; ++k) next.push_back(particles[idx[k]]);
      particles = std::move(next);
      std::fill(base.begin(), base.end(), 1.0 / static_cast<double>(n));
    } else {
      base = rec.weights;
    }
    if (on_checkpoint) on_checkpoint(rec);
    result.records.push_back(std::move(rec));
  }
  return result;
}

RunResult run_rejection(const RunConfig& cfg, const PhiProvider& phi,
                        const Preconditioner& precond, const Vec& x0,
                        const CheckpointCallback& on_checkpoint) {
  cfg.validate();
  const std::size_t n = cfg.particles;
  const Vec theta = layer_widths(precond, cfg.theta_scale);
  std::vector<TrajectoryState> particles(n, TrajectoryState::start(0.0, x0, theta, false));
  std::vector<std::uint64_t> version(n, 0);
  RandomStream clone_rng = RandomStream::derive(cfg.seed, kCloneStream, 0);
  RunResult result;
  const auto times = cfg.checkpoint_times();

  struct Entry {
    double time;
    std::size_t k;
    std::uint64_t version;
    bool operator>(const Entry& o) const { return time != o.time ? time > o.time : k > o.k; }
  };

  for (std::size_t i = 0; i < times.size(); ++i) {
    const double until = times[i];
    std::vector<RandomStream> rngs;
    rngs.reserve(n);
    for (std::size_t k = 0; k < n; ++k) rngs.push_back(RandomStream::derive(cfg.seed, k, i + 1));
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    auto schedule = [&](std::size_t k) {
      double t = kbm_pending_time(particles[k], phi, precond, rngs[k], cfg.kbm);
      heap.push({t, k, ++version[k]});
    };
    for (std::size_t k = 0; k < n; ++k) schedule(k);

    while (!heap.empty() && heap.top().time < until) {
      Entry e = heap.top();
      heap.pop();
      if (e.version != version[e.k]) continue;
      TrajectoryState& p = particles[e.k];
      if (!kbm_resolve_pending(p, phi, precond, rngs[e.k], cfg.kbm)) {
        schedule(e.k);
        continue;
      }
      // Killed: restart from a uniformly chosen other particle's state now.
      std::size_t donor = clone_rng.index(n - 1);
      if (donor >= e.k) ++donor;
      const double kill_time = p.time();
      const Vec& donor_state = kbm_move_to(particles[donor], precond, kill_time, rngs[donor]);
      CostCounters kept = p.counters;
      p = TrajectoryState::start(kill_time, donor_state, theta, false);
      p.counters = kept;
      schedule(donor);
      schedule(e.k);
    }

    CheckpointRecord rec;
    rec.time = until;
    rec.states.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      ++version[k];
      rec.states.push_back(kbm_move_to(particles[k], precond, until, rngs[k]));
      particles[k].skeleton.truncate_history();
      rec.counters += particles[k].counters;
      particles[k].counters = {};
    }
    rec.weights.assign(n, 1.0 / static_cast<double>(n));
    rec.ess = static_cast<double>(n);
    result.total += rec.counters;
    if (on_checkpoint) on_checkpoint(rec);
    result.records.push_back(std::move(rec));
  }
  return result;
}

RunResult run_engine(const RunConfig& cfg, const PhiProvider& phi, const Preconditioner& precond,
                     const Vec& x0, const CheckpointCallback& on_checkpoint) {
  return engine_rejects(cfg.engine) ? run_rejection(cfg, phi, precond, x0, on_checkpoint)
                                    : run_weighted(cfg, phi, precond, x0, on_checkpoint);
}

}  // namespace qsmc
