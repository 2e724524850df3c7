#include "qsmc/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qsmc/errors.hpp"

namespace qsmc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double tolerance(const PhiBounds& b) {
  return 1e-9 * (1.0 + std::abs(b.upper) + std::abs(b.lower));
}

[[noreturn]] void bound_violation(const char* where, double phi, const PhiBounds& b,
                                  const Vec& x) {
  std::ostringstream os;
  os << where << ": rate " << phi << " outside layer bounds [" << b.lower << ", " << b.upper
     << "] at x = " << x.transpose();
  throw NumericFault(os.str());
}

const ActiveLayer& open_layer(TrajectoryState& traj, const Preconditioner& precond,
                              RandomStream& rng) {
  if (!traj.skeleton.active) ++traj.counters.layers;
  return ensure_layer(traj.skeleton, precond, traj.theta, rng);
}

}  // namespace

TrajectoryState TrajectoryState::start(double t, const Vec& x, const Vec& theta,
                                       bool keep_history) {
  TrajectoryState s;
  s.skeleton = PathSkeleton::start(t, x, keep_history);
  s.theta = theta;
  return s;
}

Vec layer_widths(const Preconditioner& precond, double theta_scale) {
  if (!(theta_scale > 0.0)) throw ConfigError("theta_scale must be > 0");
  return theta_scale * precond.sqrt_diag;
}

void is_kbm_advance(TrajectoryState& traj, const PhiProvider& phi, const Preconditioner& precond,
                    double until, RandomStream& rng, double rate_fraction) {
  if (until < traj.time()) throw std::invalid_argument("is_kbm_advance: until is in the past");
  if (!(rate_fraction > 0.0)) throw std::invalid_argument("is_kbm_advance: rate_fraction <= 0");
  if (!traj.alive) return;
  while (traj.time() < until) {
    const ActiveLayer& layer = open_layer(traj, precond, rng);
    PhiBounds b = phi.bounds(layer.box_lo, layer.box_hi, traj.counters);
    if (!(b.upper >= b.lower)) throw NumericFault("is_kbm_advance: layer bounds with upper < lower");
    double rate = rate_fraction * (b.upper - b.lower);
    double candidate = rate > 0.0 ? traj.time() + rng.exponential(rate) : kInf;
    double next = std::min({candidate, layer.tau_hat, until});
    bool is_event = candidate < layer.tau_hat && candidate < until;
    const double decay = rate_fraction == 1.0 ? b.lower : b.upper - rate;
    traj.log_weight -= decay * (next - traj.time());
    const Vec& x = move_within_layer(traj.skeleton, precond, next, rng);
    if (!is_event) continue;
    ++traj.event_count;
    ++traj.counters.events;
    double value = phi.evaluate(x, rng, traj.counters);
    double tol = tolerance(b);
    if (value > b.upper + tol || value < b.lower - tol || !std::isfinite(value))
      bound_violation("is_kbm_advance", value, b, x);
    double factor = std::max((b.upper - value) / rate, 0.0);
    if (factor == 0.0) {
      traj.log_weight = -kInf;
      traj.alive = false;
      return;
    }
    traj.log_weight += std::log(factor);
  }
}

double kbm_pending_time(TrajectoryState& traj, const PhiProvider& phi,
                        const Preconditioner& precond, RandomStream& rng,
                        const KbmOptions& opts) {
  (void)opts;
  if (traj.pending) return traj.pending->time;
  if (!traj.alive) throw std::logic_error("kbm_pending_time: trajectory already killed");
  const ActiveLayer& layer = open_layer(traj, precond, rng);
  PhiBounds b = phi.bounds(layer.box_lo, layer.box_hi, traj.counters);
  const double floor = phi.global_lower();
  if (b.lower < floor - tolerance(b)) {
    std::ostringstream os;
    os << "kbm: layer lower bound " << b.lower << " is below the global floor " << floor
       << " on box [" << layer.box_lo.transpose() << "] - [" << layer.box_hi.transpose() << "]";
    throw NumericFault(os.str());
  }
  double rate = b.upper - floor;
  double candidate = rate > 0.0 ? traj.time() + rng.exponential(rate) : kInf;
  PendingKill p;
  p.bounds = b;
  p.is_event = candidate < layer.tau_hat;
  p.time = std::min(candidate, layer.tau_hat);
  traj.pending = p;
  return p.time;
}

bool kbm_resolve_pending(TrajectoryState& traj, const PhiProvider& phi,
                         const Preconditioner& precond, RandomStream& rng,
                         const KbmOptions& opts) {
  if (!traj.pending) throw std::logic_error("kbm_resolve_pending: nothing pending");
  PendingKill p = *traj.pending;
  traj.pending.reset();
  const Vec& x = move_within_layer(traj.skeleton, precond, p.time, rng);
  if (!p.is_event) return false;
  ++traj.event_count;
  ++traj.counters.events;
  const PhiBounds& b = p.bounds;
  const double floor = phi.global_lower();
  const double tol = tolerance(b);
  bool killed;
  if (opts.use_layer_lower) {
    double lower = std::max(b.lower, floor);
    double u = rng.uniform() * (b.upper - floor);
    if (u < lower - floor) {
      killed = true;
    } else {
      double value = phi.evaluate(x, rng, traj.counters);
      if (value > b.upper + tol || value < b.lower - tol || !std::isfinite(value))
        bound_violation("kbm_kill", value, b, x);
      killed = u < value - floor;
    }
  } else {
    double value = phi.evaluate(x, rng, traj.counters);
    if (value > b.upper + tol || value < floor - tol || !std::isfinite(value))
      bound_violation("kbm_kill", value, b, x);
    double survive = (b.upper - value) / (b.upper - floor);
    killed = rng.uniform() > survive;
  }
  if (killed) {
    traj.alive = false;
    ++traj.counters.kills;
  }
  return killed;
}

const Vec& kbm_move_to(TrajectoryState& traj, const Preconditioner& precond, double t,
                       RandomStream& rng) {
  if (traj.pending && t > traj.pending->time)
    throw std::invalid_argument("kbm_move_to: target is beyond the pending event");
  traj.pending.reset();
  if (t == traj.time()) return traj.state();
  return advance_constrained_path(traj.skeleton, precond, traj.theta, t, rng);
}

KillRecord kbm_kill(double t0, const Vec& x0, const PhiProvider& phi,
                    const Preconditioner& precond, const Vec& theta, RandomStream& rng,
                    const KbmOptions& opts, CostCounters* counters) {
  TrajectoryState traj = TrajectoryState::start(t0, x0, theta);
  for (;;) {
    kbm_pending_time(traj, phi, precond, rng, opts);
    if (kbm_resolve_pending(traj, phi, precond, rng, opts)) break;
  }
  if (counters) *counters += traj.counters;
  KillRecord r;
  r.kill_time = traj.time();
  r.kill_state = traj.state();
  r.skeleton = std::move(traj.skeleton);
  return r;
}

PrsResult prs_sample_k(const Vec& x0, double horizon, const PhiProvider& phi,
                       const Preconditioner& precond, const Vec& theta, RandomStream& rng,
                       CostCounters* counters) {
  if (!(horizon > 0.0)) throw std::invalid_argument("prs_sample_k: horizon must be > 0");
  TrajectoryState traj = TrajectoryState::start(0.0, x0, theta);
  const double floor = phi.global_lower();
  PrsResult res;
  double layer_mass = 0.0;
  while (traj.time() < horizon) {
    const ActiveLayer& layer = open_layer(traj, precond, rng);
    PhiBounds b = phi.bounds(layer.box_lo, layer.box_hi, traj.counters);
    double rate = b.upper - b.lower;
    if (!(rate >= 0.0)) throw NumericFault("prs_sample_k: layer bounds with upper < lower");
    if (b.lower < floor - tolerance(b)) throw NumericFault("prs_sample_k: layer below floor");
    double candidate = rate > 0.0 ? traj.time() + rng.exponential(rate) : kInf;
    double next = std::min({candidate, layer.tau_hat, horizon});
    bool is_event = candidate < layer.tau_hat && candidate < horizon;
    layer_mass += (b.lower - floor) * (next - traj.time());
    const Vec& x = move_within_layer(traj.skeleton, precond, next, rng);
    if (!is_event) continue;
    ++traj.counters.events;
    double value = phi.evaluate(x, rng, traj.counters);
    if (value > b.upper + tolerance(b) || value < b.lower - tolerance(b))
      bound_violation("prs_sample_k", value, b, x);
    res.event_probs.push_back(std::clamp((b.upper - value) / rate, 0.0, 1.0));
  }
  if (counters) *counters += traj.counters;
  res.log_p_layers = -layer_mass;
  res.skeleton = std::move(traj.skeleton);
  if (rng.uniform() > std::exp(res.log_p_layers)) {
    res.rejected_stage = 1;
    return res;
  }
  for (double p : res.event_probs) {
    if (rng.uniform() > p) {
      res.rejected_stage = 2;
      return res;
    }
  }
  res.accepted = true;
  return res;
}

}  // namespace qsmc
