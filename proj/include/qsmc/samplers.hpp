#pragma once

#include <optional>
#include <vector>

#include "qsmc/path.hpp"
#include "qsmc/potential.hpp"

namespace qsmc {

/// Next candidate time of a killed trajectory: a Poisson event inside the open
/// layer, or the layer's exit time.
struct PendingKill {
  double time = 0.0;
  bool is_event = false;
  PhiBounds bounds;
};

struct TrajectoryState {
  PathSkeleton skeleton;
  Vec theta;  // layer half-widths in state-space units
  double log_weight = 0.0;
  bool alive = true;
  std::uint64_t event_count = 0;
  CostCounters counters;
  std::optional<PendingKill> pending;

  static TrajectoryState start(double t, const Vec& x, const Vec& theta,
                               bool keep_history = true);
  double time() const { return skeleton.current_time; }
  const Vec& state() const { return skeleton.current_state; }
};

/// Layer half-widths c * sqrt(Lambda_jj).
Vec layer_widths(const Preconditioner& precond, double theta_scale);

/// Advances an importance-weighted trajectory to exactly `until`. With event
/// rate r = rate_fraction * (U - L), each layer contributes exp(-(U - r) dt) and
/// each Poisson event strictly inside a layer and before `until` multiplies the
/// weight by (U - phi)/r. The default fraction 1 gives exp(-L dt) and
/// (U - phi)/(U - L). Any fraction is unbiased; 0.5 decays at the band midpoint,
/// which removes the event-count noise when phi sits mid-band.
void is_kbm_advance(TrajectoryState& traj, const PhiProvider& phi, const Preconditioner& precond,
                    double until, RandomStream& rng, double rate_fraction = 1.0);

struct KbmOptions {
  /// Kill at rate L - floor without evaluating phi, and thin only U - L.
  bool use_layer_lower = false;
};

struct KillRecord {
  double kill_time = 0.0;
  Vec kill_state;
  PathSkeleton skeleton;
};

/// Time of the trajectory's next candidate kill; opens a layer and draws the
/// Poisson clock if nothing is pending.
double kbm_pending_time(TrajectoryState& traj, const PhiProvider& phi,
                        const Preconditioner& precond, RandomStream& rng,
                        const KbmOptions& opts = {});

/// Moves to the pending time and resolves it. Returns true if the trajectory
/// was killed there.
bool kbm_resolve_pending(TrajectoryState& traj, const PhiProvider& phi,
                         const Preconditioner& precond, RandomStream& rng,
                         const KbmOptions& opts = {});

/// Simulates the state at t (before the pending time), discarding the pending
/// clock. The Poisson clock is memoryless, so it is redrawn on the next call.
const Vec& kbm_move_to(TrajectoryState& traj, const Preconditioner& precond, double t,
                       RandomStream& rng);

/// Runs killed Brownian motion from (t0, x0) until it is killed.
KillRecord kbm_kill(double t0, const Vec& x0, const PhiProvider& phi,
                    const Preconditioner& precond, const Vec& theta, RandomStream& rng,
                    const KbmOptions& opts = {}, CostCounters* counters = nullptr);

struct PrsResult {
  bool accepted = false;
  int rejected_stage = 0;   // 1: layer-determined event, 2: a thinned Poisson event
  double log_p_layers = 0.0;
  std::vector<double> event_probs;
  PathSkeleton skeleton;
};

/// Path-space rejection sampler for killed Brownian motion on [0, T].
/// Restarting after a rejection is left to the caller.
PrsResult prs_sample_k(const Vec& x0, double horizon, const PhiProvider& phi,
                       const Preconditioner& precond, const Vec& theta, RandomStream& rng,
                       CostCounters* counters = nullptr);

}  // namespace qsmc
