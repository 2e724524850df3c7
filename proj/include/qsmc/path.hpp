#pragma once

#include <optional>
#include <vector>

#include "qsmc/bessel.hpp"
#include "qsmc/fpt.hpp"
#include "qsmc/preconditioner.hpp"
#include "qsmc/rng.hpp"

namespace qsmc {

/// One hypercuboid layer between two stopping times.
struct LayerSegment {
  double t_lo = 0.0, t_hi = 0.0;
  Vec anchor;      // state at t_lo (box center)
  Vec exit_state;  // state at t_hi
  Vec box_lo, box_hi;
  Vec theta;
  std::optional<int> exit_dim;  // empty when the segment was cut at an evaluation time
};

struct EvalPoint {
  double time;
  Vec state;
};

/// A layer that has been opened but whose end has not been simulated yet.
/// Holds per-dimension first-passage information in state-space units.
struct ActiveLayer {
  double t_start = 0.0;
  Vec anchor, theta, box_lo, box_hi;
  Vec exit_time;                 // absolute first-passage time per dimension
  Eigen::VectorXi exit_sign;     // +-1 per dimension
  double tau_hat = 0.0;          // min over exit_time
  int exit_dim = 0;              // argmin, lowest index on ties
};

struct SimulationStats {
  FptStats fpt;
  BesselStats bessel;
  std::uint64_t layers = 0;
};

/// Exact finite representation of one trajectory, extended forward only.
struct PathSkeleton {
  double origin_time = 0.0;
  Vec origin_state;
  std::vector<LayerSegment> segments;
  std::vector<EvalPoint> eval_points;
  double current_time = 0.0;
  Vec current_state;
  std::optional<ActiveLayer> active;
  bool keep_history = true;

  static PathSkeleton start(double t, const Vec& x, bool keep_history = true);
  /// Drop recorded history; the current point and any open layer are kept.
  void truncate_history();
};

/// Opens a layer at the current point if none is open. Per-dimension
/// first-passage times use the Brownian scale sqrt(diag) and half-widths theta.
const ActiveLayer& ensure_layer(PathSkeleton& skel, const Preconditioner& precond,
                                const Vec& theta, RandomStream& rng,
                                SimulationStats* stats = nullptr);

/// Simulates the state at time t in (current_time, tau_hat] of the open layer,
/// closes the layer and records the segment and evaluation point. t equal to
/// the current time returns the current state and keeps the layer open. At t = tau_hat
/// the exiting dimension sits on its barrier; all others come from Bessel bridges.
const Vec& move_within_layer(PathSkeleton& skel, const Preconditioner& precond, double t,
                             RandomStream& rng, SimulationStats* stats = nullptr);

/// Extends the skeleton until it covers t and returns the state at t.
const Vec& advance_constrained_path(PathSkeleton& skel, const Preconditioner& precond,
                                    const Vec& theta, double t, RandomStream& rng,
                                    SimulationStats* stats = nullptr);

}  // namespace qsmc
