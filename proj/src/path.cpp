#include "qsmc/path.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qsmc/errors.hpp"

namespace qsmc {

Preconditioner Preconditioner::identity(int d) { return from_diag(Vec::Ones(d)); }

Preconditioner Preconditioner::from_diag(const Vec& diag) {
  if ((diag.array() <= 0.0).any() || !diag.allFinite())
    throw ConfigError("preconditioner entries must be finite and > 0");
  Preconditioner p;
  p.diag = diag;
  p.sqrt_diag = diag.array().sqrt();
  return p;
}

Preconditioner Preconditioner::scaled(const Vec& base, double n) {
  Preconditioner p = from_diag(base / n);
  p.n_scaling = n;
  return p;
}

PathSkeleton PathSkeleton::start(double t, const Vec& x, bool keep_history) {
  PathSkeleton s;
  s.origin_time = t;
  s.origin_state = x;
  s.current_time = t;
  s.current_state = x;
  s.keep_history = keep_history;
  if (keep_history) s.eval_points.push_back({t, x});
  return s;
}

void PathSkeleton::truncate_history() {
  segments.clear();
  eval_points.clear();
  origin_time = current_time;
  origin_state = current_state;
}

const ActiveLayer& ensure_layer(PathSkeleton& skel, const Preconditioner& precond,
                                const Vec& theta, RandomStream& rng, SimulationStats* stats) {
  if (skel.active) return *skel.active;
  const int d = static_cast<int>(skel.current_state.size());
  if (theta.size() != d || precond.dim() != d)
    throw std::invalid_argument("ensure_layer: dimension mismatch");
  ActiveLayer a;
  a.t_start = skel.current_time;
  a.anchor = skel.current_state;
  a.theta = theta;
  a.box_lo = a.anchor - theta;
  a.box_hi = a.anchor + theta;
  a.exit_time.resize(d);
  a.exit_sign.resize(d);
  for (int j = 0; j < d; ++j) {
    if (!(theta[j] > 0.0)) throw std::invalid_argument("ensure_layer: theta must be > 0");
    double level = theta[j] / precond.sqrt_diag[j];
    UnitFpt u = sample_unit_fpt(rng, stats ? &stats->fpt : nullptr);
    a.exit_time[j] = a.t_start + level * level * u.tau_bar;
    a.exit_sign[j] = u.sign;
  }
  a.exit_dim = 0;
  for (int j = 1; j < d; ++j)
    if (a.exit_time[j] < a.exit_time[a.exit_dim]) a.exit_dim = j;
  a.tau_hat = a.exit_time[a.exit_dim];
  if (!(a.tau_hat > a.t_start)) throw NumericFault("ensure_layer: degenerate first-passage time");
  if (stats) ++stats->layers;
  skel.active = std::move(a);
  return *skel.active;
}

const Vec& move_within_layer(PathSkeleton& skel, const Preconditioner& precond, double t,
                             RandomStream& rng, SimulationStats* stats) {
  if (!skel.active) throw std::logic_error("move_within_layer: no open layer");
  const ActiveLayer& a = *skel.active;
  if (!(t >= a.t_start) || t > a.tau_hat)
    throw std::invalid_argument("move_within_layer: time outside the open layer");
  // An Exp gap below the resolution of the current time lands here.
  if (t == a.t_start) return skel.current_state;
  const int d = static_cast<int>(a.anchor.size());
  Vec x(d);
  for (int j = 0; j < d; ++j) {
    if (t >= a.exit_time[j]) {
      x[j] = a.anchor[j] + a.exit_sign[j] * a.theta[j];
      continue;
    }
    double level = a.theta[j] / precond.sqrt_diag[j];
    double w = sample_bessel_bridge_point(0.0, a.exit_time[j] - a.t_start, 0.0,
                                          a.exit_sign[j] * level, level, t - a.t_start, rng,
                                          stats ? &stats->bessel : nullptr);
    x[j] = std::clamp(a.anchor[j] + precond.sqrt_diag[j] * w, a.box_lo[j], a.box_hi[j]);
  }
  if (skel.keep_history) {
    LayerSegment seg;
    seg.t_lo = a.t_start;
    seg.t_hi = t;
    seg.anchor = a.anchor;
    seg.exit_state = x;
    seg.box_lo = a.box_lo;
    seg.box_hi = a.box_hi;
    seg.theta = a.theta;
    if (t == a.tau_hat) seg.exit_dim = a.exit_dim;
    skel.segments.push_back(std::move(seg));
    skel.eval_points.push_back({t, x});
  }
  skel.current_time = t;
  skel.current_state = std::move(x);
  skel.active.reset();
  return skel.current_state;
}

const Vec& advance_constrained_path(PathSkeleton& skel, const Preconditioner& precond,
                                    const Vec& theta, double t, RandomStream& rng,
                                    SimulationStats* stats) {
  if (t < skel.current_time)
    throw std::invalid_argument("advance_constrained_path: cannot move backwards");
  while (skel.current_time < t) {
    const ActiveLayer& a = ensure_layer(skel, precond, theta, rng, stats);
    move_within_layer(skel, precond, std::min(t, a.tau_hat), rng, stats);
  }
  return skel.current_state;
}

}  // namespace qsmc
