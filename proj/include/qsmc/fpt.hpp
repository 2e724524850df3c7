#pragma once

#include <cstdint>
#include <utility>

#include "qsmc/rng.hpp"

namespace qsmc {

/// Splice point and masses of the two-piece envelope for the first-passage
/// density of standard Brownian motion through +-1.
struct UnitFptProposalConstants {
  double t_star = 0.64;
  double M1 = 0.0;  // mass of the short-time piece on (0, t_star]
  double M2 = 0.0;  // mass of the long-time piece on (t_star, inf)
  double M = 0.0;
};

/// Computes M1 and M2 for a given splice point by adaptive quadrature.
/// t_star must lie in [log(3)/pi^2, 4/log(3)].
UnitFptProposalConstants compute_unit_fpt_constants(double t_star);

/// The constants for t_star = 0.64, computed once on first use.
const UnitFptProposalConstants& unit_fpt_constants();

/// Unnormalized envelope g(t) (integrates to M).
double unit_fpt_envelope(double t);

/// One draw from the normalized envelope g/M. If branch is non-null it
/// receives 1 for the short-time piece and 2 for the long-time piece.
double propose_unit_fpt_time(RandomStream& rng, int* branch = nullptr);

/// Lower and upper bounds on the first-passage density at t after n
/// refinements. Lower is clipped at 0, upper at the envelope.
std::pair<double, double> unit_fpt_density_bounds(double t, int n);

struct FptStats {
  std::uint64_t draws = 0;
  std::uint64_t proposals = 0;
  std::uint64_t refinements = 0;  // bound evaluations, summed over proposals
};

struct UnitFpt {
  double tau_bar;
  int sign;
};

/// Exact draw of the exit time of standard BM from (-1, 1) and the side hit.
UnitFpt sample_unit_fpt(RandomStream& rng, FptStats* stats = nullptr);

struct FirstPassage {
  double tau;         // elapsed time until |W_t - W_0| = level
  int endpoint_sign;  // +1 upper barrier, -1 lower barrier
  double level;
  double endpoint;    // start + endpoint_sign * level
};

/// First passage of a standard BM started at `start` through start +- theta.
FirstPassage sample_fpt(double start, double theta, RandomStream& rng,
                        FptStats* stats = nullptr);

inline constexpr int kMaxOuterIterations = 1000000;
inline constexpr int kMaxInnerIterations = 1000;

}  // namespace qsmc
