#pragma once

#include <cstdint>
#include <utility>

#include "qsmc/rng.hpp"

namespace qsmc {

/// Bounds (after n refinements) on the probability that a Bessel-bridge
/// proposal through W_q stays inside [W_s - theta, W_s + theta], for Brownian
/// motion started at (s, W_s) whose first exit from that interval is
/// (tau, W_tau). Both values are clipped to [0, 1].
std::pair<double, double> bessel_acceptance_bounds(int n, double s, double q, double tau,
                                                   double W_s, double W_q, double W_tau,
                                                   double theta);

struct BesselStats {
  std::uint64_t proposals = 0;
  std::uint64_t refinements = 0;
};

/// Exact draw of W_q given W_s, the exit (tau, W_tau) and s < q < tau.
double sample_bessel_bridge_point(double s, double tau, double W_s, double W_tau,
                                  double theta, double q, RandomStream& rng,
                                  BesselStats* stats = nullptr);

}  // namespace qsmc
