#include "qsmc/bessel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>
#include <sstream>
#include <stdexcept>

#include "qsmc/errors.hpp"
#include "qsmc/fpt.hpp"

namespace qsmc {
namespace {

void check_inputs(double s, double q, double tau, double W_s, double W_tau, double theta) {
  if (!(s < q && q < tau)) throw std::invalid_argument("bessel bridge: need s < q < tau");
  if (!(theta > 0.0)) throw std::invalid_argument("bessel bridge: theta must be > 0");
  if (std::abs(std::abs(W_tau - W_s) - theta) > 1e-9 * (1.0 + theta))
    throw std::invalid_argument("bessel bridge: |W_tau - W_s| must equal theta");
}

// Smallest series index from which the image terms for an interval of width
// `width` over time dt decrease monotonically.
int monotone_start(double dt, double width) {
  return std::max(1, static_cast<int>(std::ceil(std::sqrt(dt + width * width) / (2.0 * width))));
}

// Partial sums for the Brownian bridge from W_s to W_s - delta over dt staying
// in W_s +- theta. `upper` selects which partial sum closes the bracket.
double bridge_stay(int n, bool upper, double dt, double delta, double theta) {
  const int jmax = monotone_start(dt, 2.0 * theta) + n - 1;
  double num = 1.0;
  for (int j = 1; j <= jmax; ++j) {
    double a = 2.0 * j - 1.0;
    num -= std::exp(-2.0 * theta * a * (a * theta - delta) / dt) +
           std::exp(-2.0 * theta * a * (a * theta + delta) / dt);
  }
  const int kmax = upper ? jmax : jmax - 1;
  for (int j = 1; j <= kmax; ++j) {
    num += std::exp(-4.0 * theta * j * (2.0 * theta * j - delta) / dt) +
           std::exp(-4.0 * theta * j * (2.0 * theta * j + delta) / dt);
  }
  return num;
}

// First leg [s, q], divided by the probability it avoids the exit side.
double first_leg(int n, bool upper, double dt, double delta, double theta, int m) {
  double den = -std::expm1(-2.0 * theta * (theta + m * delta) / dt);
  return bridge_stay(n, upper, dt, delta, theta) / den;
}

// Segment [q, tau]: the 3-d Bessel bridge from distance z to the extremum
// stays within distance 2*theta of it.
double second_leg(int n, bool upper, double dt, double z, double theta) {
  int kmax = monotone_start(dt, 2.0 * theta) + n;
  double sum = 1.0;
  for (int j = 1; j <= kmax; ++j) {
    double a = 4.0 * theta * j;
    double near = std::exp(-a * (2.0 * theta * j - z) / dt);
    if (j == kmax && !upper) {
      sum -= (a - z) / z * near;
    } else {
      // Pair of image terms combined to avoid cancellation for small z.
      double k = a * z / dt;
      double ratio = k > 1e-12 ? std::expm1(-2.0 * k) / k : -2.0;
      sum += near * (1.0 + std::exp(-2.0 * k) + (a * a / dt) * ratio);
    }
  }
  return sum;
}


// Eigen-series pieces on the band (0, L): the killed transition density and
// the density of leaving through L. Both come with explicit tail bounds, so a
// truncation at K terms gives a bracket.
struct Band {
  double L;
  double rate;  // pi^2 / (2 L^2)
};

// Sum over k > K of k^p exp(-c k^2), p in {0, 1}, bounded by a geometric tail.
double eigen_tail(int K, double c, int p) {
  const double r = std::exp(-c * (K + 1));
  if (r >= 1.0) return INFINITY;
  const double first = std::pow(r, K + 1);
  if (p == 0) return first / (1.0 - r);
  return first * ((K + 1) - K * r) / ((1.0 - r) * (1.0 - r));
}

std::pair<double, double> exit_density_bracket(const Band& b, double t, double x, int K) {
  const double c = b.rate * t, pi = std::numbers::pi;
  double sum = 0.0;
  for (int k = 1; k <= K; ++k)
    sum += (k % 2 ? 1.0 : -1.0) * k * std::sin(k * pi * x / b.L) * std::exp(-c * k * k);
  const double scale = pi / (b.L * b.L), tail = eigen_tail(K, c, 1);
  return {std::max(0.0, scale * (sum - tail)), scale * (sum + tail)};
}

double exit_density_max(const Band& b, double t) {
  const double c = b.rate * t;
  double sum = 0.0;
  for (int k = 1; k <= 20; ++k) sum += k * std::exp(-c * k * k);
  return std::numbers::pi / (b.L * b.L) * (sum + eigen_tail(20, c, 1));
}

std::pair<double, double> killed_kernel_bracket(const Band& b, double t, double x, double y,
                                                int K) {
  const double c = b.rate * t, pi = std::numbers::pi;
  double sum = 0.0;
  for (int k = 1; k <= K; ++k)
    sum += std::sin(k * pi * x / b.L) * std::sin(k * pi * y / b.L) * std::exp(-c * k * k);
  const double scale = 2.0 / b.L, tail = eigen_tail(K, c, 0);
  return {std::max(0.0, scale * (sum - tail)), scale * (sum + tail)};
}

double killed_kernel_max(const Band& b, double t) {
  const double c = b.rate * t;
  double sum = 0.0;
  for (int k = 1; k <= 20; ++k) sum += std::exp(-c * k * k);
  return 2.0 / b.L * (sum + eigen_tail(20, c, 0));
}

// Exit density through L at a short time t from distance d below L, divided
// by its leading image term, truncated at |k| <= K with a tail bound.
std::pair<double, double> exit_image_ratio_bracket(double L, double t, double d, int K) {
  auto term = [&](double c) { return std::abs(c) / d * std::exp(-(c * c - d * d) / (2.0 * t)); };
  double sum = 0.0;
  for (int k = -K; k <= K; ++k) {
    double a = d + 2.0 * k * L, b = 2.0 * L - d + 2.0 * k * L;
    sum += (a > 0 ? 1.0 : -1.0) * term(a) - (b > 0 ? 1.0 : -1.0) * term(b);
  }
  sum *= 0.5;
  const double c0 = (2.0 * K - 1.0) * L;
  const double tail = 2.0 * (term(c0) + t / (2.0 * L * d) * std::exp(-(c0 * c0 - d * d) / (2.0 * t)));
  return {std::max(0.0, sum - tail), sum + tail};
}

// Exact draw of W_q when tau - s is long compared with theta^2. The target is
// the killed kernel from W_s times the exit density from W_q. A short leg is
// proposed from its free law (Gaussian for the first, leading image term for
// the second); a long first leg uniformly over the band.
double sample_long_span(double s, double tau, double W_s, double W_tau, double theta,
                        double q, RandomStream& rng, BesselStats* stats) {
  const Band band{2.0 * theta, std::numbers::pi * std::numbers::pi / (8.0 * theta * theta)};
  const int m = W_tau > W_s ? 1 : -1;
  const double t1 = q - s, t2 = tau - q, th2 = theta * theta;
  const bool short_first = t1 <= th2, short_second = t2 <= th2;
  const double exit_max = short_second ? 1.0 : exit_density_max(band, t2);
  const double kernel_max = short_first ? 1.0 : killed_kernel_max(band, t1);
  for (int outer = 0; outer < kMaxOuterIterations; ++outer) {
    if (stats) ++stats->proposals;
    double y;
    if (short_second) {
      y = W_s + m * (theta - std::sqrt(-2.0 * t2 * std::log(rng.uniform())));
    } else if (short_first) {
      y = W_s + std::sqrt(t1) * rng.normal();
    } else {
      y = W_s - theta + band.L * rng.uniform();
    }
    const double x = y - (W_s - theta);  // band coordinate, lower edge at 0
    if (!(x > 0.0 && x < band.L)) continue;
    const double to_exit = m > 0 ? band.L - x : x;
    double u = rng.uniform();
    for (int n = 1;; ++n) {
      if (n > kMaxInnerIterations)
        throw NumericFault("sample_bessel_bridge_point: long-span refinement cap exceeded");
      if (stats) ++stats->refinements;
      double lo1, hi1, lo2, hi2;
      if (short_first) {
        lo1 = std::clamp(bridge_stay(n, false, t1, W_s - y, theta), 0.0, 1.0);
        hi1 = std::clamp(bridge_stay(n, true, t1, W_s - y, theta), 0.0, 1.0);
      } else {
        std::tie(lo1, hi1) = killed_kernel_bracket(band, t1, theta, x, n + 2);
      }
      if (short_second) {
        std::tie(lo2, hi2) = exit_image_ratio_bracket(band.L, t2, to_exit, n);
      } else {
        std::tie(lo2, hi2) = exit_density_bracket(band, t2, band.L - to_exit, n + 2);
      }
      const double norm = kernel_max * exit_max;
      if (u <= lo1 * lo2 / norm) return y;
      if (u > hi1 * hi2 / norm) break;
    }
  }
  throw NumericFault("sample_bessel_bridge_point: long-span proposal cap exceeded");
}

}  // namespace

std::pair<double, double> bessel_acceptance_bounds(int n, double s, double q, double tau,
                                                   double W_s, double W_q, double W_tau,
                                                   double theta) {
  check_inputs(s, q, tau, W_s, W_tau, theta);
  if (n < 1) throw std::invalid_argument("bessel_acceptance_bounds: n must be >= 1");
  const int m = W_tau > W_s ? 1 : -1;
  if (m * (W_q - W_s) > theta || m * (W_s - W_q) > theta)
    throw std::invalid_argument("bessel_acceptance_bounds: W_q outside the layer");
  if (m * (W_s - W_q) >= theta || W_q == W_tau) return {0.0, 0.0};
  const double delta1 = W_s - W_q, dt1 = q - s;
  const double z = std::abs(W_q - W_tau), dt2 = tau - q;
  double lo1 = std::clamp(first_leg(n, false, dt1, delta1, theta, m), 0.0, 1.0);
  double hi1 = std::clamp(first_leg(n, true, dt1, delta1, theta, m), 0.0, 1.0);
  double lo2 = std::clamp(second_leg(n, false, dt2, z, theta), 0.0, 1.0);
  double hi2 = std::clamp(second_leg(n, true, dt2, z, theta), 0.0, 1.0);
  double lo = lo1 * lo2, hi = hi1 * hi2;
  if (lo > hi) lo = hi;
  return {lo, hi};
}

double sample_bessel_bridge_point(double s, double tau, double W_s, double W_tau,
                                  double theta, double q, RandomStream& rng,
                                  BesselStats* stats) {
  check_inputs(s, q, tau, W_s, W_tau, theta);
  if (tau - s > 2.0 * theta * theta) return sample_long_span(s, tau, W_s, W_tau, theta, q, rng, stats);
  const int m = W_tau > W_s ? 1 : -1;
  const double span = tau - s;
  const double sd = std::sqrt((tau - q) * (q - s)) / span;
  const double mean = theta * (tau - q) / std::pow(span, 1.5);
  for (int outer = 0; outer < kMaxOuterIterations; ++outer) {
    double b1 = mean + sd * rng.normal(), b2 = sd * rng.normal(), b3 = sd * rng.normal();
    double dist = std::sqrt(span * (b1 * b1 + b2 * b2 + b3 * b3));
    double W_q = W_tau - m * dist;
    if (stats) ++stats->proposals;
    if (m * (W_s - W_q) >= theta) continue;
    double u = rng.uniform();
    for (int n = 1;; ++n) {
      if (n > kMaxInnerIterations) {
        std::ostringstream os;
        os << "sample_bessel_bridge_point: refinement cap exceeded (s=" << s << " q=" << q
           << " tau=" << tau << " W_s=" << W_s << " W_q=" << W_q << " W_tau=" << W_tau
           << " theta=" << theta << " u=" << u << ")";
        throw NumericFault(os.str());
      }
      auto [lo, hi] = bessel_acceptance_bounds(n, s, q, tau, W_s, W_q, W_tau, theta);
      if (stats) ++stats->refinements;
      if (u <= lo) return W_q;
      if (u > hi) break;
    }
  }
  std::ostringstream os;
  os << "sample_bessel_bridge_point: proposal cap exceeded (s=" << s << " q=" << q
     << " tau=" << tau << " W_s=" << W_s << " W_tau=" << W_tau << " theta=" << theta << ")";
  throw NumericFault(os.str());
}

}  // namespace qsmc
