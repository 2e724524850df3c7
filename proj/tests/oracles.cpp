#include "oracles.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oracle {
namespace {

constexpr double kPi = std::numbers::pi;

double gauss(double x, double var) {
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * kPi * var);
}

// Heat kernel on (0, L) killed at both ends.
double killed_kernel(double t, double x, double y, double L) {
  if (t > L * L) {
    // Images cancel catastrophically at long times; the eigen expansion does not.
    double s = 0.0;
    for (int k = 1; k <= 60; ++k)
      s += std::sin(k * kPi * x / L) * std::sin(k * kPi * y / L) *
           std::exp(-k * k * kPi * kPi * t / (2.0 * L * L));
    return std::max(2.0 / L * s, 0.0);
  }
  double s = 0.0;
  for (int k = -12; k <= 12; ++k)
    s += gauss(y - x + 2.0 * k * L, t) - gauss(y + x + 2.0 * k * L, t);
  return std::max(s, 0.0);
}

// Density of exiting (0, L) through L at time t, from y.
double exit_density_upper(double t, double y, double L) {
  if (t > L * L) {
    double s = 0.0;
    for (int k = 1; k <= 60; ++k)
      s += (k % 2 ? 1.0 : -1.0) * k * std::sin(k * kPi * y / L) *
           std::exp(-k * k * kPi * kPi * t / (2.0 * L * L));
    return std::max(kPi / (L * L) * s, 0.0);
  }
  double s = 0.0;
  for (int k = -12; k <= 12; ++k) {
    double a = L - y + 2.0 * k * L, b = L + y + 2.0 * k * L;
    s += a / t * gauss(a, t) - b / t * gauss(b, t);
  }
  return std::max(0.5 * s, 0.0);
}

}  // namespace

double fpt_series_cdf(double t, int terms) {
  if (t <= 0.0) return 0.0;
  double s = 0.0;
  for (int k = 0; k < terms; ++k) {
    double a = 2.0 * k + 1.0;
    double e = std::exp(-a * a * kPi * kPi * t / 8.0);
    if (e == 0.0) break;  // every later term underflows too
    s += (k % 2 ? -1.0 : 1.0) / a * e;
  }
  return 1.0 - 4.0 / kPi * s;
}

double fpt_images_cdf(double t, int terms) {
  if (t <= 0.0) return 0.0;
  double s = 0.0;
  for (int k = 0; k < terms; ++k)
    s += (k % 2 ? -1.0 : 1.0) * std::erfc((2.0 * k + 1.0) / std::sqrt(2.0 * t));
  return 2.0 * s;
}

double fpt_series_density(double t, int terms) {
  if (t <= 0.0) return 0.0;
  double s = 0.0;
  for (int k = 0; k < terms; ++k) {
    double a = 2.0 * k + 1.0;
    s += (k % 2 ? -1.0 : 1.0) * a * std::exp(-a * a * kPi * kPi * t / 8.0);
  }
  return kPi / 2.0 * s;
}

double fpt_images_density(double t, int terms) {
  if (t <= 0.0) return 0.0;
  double s = 0.0;
  for (int k = 0; k < terms; ++k) {
    double a = 2.0 * k + 1.0;
    s += (k % 2 ? -1.0 : 1.0) * a * std::exp(-a * a / (2.0 * t));
  }
  return 2.0 * s / std::sqrt(2.0 * kPi * t * t * t);
}

double constrained_bridge_density(double s, double q, double tau, double W_s, double W_tau,
                                  double theta, double y) {
  // Shift to (0, L) with the exit at L.
  const double L = 2.0 * theta;
  const bool upper = W_tau > W_s;
  const double u = upper ? y - (W_s - theta) : (W_s + theta) - y;
  if (u <= 0.0 || u >= L) return 0.0;
  return killed_kernel(q - s, theta, u, L) * exit_density_upper(tau - q, u, L);
}

std::vector<double> constrained_bridge_bin_probs(double s, double q, double tau, double W_s,
                                                 double W_tau, double theta,
                                                 const std::vector<double>& edges) {
  const int per_bin = 400;
  std::vector<double> probs(edges.size() - 1, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    const double h = (edges[b + 1] - edges[b]) / per_bin;
    double acc = 0.0;
    for (int i = 0; i <= per_bin; ++i) {
      double w = (i == 0 || i == per_bin) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += w * constrained_bridge_density(s, q, tau, W_s, W_tau, theta, edges[b] + i * h);
    }
    probs[b] = acc * h / 3.0;
    total += probs[b];
  }
  for (double& p : probs) p /= total;
  return probs;
}

Estimate feynman_kac_euler(const std::function<double(double)>& rate, double x0, double scale,
                           double horizon, double dt, int paths, qsmc::RandomStream& rng) {
  const int steps = static_cast<int>(std::lround(horizon / dt));
  const double sd = std::sqrt(scale * dt);
  std::vector<double> vals(paths);
  for (int p = 0; p < paths; ++p) {
    double x = x0, prev = rate(x), integral = 0.0;
    for (int i = 0; i < steps; ++i) {
      x += sd * rng.normal();
      double cur = rate(x);
      integral += 0.5 * (prev + cur) * dt;
      prev = cur;
    }
    vals[p] = std::exp(-integral);
  }
  return mean_se(vals);
}

double feynman_kac_quadratic(double x0, double horizon) {
  return std::exp(-0.5 * x0 * x0 * std::tanh(horizon)) / std::sqrt(std::cosh(horizon));
}

double chi_square_pvalue(const std::vector<double>& counts, const std::vector<double>& probs) {
  if (counts.size() != probs.size()) throw std::invalid_argument("chi_square: size mismatch");
  double n = 0.0;
  for (double c : counts) n += c;
  double stat = 0.0, oc = 0.0, ep = 0.0;
  int cells = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    oc += counts[i];
    ep += probs[i];
    bool last = i + 1 == counts.size();
    if (n * ep >= 5.0 || last) {
      if (n * ep > 0.0) {
        stat += (oc - n * ep) * (oc - n * ep) / (n * ep);
        ++cells;
      }
      oc = ep = 0.0;
    }
  }
  if (cells < 2) throw std::invalid_argument("chi_square: fewer than two usable cells");
  boost::math::chi_squared dist(cells - 1);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    d = std::max({d, f - i / n, (i + 1) / n - f});
  }
  return d;
}

Estimate mean_se(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double m = 0.0;
  for (double v : values) m += v;
  m /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace oracle
