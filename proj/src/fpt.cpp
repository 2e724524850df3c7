#include "qsmc/fpt.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "qsmc/errors.hpp"

namespace qsmc {
namespace {

constexpr double kPi = std::numbers::pi;

double short_time_piece(double t) {
  if (t <= 0.0) return 0.0;
  return std::sqrt(2.0 / kPi) * std::pow(t, -1.5) * std::exp(-0.5 / t);
}

double long_time_piece(double t) { return 0.5 * kPi * std::exp(-kPi * kPi * t / 8.0); }

// Neumaier compensated accumulator.
struct CompensatedSum {
  double sum = 0.0, comp = 0.0;
  void add(double v) {
    double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

// k-th coefficient of the alternating series, already multiplied by pi.
double series_term(double t, int k, bool short_time) {
  double kh = k + 0.5;
  if (short_time)
    return kPi * std::pow(2.0 / (kPi * t), 1.5) * kh * std::exp(-2.0 * kh * kh / t);
  return kPi * kh * std::exp(-0.5 * kh * kh * kPi * kPi * t);
}

}  // namespace

UnitFptProposalConstants compute_unit_fpt_constants(double t_star) {
  const double lo = std::log(3.0) / (kPi * kPi), hi = 4.0 / std::log(3.0);
  if (!(t_star >= lo && t_star <= hi))
    throw ConfigError("t_star outside the splice window [log3/pi^2, 4/log3]");
  using boost::math::quadrature::gauss_kronrod;
  UnitFptProposalConstants c;
  c.t_star = t_star;
  c.M1 = gauss_kronrod<double, 61>::integrate(short_time_piece, 0.0, t_star, 15, 1e-14);
  c.M2 = gauss_kronrod<double, 61>::integrate(
      long_time_piece, t_star, std::numeric_limits<double>::infinity(), 15, 1e-14);
  c.M = c.M1 + c.M2;
  return c;
}

const UnitFptProposalConstants& unit_fpt_constants() {
  static const UnitFptProposalConstants c = compute_unit_fpt_constants(0.64);
  return c;
}

double unit_fpt_envelope(double t) {
  return t <= unit_fpt_constants().t_star ? short_time_piece(t) : long_time_piece(t);
}

double propose_unit_fpt_time(RandomStream& rng, int* branch) {
  const auto& c = unit_fpt_constants();
  if (rng.uniform() * c.M < c.M1) {
    if (branch) *branch = 1;
    for (int it = 0; it < kMaxOuterIterations; ++it) {
      double x = rng.exponential();
      double e = rng.exponential();
      if (x * x <= 2.0 * e / c.t_star) {
        double d = 1.0 + c.t_star * x;
        return c.t_star / (d * d);
      }
    }
    throw NumericFault("propose_unit_fpt_time: short-time branch exceeded iteration cap");
  }
  if (branch) *branch = 2;
  return c.t_star + 8.0 * rng.exponential() / (kPi * kPi);
}

std::pair<double, double> unit_fpt_density_bounds(double t, int n) {
  if (!(t > 0.0)) throw std::invalid_argument("unit_fpt_density_bounds: t must be > 0");
  if (n < 0) throw std::invalid_argument("unit_fpt_density_bounds: n must be >= 0");
  const bool short_time = t <= unit_fpt_constants().t_star;
  CompensatedSum s;
  for (int k = 0; k <= 2 * n; ++k) s.add((k % 2 == 0 ? 1.0 : -1.0) * series_term(t, k, short_time));
  double upper = s.value();
  s.add(-series_term(t, 2 * n + 1, short_time));
  double lower = s.value();
  double g = unit_fpt_envelope(t);
  upper = std::min(upper, g);
  lower = std::max(lower, 0.0);
  if (lower > upper) lower = upper;
  return {lower, upper};
}

UnitFpt sample_unit_fpt(RandomStream& rng, FptStats* stats) {
  for (int outer = 0; outer < kMaxOuterIterations; ++outer) {
    double t = propose_unit_fpt_time(rng);
    double ug = rng.uniform() * unit_fpt_envelope(t);
    if (stats) ++stats->proposals;
    for (int n = 0;; ++n) {
      if (n >= kMaxInnerIterations) {
        std::ostringstream os;
        os << "sample_unit_fpt: refinement cap exceeded at t=" << t << " u*g=" << ug;
        throw NumericFault(os.str());
      }
      auto [lo, hi] = unit_fpt_density_bounds(t, n);
      if (stats) ++stats->refinements;
      if (ug <= lo) {
        if (stats) ++stats->draws;
        return {t, rng.sign()};
      }
      if (ug >= hi) break;
    }
  }
  throw NumericFault("sample_unit_fpt: proposal cap exceeded");
}

FirstPassage sample_fpt(double start, double theta, RandomStream& rng, FptStats* stats) {
  if (!(theta > 0.0)) throw std::invalid_argument("sample_fpt: theta must be > 0");
  UnitFpt u = sample_unit_fpt(rng, stats);
  return {theta * theta * u.tau_bar, u.sign, theta, start + u.sign * theta};
}

}  // namespace qsmc
