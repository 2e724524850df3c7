#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "qsmc/errors.hpp"
#include "qsmc/fpt.hpp"

using namespace qsmc;

TEST_CASE("envelope constants at the default splice point") {
  const auto& c = unit_fpt_constants();
  CHECK(c.t_star == 0.64);
  CHECK(std::abs(c.M1 - 0.422599) < 5e-7);
  CHECK(std::abs(c.M2 - 0.578103) < 5e-7);
  CHECK(c.M == doctest::Approx(c.M1 + c.M2));
  CHECK_THROWS_AS(compute_unit_fpt_constants(0.05), ConfigError);
  CHECK_THROWS_AS(compute_unit_fpt_constants(5.0), ConfigError);
}

TEST_CASE("series oracle agrees with the image form") {
  for (double t : {0.05, 0.2, 0.5, 1.0, 2.0, 4.0}) {
    CHECK(oracle::fpt_series_cdf(t) == doctest::Approx(oracle::fpt_images_cdf(t)).epsilon(1e-10));
    CHECK(oracle::fpt_series_density(t) ==
          doctest::Approx(oracle::fpt_images_density(t)).epsilon(1e-8));
  }
}

TEST_CASE("density bounds bracket the density and tighten") {
  for (double t : {0.02, 0.1, 0.3, 0.64, 0.65, 1.0, 2.5, 6.0}) {
    const double f = t < 0.5 ? oracle::fpt_images_density(t) : oracle::fpt_series_density(t);
    double prev_lo = -1.0, prev_hi = 1e300;
    for (int n = 0; n < 8; ++n) {
      auto [lo, hi] = unit_fpt_density_bounds(t, n);
      CHECK(lo <= f * (1 + 1e-12) + 1e-300);
      CHECK(hi >= f * (1 - 1e-12));
      CHECK(lo >= prev_lo - 1e-15);
      CHECK(hi <= prev_hi + 1e-15);
      prev_lo = lo;
      prev_hi = hi;
    }
    CHECK(unit_fpt_density_bounds(t, 0).second <= unit_fpt_envelope(t) * (1 + 1e-12));
  }
}

TEST_CASE("proposal branches split by mass") {
  RandomStream rng(3);
  int first = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    int branch = 0;
    double t = propose_unit_fpt_time(rng, &branch);
    CHECK(t > 0.0);
    if (branch == 1) {
      ++first;
      CHECK(t <= 0.64);
    } else {
      CHECK(t > 0.64);
    }
  }
  const auto& c = unit_fpt_constants();
  CHECK(std::abs(first / double(n) - c.M1 / c.M) < 0.006);
}

TEST_CASE("unit first-passage draws match the series law") {
  RandomStream rng(11);
  FptStats stats;
  std::vector<double> taus;
  int plus = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    auto u = sample_unit_fpt(rng, &stats);
    taus.push_back(u.tau_bar);
    plus += u.sign > 0;
  }
  auto est = oracle::mean_se(taus);
  CHECK(std::abs(est.mean - 1.0) < 4 * est.se);
  CHECK(std::abs(plus / double(n) - 0.5) < 0.005);
  CHECK(oracle::ks_distance(taus, [](double t) { return oracle::fpt_series_cdf(t); }) < 0.005);
  CHECK(stats.draws == std::uint64_t(n));
  CHECK(double(stats.refinements) / stats.proposals <= 3.0);
}

TEST_CASE("scaled first passage") {
  RandomStream rng(5);
  std::vector<double> taus;
  for (int i = 0; i < 50000; ++i) {
    auto fp = sample_fpt(1.5, 2.0, rng);
    CHECK(std::abs(fp.endpoint - (1.5 + fp.endpoint_sign * 2.0)) < 1e-12);
    taus.push_back(fp.tau);
  }
  auto est = oracle::mean_se(taus);
  CHECK(std::abs(est.mean - 4.0) < 4 * est.se);
}

TEST_CASE("same seed, same draws") {
  RandomStream a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(sample_unit_fpt(a).tau_bar == sample_unit_fpt(b).tau_bar);
}
