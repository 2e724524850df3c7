#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "qsmc/errors.hpp"
#include "qsmc/smc.hpp"

using namespace qsmc;

TEST_CASE("ESS and resampling") {
  std::vector<double> uniform(10, 0.1);
  CHECK(effective_sample_size(uniform) == doctest::Approx(10.0));
  std::vector<double> w = {0.5, 0.25, 0.125, 0.125};
  RandomStream rng(1);
  for (auto kind : {Resampler::Systematic, Resampler::Multinomial}) {
    auto idx = resample_indices(w, kind, rng);
    CHECK(idx.size() == 4);
    for (auto i : idx) CHECK(i < 4);
  }
  // Systematic offspring counts are within one of N w_k.
  std::vector<double> w2 = {0.05, 0.3, 0.15, 0.5};
  for (int rep = 0; rep < 50; ++rep) {
    auto idx = resample_indices(w2, Resampler::Systematic, rng);
    for (int k = 0; k < 4; ++k) {
      double c = std::count(idx.begin(), idx.end(), std::size_t(k));
      CHECK(std::abs(c - 4 * w2[k]) < 1.0 + 1e-12);
    }
  }
}

TEST_CASE("weighted engine invariants") {
  auto model = testutil::gaussian_toy();
  auto pc = Preconditioner::identity(1);
  ExactPhiProvider phi(model, pc);
  RunConfig cfg;
  cfg.particles = 64;
  cfg.horizon = 3.0;
  cfg.checkpoint_gap = 0.25;
  cfg.ess_threshold = 0.7;
  auto res = run_weighted(cfg, phi, pc, Vec::Zero(1));
  REQUIRE(res.records.size() == 12);
  CHECK(res.records.back().time == 3.0);
  for (const auto& r : res.records) {
    double s = std::accumulate(r.weights.begin(), r.weights.end(), 0.0);
    CHECK(std::abs(s - 1.0) < 1e-12);
    CHECK(r.ess >= 1.0);
    CHECK(r.ess <= 64.0 + 1e-9);
    CHECK(r.resampled == (r.ess <= 0.7 * 64));
    CHECK(r.states.size() == 64);
  }
}

TEST_CASE("rejection engine keeps uniform weights and counts kills") {
  auto model = testutil::gaussian_toy();
  auto pc = Preconditioner::identity(1);
  ExactPhiProvider phi(model, pc);
  RunConfig cfg;
  cfg.engine = Engine::RQsmc;
  cfg.particles = 32;
  cfg.horizon = 2.0;
  cfg.checkpoint_gap = 0.5;
  auto res = run_rejection(cfg, phi, pc, testutil::vec({2.0}));
  CHECK(res.records.size() == 4);
  CHECK(res.total.kills > 0);
  for (const auto& r : res.records) CHECK(r.ess == 32.0);
  cfg.particles = 1;
  CHECK_THROWS_AS(run_rejection(cfg, phi, pc, Vec::Zero(1)), ConfigError);
}

TEST_CASE("parallel advancement is bitwise reproducible") {
  auto model = testutil::gaussian_toy();
  auto pc = Preconditioner::identity(1);
  ExactPhiProvider phi(model, pc);
  RunConfig cfg;
  cfg.particles = 50;
  cfg.horizon = 2.0;
  cfg.seed = 77;
  auto a = run_weighted(cfg, phi, pc, Vec::Zero(1));
  cfg.threads = 4;
  auto b = run_weighted(cfg, phi, pc, Vec::Zero(1));
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    for (std::size_t k = 0; k < 50; ++k) {
      CHECK(a.records[i].states[k][0] == b.records[i].states[k][0]);
      CHECK(a.records[i].weights[k] == b.records[i].weights[k]);
    }
  }
  CHECK(a.total.factor_touches == b.total.factor_touches);
}

TEST_CASE("occupation measure basics") {
  OccupationEstimate one(0.0);
  one.add(1.0, {testutil::vec({2.5, -1.0})}, {1.0});
  CHECK(one.mean()[0] == 2.5);
  CHECK(one.mean()[1] == -1.0);

  CheckpointRecord rec;
  rec.time = 1.0;
  rec.states = {testutil::vec({0.0}), testutil::vec({1.0}), testutil::vec({3.0})};
  rec.weights = {0.2, 0.3, 0.5};
  auto single = OccupationEstimate::from_records({rec}, 0.0);
  CheckpointRecord rec2 = rec;
  rec2.time = 2.0;
  auto twice = OccupationEstimate::from_records({rec, rec2}, 0.0);
  CHECK(single.mean()[0] == doctest::Approx(twice.mean()[0]));
  CHECK(single.covariance()(0, 0) == doctest::Approx(twice.covariance()(0, 0)));
  CHECK(single.ks_distance(0, twice) == doctest::Approx(0.0));
  CHECK(single.ks_distance(0, single) == 0.0);
  // Burn-in drops early checkpoints.
  CHECK(OccupationEstimate::from_records({rec, rec2}, 1.5).checkpoints() == 1);
  auto h = single.histogram(0, 3, 0.0, 3.0);
  CHECK(h[0] == doctest::Approx(0.2));
  CHECK(h[1] == doctest::Approx(0.3));
  CHECK(h[2] == doctest::Approx(0.5));
}

TEST_CASE("run configuration validation") {
  RunConfig cfg;
  cfg.checkpoint_gap = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.burn_in = 20.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.horizon = 1.0;
  cfg.checkpoint_gap = 0.3;
  auto t = cfg.checkpoint_times();
  CHECK(t.size() == 4);
  CHECK(t.back() == 1.0);
}
