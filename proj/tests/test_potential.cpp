#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "qsmc/potential.hpp"

using namespace qsmc;

namespace {

LogisticRegressionModel small_logistic() {
  Mat x(8, 2);
  Vec y(8);
  RandomStream rng(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = rng.normal();
    y[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  }
  return LogisticRegressionModel(x, y, PriorSpec{Vec::Zero(2), Vec::Constant(2, 3.0)});
}

}  // namespace

TEST_CASE("gaussian rate is (x^2 - 1)/2 before the shift") {
  auto model = testutil::gaussian_toy();
  auto pc = Preconditioner::identity(1);
  for (double x : {-3.0, -0.5, 0.0, 1.7}) {
    CHECK(phi_unshifted(model, pc, testutil::vec({x})) == doctest::Approx(0.5 * (x * x - 1.0)));
    CHECK(phi_exact(model, pc, testutil::vec({x})) == doctest::Approx(0.5 * x * x));
  }
  CostCounters c;
  phi_exact(model, pc, testutil::vec({0.3}), &c);
  CHECK(c.factor_touches == 9);
}

TEST_CASE("exhaustive pair average of the subsampled rate is the exact rate") {
  auto model = small_logistic();
  auto pc = Preconditioner::from_diag(testutil::vec({0.3, 0.2}));
  const Vec x_hat = testutil::vec({0.1, -0.2});
  auto cache = precompute_control_variates(model, pc, x_hat);
  RandomStream rng(4);
  const std::size_t n1 = model.n_factors();
  for (int rep = 0; rep < 100; ++rep) {
    Vec x = testutil::vec({2 * rng.normal(), 2 * rng.normal()});
    double sum = 0.0;
    CostCounters c;
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n1; ++j)
        sum += phi_subsampled(cache, model, pc, SubsampleDraw{{{i, j}}}, x, &c);
    const double exact = phi_exact(model, pc, x);
    CHECK(std::abs(sum / (n1 * n1) - exact) <= 1e-12 * std::max(1.0, std::abs(exact)));
    CHECK(c.factor_touches == 2 * n1 * n1);
  }
}

TEST_CASE("control variate sums do not depend on the thread count") {
  Mat y(20000, 1);
  RandomStream rng(1);
  for (int i = 0; i < y.rows(); ++i) y(i, 0) = rng.normal();
  GaussianLocationModel model(y, 1.0, PriorSpec{Vec::Zero(1), Vec::Constant(1, 10.0)});
  auto pc = Preconditioner::scaled(Vec::Ones(1), 20000);
  auto a = precompute_control_variates(model, pc, testutil::vec({0.01}), 1);
  auto b = precompute_control_variates(model, pc, testutil::vec({0.01}), 4);
  CHECK(a.grad_at_hat[0] == b.grad_at_hat[0]);
  CHECK(a.c_const == b.c_const);
}

TEST_CASE("subsampled bounds contain every draw") {
  auto model = small_logistic();
  auto pc = Preconditioner::from_diag(testutil::vec({0.3, 0.2}));
  auto cache = precompute_control_variates(model, pc, testutil::vec({0.1, -0.2}));
  RandomStream rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    Vec c = testutil::vec({rng.normal(), rng.normal()});
    Vec half = testutil::vec({0.5 * rng.uniform(), 0.5 * rng.uniform()});
    PhiBounds b = phi_bounds_subsampled(cache, model, pc, c - half, c + half);
    for (int k = 0; k < 20; ++k) {
      Vec x = c + half.cwiseProduct(testutil::vec({2 * rng.uniform() - 1, 2 * rng.uniform() - 1}));
      auto draw = draw_subsample(model.n_data(), 1, rng);
      double v = phi_subsampled(cache, model, pc, draw, x);
      CHECK(v >= b.lower - 1e-10);
      CHECK(v <= b.upper + 1e-10);
    }
  }
}

TEST_CASE("exact bounds contain the rate on the box") {
  auto logistic = small_logistic();
  Vec yt(30);
  RandomStream rng(6);
  for (int i = 0; i < 30; ++i) yt[i] = rng.normal();
  T5LocationModel t5(yt, PriorSpec{Vec::Zero(1), Vec::Constant(1, 10.0)});
  auto check = [&](const TargetModel& m, const Preconditioner& pc) {
    for (int rep = 0; rep < 100; ++rep) {
      Vec c(m.dim()), half(m.dim());
      for (int j = 0; j < m.dim(); ++j) {
        c[j] = rng.normal();
        half[j] = 0.6 * rng.uniform();
      }
      CostCounters cnt;
      PhiBounds b = phi_bounds_exact(m, pc, c - half, c + half, &cnt);
      CHECK(b.lower >= 0.0);
      for (int k = 0; k < 20; ++k) {
        Vec x(m.dim());
        for (int j = 0; j < m.dim(); ++j) x[j] = c[j] + half[j] * (2 * rng.uniform() - 1);
        double v = phi_exact(m, pc, x);
        CHECK(v >= b.lower - 1e-10);
        CHECK(v <= b.upper + 1e-10);
      }
    }
  };
  check(logistic, Preconditioner::from_diag(testutil::vec({0.3, 0.2})));
  check(t5, Preconditioner::identity(1));
  auto g = testutil::gaussian_toy();
  check(g, Preconditioner::identity(1));
}

TEST_CASE("floor is required for the subsampled global lower bound") {
  auto model = small_logistic();
  auto pc = Preconditioner::identity(2);
  SubsampledPhiProvider p(model, pc, precompute_control_variates(model, pc, Vec::Zero(2)), 1);
  CHECK_THROWS(p.global_lower());
  p.set_floor_region(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
  CHECK(p.global_lower() <= p.cache().c_const);
}
