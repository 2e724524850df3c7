#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "qsmc/model.hpp"
#include "qsmc/rng.hpp"

namespace qsmc {

/// Work counters. Kept per particle and merged at checkpoints.
struct CostCounters {
  std::uint64_t factor_touches = 0;
  std::uint64_t phi_evaluations = 0;
  std::uint64_t bound_evaluations = 0;
  std::uint64_t events = 0;
  std::uint64_t layers = 0;
  std::uint64_t kills = 0;

  CostCounters& operator+=(const CostCounters& o);
};

/// Full gradient and Hessian diagonal of log pi at x (n+1 factor touches).
/// Non-finite factor contributions raise NumericFault naming the factor.
void full_grad_hess(const TargetModel& model, const Vec& x, Vec& grad, Vec& hess_diag,
                    CostCounters* counters = nullptr);

/// Unshifted killing rate (|Lambda^{1/2} grad log pi|^2 + sum_j Lambda_jj d2_jj log pi) / 2.
double phi_unshifted(const TargetModel& model, const Preconditioner& precond, const Vec& x,
                     CostCounters* counters = nullptr);

/// Killing rate shifted by the model's Phi, so it is >= 0.
double phi_exact(const TargetModel& model, const Preconditioner& precond, const Vec& x,
                 CostCounters* counters = nullptr);

struct ControlVariateCache {
  Vec x_hat;
  Vec grad_at_hat;       // grad log pi(x_hat)
  Vec hess_diag_at_hat;  // diagonal Hessian of log pi at x_hat
  double div_at_hat = 0.0;  // sum_j Lambda_jj d2_jj log pi(x_hat)
  double phi_floor = 0.0;   // the model's Phi
  double c_const = 0.0;
  std::size_t n_factors = 0;
};

/// Full-data sums at x_hat. Reduction runs in fixed-size blocks in a fixed
/// order, so the result does not depend on `threads`.
ControlVariateCache precompute_control_variates(const TargetModel& model,
                                                const Preconditioner& precond,
                                                const Vec& x_hat, int threads = 1);

struct SubsampleDraw {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (I, J), uniform on {0..n}
  std::size_t i_idx() const { return pairs.front().first; }
  std::size_t j_idx() const { return pairs.front().second; }
};

/// c independent (I, J) pairs drawn with replacement from {0, ..., n}.
SubsampleDraw draw_subsample(std::size_t n, int batch, RandomStream& rng);

/// (n+1) (grad log f_I(x) - grad log f_I(x_hat)).
Vec alpha_tilde(const TargetModel& model, std::size_t index, const Vec& x, const Vec& x_hat);

/// Unbiased estimate of phi_exact(x) touching two factors per pair; the batch
/// mean when the draw holds several pairs.
double phi_subsampled(const ControlVariateCache& cache, const TargetModel& model,
                      const Preconditioner& precond, const SubsampleDraw& draw, const Vec& x,
                      CostCounters* counters = nullptr);

/// Bounds on phi_exact over [lo, hi]. Uses the model's closed form when it has
/// one, otherwise a Taylor enclosure from the centre gradient and the model's
/// curvature bounds (O(n) for the centre sums).
PhiBounds phi_bounds_exact(const TargetModel& model, const Preconditioner& precond,
                           const Vec& lo, const Vec& hi, CostCounters* counters = nullptr);

/// Generic fallback: phi(center) -/+ G * half-diagonal, G a bound on |grad phi| on the box.
PhiBounds phi_bounds_lipschitz(const TargetModel& model, const Preconditioner& precond,
                               const Vec& lo, const Vec& hi, double grad_bound,
                               CostCounters* counters = nullptr);

/// Bounds holding for every subsample draw and every x in [lo, hi].
PhiBounds phi_bounds_subsampled(const ControlVariateCache& cache, const TargetModel& model,
                                const Preconditioner& precond, const Vec& lo, const Vec& hi,
                                CostCounters* counters = nullptr);

/// Killing-rate evaluator with matching layer bounds, as consumed by the samplers.
class PhiProvider {
 public:
  virtual ~PhiProvider() = default;
  virtual PhiBounds bounds(const Vec& lo, const Vec& hi, CostCounters& counters) const = 0;
  virtual double evaluate(const Vec& x, RandomStream& rng, CostCounters& counters) const = 0;
  /// Global lower bound of the evaluated quantity (0 for the shifted exact rate).
  virtual double global_lower() const = 0;
};

class ExactPhiProvider : public PhiProvider {
 public:
  ExactPhiProvider(const TargetModel& model, Preconditioner precond);
  PhiBounds bounds(const Vec& lo, const Vec& hi, CostCounters& counters) const override;
  double evaluate(const Vec& x, RandomStream& rng, CostCounters& counters) const override;
  double global_lower() const override { return 0.0; }

 private:
  const TargetModel& model_;
  Preconditioner precond_;
};

class SubsampledPhiProvider : public PhiProvider {
 public:
  /// `region_lo/hi` is the box over which the global floor is computed; it is
  /// only needed by the rejection engines.
  SubsampledPhiProvider(const TargetModel& model, Preconditioner precond,
                        ControlVariateCache cache, int batch);
  void set_floor_region(const Vec& region_lo, const Vec& region_hi);

  PhiBounds bounds(const Vec& lo, const Vec& hi, CostCounters& counters) const override;
  double evaluate(const Vec& x, RandomStream& rng, CostCounters& counters) const override;
  double global_lower() const override;
  const ControlVariateCache& cache() const { return cache_; }
  int batch() const { return batch_; }

 private:
  const TargetModel& model_;
  Preconditioner precond_;
  ControlVariateCache cache_;
  int batch_;
  std::optional<double> floor_;
  Vec region_lo_, region_hi_;
};

/// Exact rate with the subsampled bounds (diagnostic comparison mode).
class SameBoundPhiProvider : public PhiProvider {
 public:
  SameBoundPhiProvider(const TargetModel& model, Preconditioner precond,
                       ControlVariateCache cache);
  PhiBounds bounds(const Vec& lo, const Vec& hi, CostCounters& counters) const override;
  double evaluate(const Vec& x, RandomStream& rng, CostCounters& counters) const override;
  double global_lower() const override { return 0.0; }

 private:
  const TargetModel& model_;
  Preconditioner precond_;
  ControlVariateCache cache_;
};

/// Rate given by plain functions; used for analytic test targets.
class FunctionPhiProvider : public PhiProvider {
 public:
  using RateFn = std::function<double(const Vec&)>;
  using BoundFn = std::function<PhiBounds(const Vec&, const Vec&)>;
  FunctionPhiProvider(RateFn rate, BoundFn bounds, double global_lower)
      : rate_(std::move(rate)), bounds_(std::move(bounds)), floor_(global_lower) {}
  PhiBounds bounds(const Vec& lo, const Vec& hi, CostCounters& counters) const override {
    ++counters.bound_evaluations;
    return bounds_(lo, hi);
  }
  double evaluate(const Vec& x, RandomStream&, CostCounters& counters) const override {
    ++counters.phi_evaluations;
    return rate_(x);
  }
  double global_lower() const override { return floor_; }

 private:
  RateFn rate_;
  BoundFn bounds_;
  double floor_;
};

}  // namespace qsmc
