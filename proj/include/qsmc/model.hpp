#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "qsmc/preconditioner.hpp"

namespace qsmc {

/// Bounds on the killing rate over a box: lower <= phi(x) <= upper.
struct PhiBounds {
  double lower = 0.0;
  double upper = 0.0;
  double rate() const { return upper - lower; }
};

/// Per-factor curvature information valid on a box, for every factor i:
///   |d2 log f_i / dx_j dx_k| <= entry(j,k)
///   |d2 log f_i / dx_j^2 (x) - d2 log f_i / dx_j^2 (y)| <= diag_variation[j]
struct CurvatureBounds {
  Mat entry;
  Vec diag_variation;
  /// Upper bound on the per-factor Hessian operator norm (Frobenius norm of `entry`).
  double hessian_bound() const { return entry.norm(); }
};

/// Factorized log-posterior: log pi(x) = sum_{i=0}^{n} log f_i(x), factor 0 the prior.
/// Implementations must be safe to call concurrently.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  /// n + 1, including the prior factor.
  virtual std::size_t n_factors() const = 0;
  std::size_t n_data() const { return n_factors() - 1; }

  virtual double log_f(std::size_t i, const Vec& x) const = 0;
  virtual void grad_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const = 0;
  /// Diagonal of the Hessian of log f_i.
  virtual void hess_diag_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const = 0;
  virtual void grad_hess_diag(std::size_t i, const Vec& x, Eigen::Ref<Vec> grad,
                              Eigen::Ref<Vec> hess) const {
    grad_log_f(i, x, grad);
    hess_diag_log_f(i, x, hess);
  }
  /// Trace of the Hessian of log f_i.
  double lap_log_f(std::size_t i, const Vec& x) const;

  /// Phi: a lower bound of the unshifted killing rate over the whole space
  /// (or over the model's documented region).
  virtual double phi_lower_bound(const Preconditioner& precond) const = 0;

  /// Curvature bounds valid on [lo, hi]. If the model has to scan the data
  /// to produce them, the number of factors touched is added to *touches.
  virtual CurvatureBounds curvature_bounds(const Vec& lo, const Vec& hi,
                                           std::uint64_t* touches = nullptr) const = 0;
  double hessian_bound(const Vec& lo, const Vec& hi) const {
    return curvature_bounds(lo, hi).hessian_bound();
  }

  /// Sharp closed-form killing-rate bounds, when the model has them.
  virtual std::optional<PhiBounds> analytic_phi_bounds(const Preconditioner&, const Vec&,
                                                       const Vec&) const {
    return std::nullopt;
  }

  /// Hook for models that precompute bound tables around a centering point.
  virtual void prepare_bounds(const Vec& /*x_hat*/, const Preconditioner& /*precond*/) {}
};

}  // namespace qsmc
