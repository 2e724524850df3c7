#pragma once

#include <cstddef>

#include "qsmc/model.hpp"

namespace qsmc {

struct ModeOptions {
  /// Rows used for the warm-start pass (0: skip it).
  std::size_t warm_start_rows = 4096;
  int max_iterations = 2000;
  double grad_tolerance = 1e-9;  // relative to n+1
};

/// Maximizes log pi by quasi-Newton search: first on an evenly spaced
/// subsample with the likelihood scaled up to n, then on the full data.
Vec find_mode(const TargetModel& model, const Vec& start, const ModeOptions& opts = {});

/// Elementwise inverse of the negative Hessian diagonal of log pi at x.
/// Throws NumericFault if any entry is not positive.
Vec inverse_information_diag(const TargetModel& model, const Vec& x);

}  // namespace qsmc
