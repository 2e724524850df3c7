#pragma once

#include <cmath>
#include <limits>

#include "qsmc/models.hpp"

namespace testutil {

/// n = 8 symmetric observations with noise variance 8 and a flat prior: the
/// posterior is exactly N(0, 1).
inline qsmc::GaussianLocationModel gaussian_toy() {
  qsmc::Mat y(8, 1);
  y << -3.5, -2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 3.5;
  qsmc::PriorSpec prior{qsmc::Vec::Zero(1),
                        qsmc::Vec::Constant(1, std::numeric_limits<double>::infinity())};
  return qsmc::GaussianLocationModel(y, std::sqrt(8.0), prior);
}

inline qsmc::Vec vec(std::initializer_list<double> v) {
  qsmc::Vec out(v.size());
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace testutil
