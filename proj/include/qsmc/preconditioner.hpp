#pragma once

#include <Eigen/Dense>
#include <optional>

namespace qsmc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Diagonal scale of the driving Brownian motion: X = x0 + diag(sqrt_diag) W.
struct Preconditioner {
  Vec diag;
  Vec sqrt_diag;
  std::optional<double> n_scaling;  // set when diag = base / n

  static Preconditioner identity(int d);
  static Preconditioner from_diag(const Vec& diag);
  /// diag = base / n.
  static Preconditioner scaled(const Vec& base, double n);

  int dim() const { return static_cast<int>(diag.size()); }
};

}  // namespace qsmc
