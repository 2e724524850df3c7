#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "qsmc/model.hpp"

namespace qsmc {

enum class Family { GaussianLocation, T5Location, LogisticRegression, ContaminatedMixture };
enum class Transform { Identity, Log, Logit };

Family parse_family(const std::string& s);
std::string family_name(Family f);

/// Tabular data, one row per observation.
struct Dataset {
  std::vector<std::string> columns;
  Mat values;  // rows x columns
  std::string provenance;
  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  int column_index(const std::string& name) const;  // -1 if absent
};

/// Per-coordinate prior on the original (constrained) scale: Normal for
/// identity coordinates, log-normal for log coordinates, logit-normal for logit
/// coordinates. An infinite sd gives a flat prior.
struct PriorSpec {
  Vec mean;
  Vec sd;
};

struct ModelSpec {
  Family family = Family::GaussianLocation;
  int dim = 1;
  std::vector<Transform> transform;
  PriorSpec prior;
  double noise_sd = 1.0;  // Gaussian location only
  /// Contaminated mixture: box (transformed coordinates) over which Phi is computed.
  Vec floor_box_lo, floor_box_hi;

  /// Defaults for a family: identity transforms and weak priors, except the
  /// mixture which uses [identity, identity, log, log, logit].
  static ModelSpec defaults(Family family, int dim);
};

/// Maps a transformed coordinate back to the original scale.
double to_original(Transform t, double x);
double to_transformed(Transform t, double v);

/// log f_0 on the transformed scale including the log-Jacobian, with its
/// gradient and Hessian diagonal. Shared by every family.
class TransformedPrior {
 public:
  TransformedPrior() = default;
  TransformedPrior(std::vector<Transform> transform, PriorSpec prior);
  double log_density(const Vec& x) const;
  void grad_hess(const Vec& x, Eigen::Ref<Vec> grad, Eigen::Ref<Vec> hess) const;
  /// Constant curvature magnitude 1/sd^2 per coordinate (0 when flat).
  Vec curvature() const;
  const std::vector<Transform>& transform() const { return transform_; }

 private:
  std::vector<Transform> transform_;
  PriorSpec prior_;
};

/// Builds a model from data laid out per family (see README for the schemas).
std::unique_ptr<TargetModel> build_model(const ModelSpec& spec, const Dataset& data);

/// Draws a dataset from the family's generative model. `true_params` are on the
/// original scale. Regression covariates are standard normal. Mixture data
/// carries an extra 0/1 `contaminated` column marking the outlier component.
Dataset generate_synthetic(const ModelSpec& spec, std::size_t n, const Vec& true_params,
                           std::uint64_t seed);

/// Reads a headed CSV. Logistic data may be grouped (columns `total` and
/// `successes`, or the Menarche names `Total`/`Menarche`), in which case rows are
/// expanded to Bernoulli observations. Logistic covariates are standardized
/// and the constants recorded in the provenance string.
Dataset load_csv(const std::string& path, Family family);

/// Parses CSV text; `origin` is used in error messages.
Dataset parse_csv(const std::string& text, const std::string& origin);

// Concrete families, exposed for tests.

class GaussianLocationModel : public TargetModel {
 public:
  GaussianLocationModel(Mat y, double noise_sd, PriorSpec prior);
  std::string name() const override { return "gaussian-location"; }
  int dim() const override { return static_cast<int>(y_.cols()); }
  std::size_t n_factors() const override { return static_cast<std::size_t>(y_.rows()) + 1; }
  double log_f(std::size_t i, const Vec& x) const override;
  void grad_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const override;
  void hess_diag_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const override;
  double phi_lower_bound(const Preconditioner& precond) const override;
  CurvatureBounds curvature_bounds(const Vec& lo, const Vec& hi,
                                   std::uint64_t* touches = nullptr) const override;
  std::optional<PhiBounds> analytic_phi_bounds(const Preconditioner& precond, const Vec& lo,
                                               const Vec& hi) const override;
  const Vec& posterior_mean() const { return post_mean_; }
  const Vec& posterior_precision() const { return post_prec_; }

 private:
  Mat y_;
  double noise_prec_;
  TransformedPrior prior_;
  Vec post_mean_, post_prec_;
};

class T5LocationModel : public TargetModel {
 public:
  T5LocationModel(Vec y, PriorSpec prior);
  std::string name() const override { return "t5-location"; }
  int dim() const override { return 1; }
  std::size_t n_factors() const override { return static_cast<std::size_t>(y_.size()) + 1; }
  double log_f(std::size_t i, const Vec& x) const override;
  void grad_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const override;
  void hess_diag_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const override;
  void grad_hess_diag(std::size_t i, const Vec& x, Eigen::Ref<Vec> grad,
                      Eigen::Ref<Vec> hess) const override;
  double phi_lower_bound(const Preconditioner& precond) const override;
  CurvatureBounds curvature_bounds(const Vec& lo, const Vec& hi,
                                   std::uint64_t* touches = nullptr) const override;

  // Per-datum curvature constants of -3 log(5 + u^2).
  static constexpr double kMaxCurvature = 1.2;      // max |second derivative|
  static constexpr double kCurvatureRange = 1.35;   // max - min of second derivative
  static constexpr double kMaxThirdDerivative = 0.7819655552;

 private:
  Vec y_;
  TransformedPrior prior_;
};

class LogisticRegressionModel : public TargetModel {
 public:
  /// `design` includes the intercept column; `response` holds 0/1.
  LogisticRegressionModel(Mat design, Vec response, PriorSpec prior);
  std::string name() const override { return "logistic-regression"; }
  int dim() const override { return static_cast<int>(x_.cols()); }
  std::size_t n_factors() const override { return static_cast<std::size_t>(x_.rows()) + 1; }
  double log_f(std::size_t i, const Vec& x) const override;
  void grad_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const override;
  void hess_diag_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const override;
  void grad_hess_diag(std::size_t i, const Vec& x, Eigen::Ref<Vec> grad,
                      Eigen::Ref<Vec> hess) const override;
  double phi_lower_bound(const Preconditioner& precond) const override;
  CurvatureBounds curvature_bounds(const Vec& lo, const Vec& hi,
                                   std::uint64_t* touches = nullptr) const override;

 private:
  Mat x_;
  Vec y_;
  TransformedPrior prior_;
  Vec max_abs_, sum_sq_;
};

/// Two-component contaminated linear regression in coordinates
/// [alpha, beta, log sigma, log phi, logit p].
class ContaminatedMixtureModel : public TargetModel {
 public:
  ContaminatedMixtureModel(Mat xy, PriorSpec prior, Vec floor_box_lo, Vec floor_box_hi);
  std::string name() const override { return "contaminated-mixture"; }
  int dim() const override { return 5; }
  std::size_t n_factors() const override { return static_cast<std::size_t>(xy_.rows()) + 1; }
  double log_f(std::size_t i, const Vec& x) const override;
  void grad_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const override;
  void hess_diag_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const override;
  void grad_hess_diag(std::size_t i, const Vec& x, Eigen::Ref<Vec> grad,
                      Eigen::Ref<Vec> hess) const override;
  double phi_lower_bound(const Preconditioner& precond) const override;
  CurvatureBounds curvature_bounds(const Vec& lo, const Vec& hi,
                                   std::uint64_t* touches = nullptr) const override;
  /// Precomputes curvature tables on nested boxes x_hat +- 2^k sqrt(Lambda).
  void prepare_bounds(const Vec& x_hat, const Preconditioner& precond) override;

  /// Enclosure of one datum's Hessian over a parameter box (lower, upper).
  std::pair<Mat, Mat> datum_hessian_enclosure(std::size_t row, const Vec& lo,
                                              const Vec& hi) const;

 private:
  CurvatureBounds scan(const Vec& lo, const Vec& hi) const;

  Mat xy_;  // columns x1, x2, y
  TransformedPrior prior_;
  Vec floor_sums_;  // per coordinate lower bound of sum_i d2_jj log f_i on the floor box
  struct Level {
    Vec lo, hi;
    CurvatureBounds bounds;
  };
  std::vector<Level> ladder_;
};

}  // namespace qsmc
