#include "qsmc/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "qsmc/errors.hpp"

namespace qsmc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 + e^x)
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

Family parse_family(const std::string& s) {
  if (s == "gaussian-location") return Family::GaussianLocation;
  if (s == "t5-location") return Family::T5Location;
  if (s == "logistic-regression") return Family::LogisticRegression;
  if (s == "contaminated-mixture") return Family::ContaminatedMixture;
  throw ConfigError("unknown model family '" + s + "'");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::GaussianLocation: return "gaussian-location";
    case Family::T5Location: return "t5-location";
    case Family::LogisticRegression: return "logistic-regression";
    case Family::ContaminatedMixture: return "contaminated-mixture";
  }
  return "?";
}

int Dataset::column_index(const std::string& name) const {
  for (std::size_t k = 0; k < columns.size(); ++k)
    if (columns[k] == name) return static_cast<int>(k);
  return -1;
}

ModelSpec ModelSpec::defaults(Family family, int dim) {
  ModelSpec s;
  s.family = family;
  if (family == Family::ContaminatedMixture) dim = 5;
  if (family == Family::T5Location) dim = 1;
  s.dim = dim;
  s.transform.assign(dim, Transform::Identity);
  s.prior.mean = Vec::Zero(dim);
  s.prior.sd = Vec::Constant(dim, 10.0);
  if (family == Family::ContaminatedMixture) {
    s.transform = {Transform::Identity, Transform::Identity, Transform::Log, Transform::Log,
                   Transform::Logit};
    s.prior.mean << 0.0, 0.0, 0.0, 0.0, -2.0;
    s.prior.sd << 10.0, 10.0, 3.0, 3.0, 3.0;
    s.floor_box_lo = Vec(5);
    s.floor_box_hi = Vec(5);
    s.floor_box_lo << -20.0, -20.0, -3.0, -3.0, -8.0;
    s.floor_box_hi << 20.0, 20.0, 4.0, 5.0, 2.0;
  }
  return s;
}

double to_original(Transform t, double x) {
  switch (t) {
    case Transform::Identity: return x;
    case Transform::Log: return std::exp(x);
    case Transform::Logit: return sigmoid(x);
  }
  return x;
}

double to_transformed(Transform t, double v) {
  switch (t) {
    case Transform::Identity: return v;
    case Transform::Log: return std::log(v);
    case Transform::Logit: return std::log(v) - std::log1p(-v);
  }
  return v;
}

TransformedPrior::TransformedPrior(std::vector<Transform> transform, PriorSpec prior)
    : transform_(std::move(transform)), prior_(std::move(prior)) {
  if (prior_.mean.size() != static_cast<int>(transform_.size()) ||
      prior_.sd.size() != static_cast<int>(transform_.size()))
    throw ConfigError("prior mean/sd length must equal the parameter dimension");
  if ((prior_.sd.array() <= 0.0).any()) throw ConfigError("prior sd must be > 0");
}

double TransformedPrior::log_density(const Vec& x) const {
  double total = 0.0;
  for (std::size_t j = 0; j < transform_.size(); ++j) {
    const double m = prior_.mean[j], s = prior_.sd[j];
    const bool flat = std::isinf(s);
    const double xj = x[j];
    switch (transform_[j]) {
      case Transform::Identity:
        if (!flat) total += -0.5 * (xj - m) * (xj - m) / (s * s) - std::log(s) - kLogSqrt2Pi;
        break;
      case Transform::Log: {
        // log-normal density of sigma = e^x, plus log |d sigma / dx| = x
        double ls = xj;
        if (!flat) total += -ls - 0.5 * (ls - m) * (ls - m) / (s * s) - std::log(s) - kLogSqrt2Pi;
        total += xj;
        break;
      }
      case Transform::Logit: {
        // logit-normal density of p = sigmoid(x), plus log p(1-p)
        double logp = -softplus(-xj), log1mp = -softplus(xj);
        if (!flat)
          total += -logp - log1mp - 0.5 * (xj - m) * (xj - m) / (s * s) - std::log(s) - kLogSqrt2Pi;
        total += logp + log1mp;
        break;
      }
    }
  }
  return total;
}

void TransformedPrior::grad_hess(const Vec& x, Eigen::Ref<Vec> grad,
                                 Eigen::Ref<Vec> hess) const {
  for (std::size_t j = 0; j < transform_.size(); ++j) {
    const double m = prior_.mean[j], s = prior_.sd[j];
    const double prec = std::isinf(s) ? 0.0 : 1.0 / (s * s);
    const double xj = x[j];
    // Chain rule through the original-scale density and the log-Jacobian.
    double lp1 = 0.0, lp2 = 0.0, d1 = 1.0, d2 = 0.0, lj1 = 0.0, lj2 = 0.0;
    switch (transform_[j]) {
      case Transform::Identity:
        lp1 = -prec * (xj - m);
        lp2 = -prec;
        break;
      case Transform::Log: {
        double sig = std::exp(xj);
        if (prec > 0.0) {
          lp1 = -1.0 / sig - prec * (xj - m) / sig;
          lp2 = 1.0 / (sig * sig) - prec * (1.0 - (xj - m)) / (sig * sig);
        }
        d1 = sig;
        d2 = sig;
        lj1 = 1.0;
        break;
      }
      case Transform::Logit: {
        double p = sigmoid(xj), q = p * (1.0 - p);
        if (prec > 0.0) {
          double l = xj - m;
          lp1 = -1.0 / p + 1.0 / (1.0 - p) - prec * l / q;
          lp2 = 1.0 / (p * p) + 1.0 / ((1.0 - p) * (1.0 - p)) -
                prec * (1.0 - l * (1.0 - 2.0 * p)) / (q * q);
        }
        d1 = q;
        d2 = q * (1.0 - 2.0 * p);
        lj1 = 1.0 - 2.0 * p;
        lj2 = -2.0 * q;
        break;
      }
    }
    grad[j] = lp1 * d1 + lj1;
    hess[j] = lp2 * d1 * d1 + lp1 * d2 + lj2;
  }
}

Vec TransformedPrior::curvature() const {
  Vec c(transform_.size());
  for (std::size_t j = 0; j < transform_.size(); ++j) {
    double s = prior_.sd[j];
    if (!std::isinf(s))
      c[j] = 1.0 / (s * s);
    else
      c[j] = transform_[j] == Transform::Logit ? 0.5 : 0.0;
  }
  return c;
}

// ---------------------------------------------------------------- Gaussian

GaussianLocationModel::GaussianLocationModel(Mat y, double noise_sd, PriorSpec prior)
    : y_(std::move(y)), noise_prec_(1.0 / (noise_sd * noise_sd)) {
  if (!(noise_sd > 0.0)) throw ConfigError("noise_sd must be > 0");
  const int d = static_cast<int>(y_.cols());
  prior_ = TransformedPrior(std::vector<Transform>(d, Transform::Identity), prior);
  Vec prior_prec = prior_.curvature();
  post_prec_ = Vec::Constant(d, noise_prec_ * static_cast<double>(y_.rows())) + prior_prec;
  post_mean_.resize(d);
  for (int j = 0; j < d; ++j) {
    double num = noise_prec_ * y_.col(j).sum() + prior_prec[j] * prior.mean[j];
    post_mean_[j] = num / post_prec_[j];
  }
}

double GaussianLocationModel::log_f(std::size_t i, const Vec& x) const {
  if (i == 0) return prior_.log_density(x);
  return -0.5 * noise_prec_ * (y_.row(i - 1).transpose() - x).squaredNorm();
}

void GaussianLocationModel::grad_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const {
  if (i == 0) {
    Vec h(x.size());
    prior_.grad_hess(x, out, h);
    return;
  }
  out = noise_prec_ * (y_.row(i - 1).transpose() - x);
}

void GaussianLocationModel::hess_diag_log_f(std::size_t i, const Vec& x,
                                            Eigen::Ref<Vec> out) const {
  if (i == 0) {
    Vec g(x.size());
    prior_.grad_hess(x, g, out);
    return;
  }
  out.setConstant(-noise_prec_);
}

double GaussianLocationModel::phi_lower_bound(const Preconditioner& precond) const {
  return -0.5 * precond.diag.dot(post_prec_);
}

CurvatureBounds GaussianLocationModel::curvature_bounds(const Vec&, const Vec&,
                                                        std::uint64_t*) const {
  CurvatureBounds b;
  b.entry = prior_.curvature().cwiseMax(Vec::Constant(dim(), noise_prec_)).asDiagonal();
  b.diag_variation = Vec::Zero(dim());
  return b;
}

std::optional<PhiBounds> GaussianLocationModel::analytic_phi_bounds(const Preconditioner& precond,
                                                                    const Vec& lo,
                                                                    const Vec& hi) const {
  // phi(x) = sum_j Lambda_jj P_j^2 (x_j - mu_j)^2 / 2 after the shift.
  double lower = 0.0, upper = 0.0;
  for (int j = 0; j < dim(); ++j) {
    double a = lo[j] - post_mean_[j], b = hi[j] - post_mean_[j];
    double mn = (a <= 0.0 && b >= 0.0) ? 0.0 : std::min(a * a, b * b);
    double mx = std::max(a * a, b * b);
    double c = 0.5 * precond.diag[j] * post_prec_[j] * post_prec_[j];
    lower += c * mn;
    upper += c * mx;
  }
  return PhiBounds{lower, upper};
}

// ---------------------------------------------------------------- t5

T5LocationModel::T5LocationModel(Vec y, PriorSpec prior)
    : y_(std::move(y)), prior_({Transform::Identity}, std::move(prior)) {}

double T5LocationModel::log_f(std::size_t i, const Vec& x) const {
  if (i == 0) return prior_.log_density(x);
  double u = y_[i - 1] - x[0];
  return -3.0 * std::log(5.0 + u * u);
}

void T5LocationModel::grad_hess_diag(std::size_t i, const Vec& x, Eigen::Ref<Vec> grad,
                                     Eigen::Ref<Vec> hess) const {
  if (i == 0) {
    prior_.grad_hess(x, grad, hess);
    return;
  }
  double u = y_[i - 1] - x[0];
  double q = 5.0 + u * u;
  grad[0] = 6.0 * u / q;
  hess[0] = -6.0 * (5.0 - u * u) / (q * q);
}

void T5LocationModel::grad_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const {
  Vec h(1);
  grad_hess_diag(i, x, out, h);
}

void T5LocationModel::hess_diag_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const {
  Vec g(1);
  grad_hess_diag(i, x, g, out);
}

double T5LocationModel::phi_lower_bound(const Preconditioner& precond) const {
  // Drop the squared-gradient term and take every factor at its most negative curvature.
  double floor = -kMaxCurvature * static_cast<double>(y_.size()) - prior_.curvature()[0];
  return 0.5 * precond.diag[0] * floor;
}

CurvatureBounds T5LocationModel::curvature_bounds(const Vec& lo, const Vec& hi,
                                                  std::uint64_t*) const {
  CurvatureBounds b;
  b.entry = Mat::Constant(1, 1, std::max(kMaxCurvature, prior_.curvature()[0]));
  double width = hi[0] - lo[0];
  b.diag_variation = Vec::Constant(1, std::min(kCurvatureRange, kMaxThirdDerivative * width));
  return b;
}

// ---------------------------------------------------------------- logistic

LogisticRegressionModel::LogisticRegressionModel(Mat design, Vec response, PriorSpec prior)
    : x_(std::move(design)), y_(std::move(response)) {
  const int d = static_cast<int>(x_.cols());
  if (y_.size() != x_.rows()) throw DataError("logistic: design/response length mismatch");
  prior_ = TransformedPrior(std::vector<Transform>(d, Transform::Identity), std::move(prior));
  max_abs_ = x_.cwiseAbs().colwise().maxCoeff().transpose();
  sum_sq_ = x_.cwiseProduct(x_).colwise().sum().transpose();
}

double LogisticRegressionModel::log_f(std::size_t i, const Vec& x) const {
  if (i == 0) return prior_.log_density(x);
  double eta = x_.row(i - 1).dot(x);
  return y_[i - 1] * eta - softplus(eta);
}

void LogisticRegressionModel::grad_hess_diag(std::size_t i, const Vec& x, Eigen::Ref<Vec> grad,
                                             Eigen::Ref<Vec> hess) const {
  if (i == 0) {
    prior_.grad_hess(x, grad, hess);
    return;
  }
  auto row = x_.row(i - 1);
  double p = sigmoid(row.dot(x));
  double w = p * (1.0 - p);
  for (int j = 0; j < dim(); ++j) {
    grad[j] = (y_[i - 1] - p) * row[j];
    hess[j] = -w * row[j] * row[j];
  }
}

void LogisticRegressionModel::grad_log_f(std::size_t i, const Vec& x, Eigen::Ref<Vec> out) const {
  Vec h(dim());
  grad_hess_diag(i, x, out, h);
}

void LogisticRegressionModel::hess_diag_log_f(std::size_t i, const Vec& x,
                                              Eigen::Ref<Vec> out) const {
  Vec g(dim());
  grad_hess_diag(i, x, g, out);
}

double LogisticRegressionModel::phi_lower_bound(const Preconditioner& precond) const {
  Vec floor = -0.25 * sum_sq_ - prior_.curvature();
  return 0.5 * precond.diag.dot(floor);
}

CurvatureBounds LogisticRegressionModel::curvature_bounds(const Vec& lo, const Vec& hi,
                                                          std::uint64_t*) const {
  // p(1-p) <= 1/4 and |d/d eta p(1-p)| <= 1/(6 sqrt 3).
  const double slope = 1.0 / (6.0 * std::sqrt(3.0));
  CurvatureBounds b;
  b.entry = 0.25 * max_abs_ * max_abs_.transpose();
  Vec pc = prior_.curvature();
  for (int j = 0; j < dim(); ++j) b.entry(j, j) = std::max(b.entry(j, j), pc[j]);
  double eta_range = max_abs_.dot(hi - lo);
  double var = std::min(0.25, slope * eta_range);
  b.diag_variation = max_abs_.cwiseProduct(max_abs_) * var;
  return b;
}

// ---------------------------------------------------------------- factory

namespace {

Mat require_columns(const Dataset& data, const std::vector<std::string>& names) {
  Mat out(data.rows(), names.size());
  for (std::size_t k = 0; k < names.size(); ++k) {
    int c = data.column_index(names[k]);
    if (c < 0) throw DataError("dataset is missing column '" + names[k] + "'");
    out.col(k) = data.values.col(c);
  }
  return out;
}

}  // namespace

std::unique_ptr<TargetModel> build_model(const ModelSpec& spec, const Dataset& data) {
  if (data.rows() < 1) throw DataError("dataset has no rows");
  if (!data.values.allFinite()) throw DataError("dataset contains non-finite values");
  std::unique_ptr<TargetModel> model;
  switch (spec.family) {
    case Family::GaussianLocation: {
      if (static_cast<int>(data.columns.size()) != spec.dim)
        throw DataError("gaussian-location: expected one column per parameter coordinate");
      model = std::make_unique<GaussianLocationModel>(data.values, spec.noise_sd, spec.prior);
      break;
    }
    case Family::T5Location: {
      Mat y = require_columns(data, {"y"});
      model = std::make_unique<T5LocationModel>(y.col(0), spec.prior);
      break;
    }
    case Family::LogisticRegression: {
      int yc = data.column_index("y");
      if (yc < 0) throw DataError("logistic-regression: missing response column 'y'");
      Mat design(data.rows(), data.columns.size());
      design.col(0).setOnes();
      int k = 1;
      for (std::size_t c = 0; c < data.columns.size(); ++c)
        if (static_cast<int>(c) != yc) design.col(k++) = data.values.col(c);
      if (k != spec.dim)
        throw DataError("logistic-regression: dimension must be 1 + number of covariates");
      Vec y = data.values.col(yc);
      for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0) throw DataError("logistic-regression: response must be 0/1");
      model = std::make_unique<LogisticRegressionModel>(design, y, spec.prior);
      break;
    }
    case Family::ContaminatedMixture: {
      Mat xy = require_columns(data, {"x1", "x2", "y"});
      model = std::make_unique<ContaminatedMixtureModel>(xy, spec.prior, spec.floor_box_lo,
                                                         spec.floor_box_hi);
      break;
    }
  }
  // Probe the likelihood once so obviously broken inputs fail at build time.
  Vec probe = Vec::Zero(model->dim());
  for (std::size_t i = 0; i < std::min<std::size_t>(model->n_factors(), 16); ++i)
    if (!std::isfinite(model->log_f(i, probe)))
      throw DataError("non-finite likelihood at the probe point for factor " + std::to_string(i));
  return model;
}

Dataset generate_synthetic(const ModelSpec& spec, std::size_t n, const Vec& true_params,
                           std::uint64_t seed) {
  if (n < 1) throw ConfigError("synthetic data size must be >= 1");
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Dataset ds;
  std::ostringstream prov;
  prov << "synthetic " << family_name(spec.family) << " n=" << n << " seed=" << seed
       << " params=[" << true_params.transpose() << "]";
  ds.provenance = prov.str();
  switch (spec.family) {
    case Family::GaussianLocation: {
      const int d = static_cast<int>(true_params.size());
      ds.values.resize(n, d);
      for (int j = 0; j < d; ++j) ds.columns.push_back("y" + std::to_string(j + 1));
      for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) ds.values(i, j) = true_params[j] + spec.noise_sd * normal(eng);
      break;
    }
    case Family::T5Location: {
      std::student_t_distribution<double> t5(5.0);
      ds.columns = {"y"};
      ds.values.resize(n, 1);
      for (std::size_t i = 0; i < n; ++i) ds.values(i, 0) = true_params[0] + t5(eng);
      break;
    }
    case Family::LogisticRegression: {
      const int p = static_cast<int>(true_params.size()) - 1;
      ds.values.resize(n, p + 1);
      for (int j = 0; j < p; ++j) ds.columns.push_back("x" + std::to_string(j + 1));
      ds.columns.push_back("y");
      for (std::size_t i = 0; i < n; ++i) {
        double eta = true_params[0];
        for (int j = 0; j < p; ++j) {
          ds.values(i, j) = normal(eng);
          eta += true_params[j + 1] * ds.values(i, j);
        }
        ds.values(i, p) = unif(eng) < sigmoid(eta) ? 1.0 : 0.0;
      }
      break;
    }
    case Family::ContaminatedMixture: {
      if (true_params.size() != 5) throw ConfigError("mixture needs [alpha, beta, sigma, phi, p]");
      const double a = true_params[0], b = true_params[1], sigma = true_params[2],
                   phi = true_params[3], p = true_params[4];
      ds.columns = {"x1", "x2", "y", "contaminated"};
      ds.values.resize(n, 4);
      for (std::size_t i = 0; i < n; ++i) {
        double x1 = normal(eng), x2 = normal(eng);
        bool corrupt = unif(eng) < p;
        double e = normal(eng);
        ds.values(i, 0) = x1;
        ds.values(i, 1) = x2;
        ds.values(i, 2) = corrupt ? phi * e : a * x1 + b * x2 + sigma * e;
        ds.values(i, 3) = corrupt ? 1.0 : 0.0;
      }
      break;
    }
  }
  return ds;
}

}  // namespace qsmc
