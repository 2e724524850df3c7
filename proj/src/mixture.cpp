#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qsmc/errors.hpp"
#include "qsmc/models.hpp"

namespace qsmc {
namespace {

const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
constexpr int kLadderLevels = 16;

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// 0 * inf is taken as 0: a zero factor means the term vanishes exactly.
double mul0(double a, double b) { return (a == 0.0 || b == 0.0) ? 0.0 : a * b; }

// Closed interval with outward-agnostic arithmetic (round-to-nearest; the
// resulting bounds are inflated by a relative epsilon at the end).
struct Iv {
  double lo, hi;
  static Iv point(double v) { return {v, v}; }
};

Iv operator+(Iv a, Iv b) { return {a.lo + b.lo, a.hi + b.hi}; }
Iv operator-(Iv a, Iv b) { return {a.lo - b.hi, a.hi - b.lo}; }
Iv operator-(Iv a) { return {-a.hi, -a.lo}; }
Iv operator+(Iv a, double c) { return {a.lo + c, a.hi + c}; }
Iv operator*(double c, Iv a) {
  return c >= 0 ? Iv{mul0(c, a.lo), mul0(c, a.hi)} : Iv{mul0(c, a.hi), mul0(c, a.lo)};
}
Iv operator*(Iv a, Iv b) {
  double p[4] = {mul0(a.lo, b.lo), mul0(a.lo, b.hi), mul0(a.hi, b.lo), mul0(a.hi, b.hi)};
  return {*std::min_element(p, p + 4), *std::max_element(p, p + 4)};
}
Iv sqr(Iv a) {
  double l = a.lo * a.lo, h = a.hi * a.hi;
  if (a.lo <= 0.0 && a.hi >= 0.0) return {0.0, std::max(l, h)};
  return {std::min(l, h), std::max(l, h)};
}
Iv exp_neg2(Iv s) { return {std::exp(-2.0 * s.hi), std::exp(-2.0 * s.lo)}; }
Iv sigmoid(Iv z) { return {sigmoid(z.lo), sigmoid(z.hi)}; }
// u(1-u) over u in [lo, hi] within [0, 1]
Iv bernoulli_var(Iv u) {
  double a = u.lo * (1.0 - u.lo), b = u.hi * (1.0 - u.hi);
  double top = (u.lo <= 0.5 && u.hi >= 0.5) ? 0.25 : std::max(a, b);
  return {std::min(a, b), top};
}

struct DatumTerms {
  double lse;   // log f
  double w;     // responsibility of the regression component
  double p;     // contamination probability
  double r, E, F;
};

DatumTerms datum_terms(double x1, double x2, double y, const Vec& x) {
  DatumTerms t;
  t.r = y - x[0] * x1 - x[1] * x2;
  t.E = std::exp(-2.0 * x[2]);
  t.F = std::exp(-2.0 * x[3]);
  t.p = sigmoid(x[4]);
  // log(1-p) = -softplus(l), log p = -softplus(-l)
  const double l = x[4];
  const double log1mp = l > 0 ? -l - std::log1p(std::exp(-l)) : -std::log1p(std::exp(l));
  const double logp = log1mp + l;
  const double la = log1mp - x[2] - 0.5 * t.r * t.r * t.E - kLogSqrt2Pi;
  const double lb = logp - x[3] - 0.5 * y * y * t.F - kLogSqrt2Pi;
  const double m = std::max(la, lb);
  t.lse = m + std::log(std::exp(la - m) + std::exp(lb - m));
  t.w = sigmoid(la - lb);
  return t;
}

}  // namespace

ContaminatedMixtureModel::ContaminatedMixtureModel(Mat xy, PriorSpec prior, Vec floor_box_lo,
                                                   Vec floor_box_hi)
    : xy_(std::move(xy)),
      prior_({Transform::Identity, Transform::Identity, Transform::Log, Transform::Log,
              Transform::Logit},
             std::move(prior)) {
  if (xy_.cols() != 3) throw DataError("contaminated-mixture: expected columns x1, x2, y");
  if (floor_box_lo.size() == 5 && floor_box_hi.size() == 5) {
    if ((floor_box_hi.array() < floor_box_lo.array()).any())
      throw ConfigError("contaminated-mixture: floor box has hi < lo");
    floor_sums_ = Vec::Zero(5);
    for (Eigen::Index i = 0; i < xy_.rows(); ++i) {
      auto [lower, upper] = datum_hessian_enclosure(i, floor_box_lo, floor_box_hi);
      floor_sums_ += lower.diagonal();
    }
    // Prior curvature is at least -curvature() everywhere.
    floor_sums_ -= prior_.curvature();
  }
}

double ContaminatedMixtureModel::log_f(std::size_t i, const Vec& x) const {
  if (i == 0) return prior_.log_density(x);
  auto row = xy_.row(i - 1);
  return datum_terms(row[0], row[1], row[2], x).lse;
}

void ContaminatedMixtureModel::grad_hess_diag(std::size_t i, const Vec& x, Eigen::Ref<Vec> grad,
                                              Eigen::Ref<Vec> hess) const {
  if (i == 0) {
    prior_.grad_hess(x, grad, hess);
    return;
  }
  auto row = xy_.row(i - 1);
  const double x1 = row[0], x2 = row[1], y = row[2];
  const DatumTerms t = datum_terms(x1, x2, y, x);
  const double w = t.w, q = w * (1.0 - w), p = t.p;
  const double rE = t.r * t.E, r2E = t.r * t.r * t.E, y2F = y * y * t.F;
  const double ga[5] = {rE * x1, rE * x2, -1.0 + r2E, 0.0, -p};
  const double gb[5] = {0.0, 0.0, 0.0, -1.0 + y2F, 1.0 - p};
  const double ha[5] = {-x1 * x1 * t.E, -x2 * x2 * t.E, -2.0 * r2E, 0.0, -p * (1.0 - p)};
  const double hb[5] = {0.0, 0.0, 0.0, -2.0 * y2F, -p * (1.0 - p)};
  for (int j = 0; j < 5; ++j) {
    const double delta = ga[j] - gb[j];
    grad[j] = w * ga[j] + (1.0 - w) * gb[j];
    hess[j] = w * ha[j] + (1.0 - w) * hb[j] + q * delta * delta;
  }
}

void ContaminatedMixtureModel::grad_log_f(std::size_t i, const Vec& x,
                                          Eigen::Ref<Vec> out) const {
  Vec h(5);
  grad_hess_diag(i, x, out, h);
}

void ContaminatedMixtureModel::hess_diag_log_f(std::size_t i, const Vec& x,
                                               Eigen::Ref<Vec> out) const {
  Vec g(5);
  grad_hess_diag(i, x, g, out);
}

std::pair<Mat, Mat> ContaminatedMixtureModel::datum_hessian_enclosure(std::size_t row,
                                                                      const Vec& lo,
                                                                      const Vec& hi) const {
  const double x1 = xy_(row, 0), x2 = xy_(row, 1), y = xy_(row, 2);
  const Iv a{lo[0], hi[0]}, b{lo[1], hi[1]}, s{lo[2], hi[2]}, tt{lo[3], hi[3]},
      l{lo[4], hi[4]};
  const Iv r = Iv::point(y) - (x1 * a + x2 * b);
  const Iv E = exp_neg2(s), F = exp_neg2(tt);
  const Iv p = sigmoid(l);
  const Iv pq = bernoulli_var(p);
  const Iv r2E = sqr(r) * E;
  const double y2 = y * y;
  const Iv y2F = y2 * F;
  const Iv z = -l - s + tt - 0.5 * r2E + 0.5 * y2F;
  const Iv w = sigmoid(z);
  const Iv q = bernoulli_var(w);
  const Iv one_minus_w{1.0 - w.hi, 1.0 - w.lo};
  const Iv rE = r * E;

  Iv delta[5] = {x1 * rE, x2 * rE, r2E + -1.0, -y2F + 1.0, Iv::point(-1.0)};
  Iv ha[5][5], hb[5][5];
  for (auto& rowv : ha) std::fill(rowv, rowv + 5, Iv::point(0.0));
  for (auto& rowv : hb) std::fill(rowv, rowv + 5, Iv::point(0.0));
  ha[0][0] = -(x1 * x1) * E;
  ha[0][1] = -(x1 * x2) * E;
  ha[1][1] = -(x2 * x2) * E;
  ha[0][2] = -2.0 * x1 * rE;
  ha[1][2] = -2.0 * x2 * rE;
  ha[2][2] = -2.0 * r2E;
  ha[4][4] = -pq;
  hb[3][3] = -2.0 * y2F;
  hb[4][4] = -pq;

  Mat lower(5, 5), upper(5, 5);
  for (int j = 0; j < 5; ++j) {
    for (int k = j; k < 5; ++k) {
      const Iv dd = j == k ? sqr(delta[j]) : delta[j] * delta[k];
      Iv h = w * ha[j][k] + one_minus_w * hb[j][k] + q * dd;
      // Widen slightly to absorb rounding in the enclosure itself.
      const double pad = 1e-12 * std::max(std::abs(h.lo), std::abs(h.hi));
      lower(j, k) = lower(k, j) = h.lo - pad;
      upper(j, k) = upper(k, j) = h.hi + pad;
    }
  }
  return {lower, upper};
}

CurvatureBounds ContaminatedMixtureModel::scan(const Vec& lo, const Vec& hi) const {
  CurvatureBounds out;
  out.entry = Mat::Zero(5, 5);
  out.diag_variation = Vec::Zero(5);
  for (Eigen::Index i = 0; i < xy_.rows(); ++i) {
    auto [lower, upper] = datum_hessian_enclosure(i, lo, hi);
    out.entry = out.entry.cwiseMax(lower.cwiseAbs()).cwiseMax(upper.cwiseAbs());
    out.diag_variation = out.diag_variation.cwiseMax(upper.diagonal() - lower.diagonal());
  }
  // The prior factor: constant curvature, except a flat logit coordinate whose
  // Jacobian term has curvature in [-1/2, 0].
  Vec pc = prior_.curvature();
  for (int j = 0; j < 5; ++j) {
    out.entry(j, j) = std::max(out.entry(j, j), pc[j]);
    if (j == 4 && pc[j] == 0.5) out.diag_variation[j] = std::max(out.diag_variation[j], 0.5);
  }
  return out;
}

void ContaminatedMixtureModel::prepare_bounds(const Vec& x_hat, const Preconditioner& precond) {
  ladder_.clear();
  for (int k = 0; k < kLadderLevels; ++k) {
    Level level;
    Vec half = std::ldexp(1.0, k) * precond.sqrt_diag;
    level.lo = x_hat - half;
    level.hi = x_hat + half;
    level.bounds = scan(level.lo, level.hi);
    ladder_.push_back(std::move(level));
  }
}

CurvatureBounds ContaminatedMixtureModel::curvature_bounds(const Vec& lo, const Vec& hi,
                                                           std::uint64_t* touches) const {
  for (const Level& level : ladder_) {
    if ((lo.array() >= level.lo.array()).all() && (hi.array() <= level.hi.array()).all())
      return level.bounds;
  }
  if (touches) *touches += xy_.rows();
  return scan(lo, hi);
}

double ContaminatedMixtureModel::phi_lower_bound(const Preconditioner& precond) const {
  if (floor_sums_.size() != 5)
    throw ConfigError("contaminated-mixture: a floor box is needed for the Phi lower bound");
  return 0.5 * precond.diag.dot(floor_sums_);
}

}  // namespace qsmc
