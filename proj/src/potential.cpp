#include "qsmc/potential.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "qsmc/errors.hpp"

namespace qsmc {

double TargetModel::lap_log_f(std::size_t i, const Vec& x) const {
  Vec h(dim());
  hess_diag_log_f(i, x, h);
  return h.sum();
}

CostCounters& CostCounters::operator+=(const CostCounters& o) {
  factor_touches += o.factor_touches;
  phi_evaluations += o.phi_evaluations;
  bound_evaluations += o.bound_evaluations;
  events += o.events;
  layers += o.layers;
  kills += o.kills;
  return *this;
}

namespace {

void check_finite(const Vec& g, const Vec& h, std::size_t i) {
  if (!g.allFinite() || !h.allFinite()) {
    std::ostringstream os;
    os << "non-finite gradient or curvature in factor " << i;
    throw NumericFault(os.str());
  }
}

void sum_range(const TargetModel& model, const Vec& x, std::size_t begin, std::size_t end,
               Vec& grad, Vec& hess) {
  const int d = model.dim();
  Vec g(d), h(d);
  grad.setZero(d);
  hess.setZero(d);
  for (std::size_t i = begin; i < end; ++i) {
    model.grad_hess_diag(i, x, g, h);
    check_finite(g, h, i);
    grad += g;
    hess += h;
  }
}

constexpr std::size_t kBlock = 4096;

}  // namespace

void full_grad_hess(const TargetModel& model, const Vec& x, Vec& grad, Vec& hess_diag,
                    CostCounters* counters) {
  sum_range(model, x, 0, model.n_factors(), grad, hess_diag);
  if (counters) counters->factor_touches += model.n_factors();
}

double phi_unshifted(const TargetModel& model, const Preconditioner& precond, const Vec& x,
                     CostCounters* counters) {
  Vec g, h;
  full_grad_hess(model, x, g, h, counters);
  if (counters) ++counters->phi_evaluations;
  return 0.5 * (precond.diag.dot(g.cwiseProduct(g)) + precond.diag.dot(h));
}

double phi_exact(const TargetModel& model, const Preconditioner& precond, const Vec& x,
                 CostCounters* counters) {
  return phi_unshifted(model, precond, x, counters) - model.phi_lower_bound(precond);
}

ControlVariateCache precompute_control_variates(const TargetModel& model,
                                                const Preconditioner& precond,
                                                const Vec& x_hat, int threads) {
  if (!x_hat.allFinite()) throw NumericFault("precompute_control_variates: x_hat not finite");
  const std::size_t n1 = model.n_factors();
  const std::size_t nblocks = (n1 + kBlock - 1) / kBlock;
  std::vector<Vec> bg(nblocks), bh(nblocks);
  auto work = [&](std::size_t first) {
    for (std::size_t b = first; b < nblocks; b += static_cast<std::size_t>(threads))
      sum_range(model, x_hat, b * kBlock, std::min(n1, (b + 1) * kBlock), bg[b], bh[b]);
  };
  threads = std::max(1, std::min<int>(threads, static_cast<int>(nblocks)));
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, static_cast<std::size_t>(t));
    for (auto& t : pool) t.join();
  }
  ControlVariateCache c;
  c.x_hat = x_hat;
  c.grad_at_hat = Vec::Zero(model.dim());
  c.hess_diag_at_hat = Vec::Zero(model.dim());
  for (std::size_t b = 0; b < nblocks; ++b) {
    c.grad_at_hat += bg[b];
    c.hess_diag_at_hat += bh[b];
  }
  c.div_at_hat = precond.diag.dot(c.hess_diag_at_hat);
  c.phi_floor = model.phi_lower_bound(precond);
  c.n_factors = n1;
  c.c_const = 0.5 * (precond.diag.dot(c.grad_at_hat.cwiseProduct(c.grad_at_hat)) + c.div_at_hat) -
              c.phi_floor;
  if (!std::isfinite(c.c_const)) throw NumericFault("control variate constant is not finite");
  return c;
}

SubsampleDraw draw_subsample(std::size_t n, int batch, RandomStream& rng) {
  if (n < 1) throw std::invalid_argument("draw_subsample: n must be >= 1");
  if (batch < 1) throw std::invalid_argument("draw_subsample: batch must be >= 1");
  SubsampleDraw d;
  d.pairs.reserve(batch);
  for (int k = 0; k < batch; ++k) {
    std::size_t i = rng.index(n + 1);
    std::size_t j = rng.index(n + 1);
    d.pairs.emplace_back(i, j);
  }
  return d;
}

Vec alpha_tilde(const TargetModel& model, std::size_t index, const Vec& x, const Vec& x_hat) {
  if (index >= model.n_factors()) throw std::out_of_range("alpha_tilde: factor index");
  Vec a(model.dim()), b(model.dim());
  model.grad_log_f(index, x, a);
  model.grad_log_f(index, x_hat, b);
  return static_cast<double>(model.n_factors()) * (a - b);
}

double phi_subsampled(const ControlVariateCache& cache, const TargetModel& model,
                      const Preconditioner& precond, const SubsampleDraw& draw, const Vec& x,
                      CostCounters* counters) {
  const int d = model.dim();
  const double n1 = static_cast<double>(model.n_factors());
  Vec gi(d), gih(d), hi(d), hih(d), gj(d), gjh(d);
  double total = 0.0;
  for (auto [i, j] : draw.pairs) {
    if (i >= model.n_factors() || j >= model.n_factors())
      throw std::out_of_range("phi_subsampled: factor index");
    model.grad_hess_diag(i, x, gi, hi);
    model.grad_hess_diag(i, cache.x_hat, gih, hih);
    model.grad_log_f(j, x, gj);
    model.grad_log_f(j, cache.x_hat, gjh);
    double quad = 0.0, curv = 0.0;
    for (int k = 0; k < d; ++k) {
      double ai = n1 * (gi[k] - gih[k]);
      double aj = n1 * (gj[k] - gjh[k]);
      quad += precond.diag[k] * ai * (2.0 * cache.grad_at_hat[k] + aj);
      curv += precond.diag[k] * n1 * (hi[k] - hih[k]);
    }
    total += 0.5 * (quad + curv);
  }
  if (counters) {
    counters->factor_touches += 2 * draw.pairs.size();
    ++counters->phi_evaluations;
  }
  return total / static_cast<double>(draw.pairs.size()) + cache.c_const;
}

PhiBounds phi_bounds_exact(const TargetModel& model, const Preconditioner& precond,
                           const Vec& lo, const Vec& hi, CostCounters* counters) {
  if ((lo.array() > hi.array()).any()) throw std::invalid_argument("phi_bounds_exact: lo > hi");
  if (counters) ++counters->bound_evaluations;
  if (auto b = model.analytic_phi_bounds(precond, lo, hi)) return *b;
  const Vec center = 0.5 * (lo + hi);
  const Vec half = 0.5 * (hi - lo);
  Vec g, h;
  full_grad_hess(model, center, g, h, counters);
  std::uint64_t touches = 0;
  CurvatureBounds cb = model.curvature_bounds(lo, hi, &touches);
  if (counters) counters->factor_touches += touches;
  const double n1 = static_cast<double>(model.n_factors());
  double lower = 0.0, upper = 0.0;
  for (int j = 0; j < model.dim(); ++j) {
    double spread = n1 * cb.entry.row(j).dot(half);
    double glo = g[j] - spread, ghi = g[j] + spread;
    double sqmin = (glo <= 0.0 && ghi >= 0.0) ? 0.0 : std::min(glo * glo, ghi * ghi);
    double sqmax = std::max(glo * glo, ghi * ghi);
    double curv = n1 * cb.diag_variation[j];
    lower += 0.5 * precond.diag[j] * (sqmin + h[j] - curv);
    upper += 0.5 * precond.diag[j] * (sqmax + h[j] + curv);
  }
  const double floor = model.phi_lower_bound(precond);
  lower = std::max(lower - floor, 0.0);
  upper -= floor;
  return {lower, std::max(upper, lower)};
}

PhiBounds phi_bounds_lipschitz(const TargetModel& model, const Preconditioner& precond,
                               const Vec& lo, const Vec& hi, double grad_bound,
                               CostCounters* counters) {
  if (counters) ++counters->bound_evaluations;
  const Vec center = 0.5 * (lo + hi);
  double r = (0.5 * (hi - lo)).norm();
  double mid = phi_exact(model, precond, center, counters);
  return {std::max(0.0, mid - grad_bound * r), mid + grad_bound * r};
}

PhiBounds phi_bounds_subsampled(const ControlVariateCache& cache, const TargetModel& model,
                                const Preconditioner& precond, const Vec& lo, const Vec& hi,
                                CostCounters* counters) {
  if ((lo.array() > hi.array()).any())
    throw std::invalid_argument("phi_bounds_subsampled: lo > hi");
  if (counters) ++counters->bound_evaluations;
  const Vec rlo = lo.cwiseMin(cache.x_hat);
  const Vec rhi = hi.cwiseMax(cache.x_hat);
  std::uint64_t touches = 0;
  CurvatureBounds cb = model.curvature_bounds(rlo, rhi, &touches);
  if (counters) counters->factor_touches += touches;
  const Vec reach = (lo - cache.x_hat).cwiseAbs().cwiseMax((hi - cache.x_hat).cwiseAbs());
  const double n1 = static_cast<double>(model.n_factors());
  double spread = 0.0;
  for (int j = 0; j < model.dim(); ++j) {
    double a = n1 * cb.entry.row(j).dot(reach);
    spread += 0.5 * precond.diag[j] *
              (a * (2.0 * std::abs(cache.grad_at_hat[j]) + a) + n1 * cb.diag_variation[j]);
  }
  return {cache.c_const - spread, cache.c_const + spread};
}

ExactPhiProvider::ExactPhiProvider(const TargetModel& model, Preconditioner precond)
    : model_(model), precond_(std::move(precond)) {}

PhiBounds ExactPhiProvider::bounds(const Vec& lo, const Vec& hi, CostCounters& counters) const {
  return phi_bounds_exact(model_, precond_, lo, hi, &counters);
}

double ExactPhiProvider::evaluate(const Vec& x, RandomStream&, CostCounters& counters) const {
  return phi_exact(model_, precond_, x, &counters);
}

SubsampledPhiProvider::SubsampledPhiProvider(const TargetModel& model, Preconditioner precond,
                                             ControlVariateCache cache, int batch)
    : model_(model), precond_(std::move(precond)), cache_(std::move(cache)), batch_(batch) {
  if (batch < 1) throw ConfigError("subsample batch must be >= 1");
}

void SubsampledPhiProvider::set_floor_region(const Vec& region_lo, const Vec& region_hi) {
  region_lo_ = region_lo;
  region_hi_ = region_hi;
  floor_ = phi_bounds_subsampled(cache_, model_, precond_, region_lo, region_hi).lower;
}

double SubsampledPhiProvider::global_lower() const {
  if (!floor_) throw ConfigError("subsampled rate floor requested without a floor region");
  return *floor_;
}

PhiBounds SubsampledPhiProvider::bounds(const Vec& lo, const Vec& hi,
                                        CostCounters& counters) const {
  return phi_bounds_subsampled(cache_, model_, precond_, lo, hi, &counters);
}

double SubsampledPhiProvider::evaluate(const Vec& x, RandomStream& rng,
                                       CostCounters& counters) const {
  SubsampleDraw draw = draw_subsample(model_.n_data(), batch_, rng);
  return phi_subsampled(cache_, model_, precond_, draw, x, &counters);
}

SameBoundPhiProvider::SameBoundPhiProvider(const TargetModel& model, Preconditioner precond,
                                           ControlVariateCache cache)
    : model_(model), precond_(std::move(precond)), cache_(std::move(cache)) {}

PhiBounds SameBoundPhiProvider::bounds(const Vec& lo, const Vec& hi,
                                       CostCounters& counters) const {
  PhiBounds b = phi_bounds_subsampled(cache_, model_, precond_, lo, hi, &counters);
  return {std::max(b.lower, 0.0), std::max(b.upper, 0.0)};
}

double SameBoundPhiProvider::evaluate(const Vec& x, RandomStream&,
                                      CostCounters& counters) const {
  return phi_exact(model_, precond_, x, &counters);
}

}  // namespace qsmc
