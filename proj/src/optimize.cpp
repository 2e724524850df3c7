#include "qsmc/optimize.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "qsmc/errors.hpp"
#include "qsmc/potential.hpp"

namespace qsmc {
namespace {

struct Objective {
  const TargetModel* model;
  std::vector<std::size_t> rows;  // data factor indices (1-based); empty = all
  double scale = 1.0;             // likelihood multiplier for a subsample
};

double neg_log_post(const Objective& ob, const Vec& x) {
  double total = ob.model->log_f(0, x);
  double like = 0.0;
  if (ob.rows.empty()) {
    for (std::size_t i = 1; i < ob.model->n_factors(); ++i) like += ob.model->log_f(i, x);
  } else {
    for (std::size_t i : ob.rows) like += ob.model->log_f(i, x);
  }
  total += ob.scale * like;
  return std::isfinite(total) ? -total : std::numeric_limits<double>::max();
}

Vec neg_grad(const Objective& ob, const Vec& x) {
  const int d = ob.model->dim();
  Vec g(d), acc = Vec::Zero(d);
  if (ob.rows.empty()) {
    for (std::size_t i = 1; i < ob.model->n_factors(); ++i) {
      ob.model->grad_log_f(i, x, g);
      acc += g;
    }
  } else {
    for (std::size_t i : ob.rows) {
      ob.model->grad_log_f(i, x, g);
      acc += g;
    }
  }
  acc *= ob.scale;
  ob.model->grad_log_f(0, x, g);
  return -(acc + g);
}

Vec to_vec(const gsl_vector* v) {
  Vec x(v->size);
  for (std::size_t j = 0; j < v->size; ++j) x[j] = gsl_vector_get(v, j);
  return x;
}

double f_cb(const gsl_vector* v, void* p) { return neg_log_post(*static_cast<Objective*>(p), to_vec(v)); }

void df_cb(const gsl_vector* v, void* p, gsl_vector* df) {
  Vec g = neg_grad(*static_cast<Objective*>(p), to_vec(v));
  for (Eigen::Index j = 0; j < g.size(); ++j) gsl_vector_set(df, j, g[j]);
}

void fdf_cb(const gsl_vector* v, void* p, double* f, gsl_vector* df) {
  *f = f_cb(v, p);
  df_cb(v, p, df);
}

Vec minimize(Objective& ob, const Vec& start, const ModeOptions& opts) {
  const int d = ob.model->dim();
  gsl_multimin_function_fdf fn{&f_cb, &df_cb, &fdf_cb, static_cast<std::size_t>(d), &ob};
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x0(gsl_vector_alloc(d), gsl_vector_free);
  for (int j = 0; j < d; ++j) gsl_vector_set(x0.get(), j, start[j]);
  std::unique_ptr<gsl_multimin_fdfminimizer, decltype(&gsl_multimin_fdfminimizer_free)> s(
      gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, d),
      gsl_multimin_fdfminimizer_free);
  gsl_multimin_fdfminimizer_set(s.get(), &fn, x0.get(), 0.01, 0.1);
  const double n = ob.rows.empty() ? static_cast<double>(ob.model->n_factors())
                                   : ob.scale * static_cast<double>(ob.rows.size());
  for (int it = 0; it < opts.max_iterations; ++it) {
    int status = gsl_multimin_fdfminimizer_iterate(s.get());
    if (status == GSL_ENOPROG) break;  // line search cannot improve further
    if (status != GSL_SUCCESS) break;
    if (gsl_multimin_test_gradient(s->gradient, opts.grad_tolerance * n) == GSL_SUCCESS) break;
  }
  Vec out = to_vec(s->x);
  if (!out.allFinite()) throw NumericFault("mode search produced a non-finite point");
  return out;
}

}  // namespace

Vec find_mode(const TargetModel& model, const Vec& start, const ModeOptions& opts) {
  gsl_set_error_handler_off();
  Vec x = start;
  const std::size_t n = model.n_data();
  if (opts.warm_start_rows > 0 && n > 2 * opts.warm_start_rows) {
    Objective sub{&model, {}, 1.0};
    const std::size_t m = opts.warm_start_rows;
    for (std::size_t k = 0; k < m; ++k) sub.rows.push_back(1 + k * n / m);
    sub.scale = static_cast<double>(n) / static_cast<double>(m);
    x = minimize(sub, x, opts);
  }
  Objective full{&model, {}, 1.0};
  return minimize(full, x, opts);
}

Vec inverse_information_diag(const TargetModel& model, const Vec& x) {
  Vec grad, hess;
  full_grad_hess(model, x, grad, hess);
  Vec out(hess.size());
  for (Eigen::Index j = 0; j < hess.size(); ++j) {
    double info = -hess[j];
    if (!(info > 0.0) || !std::isfinite(info))
      throw NumericFault("observed information is not positive in coordinate " +
                         std::to_string(j) + "; set precond explicitly");
    out[j] = 1.0 / info;
  }
  return out;
}

}  // namespace qsmc
