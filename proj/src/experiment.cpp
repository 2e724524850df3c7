#include "qsmc/experiment.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "qsmc/errors.hpp"
#include "qsmc/optimize.hpp"
#include "qsmc/potential.hpp"

namespace qsmc {
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const Vec& v) {
  std::string s;
  for (Eigen::Index j = 0; j < v.size(); ++j) s += (j ? "," : "") + num(v[j]);
  return s;
}

Vec broadcast(const Vec& v, int dim, const std::string& key) {
  if (v.size() == dim) return v;
  if (v.size() == 1) return Vec::Constant(dim, v[0]);
  throw ConfigError(key + " has " + std::to_string(v.size()) + " entries, model dimension is " +
                    std::to_string(dim));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void append_counters(std::ostringstream& os, const CostCounters& c) {
  os << "factor_touches = " << c.factor_touches << "\n"
     << "phi_evaluations = " << c.phi_evaluations << "\n"
     << "bound_evaluations = " << c.bound_evaluations << "\n"
     << "events = " << c.events << "\n"
     << "layers = " << c.layers << "\n"
     << "kills = " << c.kills << "\n";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read '" + p.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::map<std::string, std::string> read_summary(const fs::path& dir) {
  std::map<std::string, std::string> out;
  std::istringstream is(read_file(dir / "run_summary.txt"));
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find(" = ");
    if (eq == std::string::npos || line[0] == '#' || line[0] == '[') continue;
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

// Groups particles.csv rows by checkpoint time.
OccupationEstimate load_occupation(const fs::path& dir, double t_star) {
  Dataset rows = parse_csv(read_file(dir / "particles.csv"), (dir / "particles.csv").string());
  const int d = static_cast<int>(rows.columns.size()) - 3;
  if (d < 1 || rows.columns.front() != "time" || rows.columns.back() != "weight")
    throw DataError((dir / "particles.csv").string() + ": unexpected header");
  OccupationEstimate est(t_star);
  std::vector<Vec> states;
  std::vector<double> weights;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    states.push_back(rows.values.row(r).segment(2, d).transpose());
    weights.push_back(rows.values(r, d + 2));
    if (r + 1 == rows.rows() || rows.values(r + 1, 0) != rows.values(r, 0)) {
      est.add(rows.values(r, 0), states, weights);
      states.clear();
      weights.clear();
    }
  }
  return est;
}

double normal_cdf(double x, double mu, double sd) {
  return 0.5 * std::erfc(-(x - mu) / (sd * std::sqrt(2.0)));
}

}  // namespace

void write_atomic(const std::string& path, const std::string& content) {
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

PreparedModel prepare_model(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  PreparedModel pm;
  const Family family = cfg.model.family;

  if (!cfg.data_path.empty()) {
    pm.data = load_csv(cfg.data_path, family);
  } else {
    ModelSpec gen = ModelSpec::defaults(family, static_cast<int>(cfg.true_params.size()));
    gen.noise_sd = cfg.model.noise_sd;
    pm.data = generate_synthetic(gen, cfg.synthetic_n, cfg.true_params, cfg.data_seed);
  }

  int dim = 1;
  switch (family) {
    case Family::GaussianLocation: dim = static_cast<int>(pm.data.columns.size()); break;
    case Family::T5Location: dim = 1; break;
    case Family::LogisticRegression: dim = static_cast<int>(pm.data.columns.size()); break;
    case Family::ContaminatedMixture: dim = 5; break;
  }
  ModelSpec spec = ModelSpec::defaults(family, dim);
  spec.noise_sd = cfg.model.noise_sd;
  if (cfg.model.prior.mean.size()) spec.prior.mean = broadcast(cfg.model.prior.mean, dim, "prior_mean");
  if (cfg.model.prior.sd.size()) spec.prior.sd = broadcast(cfg.model.prior.sd, dim, "prior_sd");
  if (cfg.model.floor_box_lo.size()) spec.floor_box_lo = broadcast(cfg.model.floor_box_lo, dim, "floor_box_lo");
  if (cfg.model.floor_box_hi.size()) spec.floor_box_hi = broadcast(cfg.model.floor_box_hi, dim, "floor_box_hi");
  pm.model = build_model(spec, pm.data);

  if (cfg.x_hat.size()) {
    pm.x_hat = broadcast(cfg.x_hat, dim, "x_hat");
  } else {
    Vec from = cfg.mode_start.size() ? broadcast(cfg.mode_start, dim, "mode_start") : spec.prior.mean;
    pm.x_hat = find_mode(*pm.model, from);
  }

  std::string kind = cfg.precond;
  if (kind == "default")
    kind = (family == Family::GaussianLocation || family == Family::T5Location) ? "scaled" : "info";
  const double n = static_cast<double>(pm.model->n_data());
  if (kind == "identity") pm.precond = Preconditioner::identity(dim);
  else if (kind == "scaled") pm.precond = Preconditioner::scaled(Vec::Ones(dim), n);
  else if (kind == "info") pm.precond = Preconditioner::from_diag(inverse_information_diag(*pm.model, pm.x_hat));
  else pm.precond = Preconditioner::from_diag(broadcast(cfg.precond_diag, dim, "precond"));

  pm.model->prepare_bounds(pm.x_hat, pm.precond);
  pm.start = cfg.start.size() ? broadcast(cfg.start, dim, "start") : pm.x_hat;
  pm.prepare_seconds = seconds_since(t0);
  return pm;
}

std::unique_ptr<PhiProvider> make_phi_provider(const ExperimentConfig& cfg,
                                               const PreparedModel& pm) {
  if (!engine_subsamples(cfg.run.engine))
    return std::make_unique<ExactPhiProvider>(*pm.model, pm.precond);
  auto cache = precompute_control_variates(*pm.model, pm.precond, pm.x_hat, cfg.run.threads);
  auto p = std::make_unique<SubsampledPhiProvider>(*pm.model, pm.precond, std::move(cache), cfg.batch);
  if (cfg.run.engine == Engine::RScale) {
    Vec reach = cfg.floor_region_sd * pm.precond.sqrt_diag;
    p->set_floor_region(pm.x_hat - reach, pm.x_hat + reach);
  }
  return p;
}

RunResult run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  PreparedModel pm = prepare_model(cfg);
  auto phi = make_phi_provider(cfg, pm);
  log << "model " << pm.model->name() << ", n = " << pm.model->n_data() << ", d = "
      << pm.model->dim() << "\nx_hat = " << pm.x_hat.transpose()
      << "\nprecond = " << pm.precond.diag.transpose() << "\n";
  RunResult res = run_engine(cfg.run, *phi, pm.precond, pm.start);
  const double wall = seconds_since(t0);
  const int d = pm.model->dim();

  std::string particles;
  {
    std::ostringstream os;
    os << "time,particle";
    for (int j = 0; j < d; ++j) os << ",x" << j;
    os << ",weight\n";
    particles = os.str();
  }
  std::ostringstream summary;
  summary << "time,ess,resampled,factor_touches,phi_evaluations,bound_evaluations,events,layers,kills";
  for (int j = 0; j < d; ++j) summary << ",mean_x" << j;
  summary << "\n";
  for (const auto& rec : res.records) {
    const std::string t = num(rec.time);
    Vec m = Vec::Zero(d);
    for (std::size_t k = 0; k < rec.states.size(); ++k) {
      particles += t;
      particles += ',';
      particles += std::to_string(k);
      for (int j = 0; j < d; ++j) {
        particles += ',';
        particles += num(rec.states[k][j]);
      }
      particles += ',';
      particles += num(rec.weights[k]);
      particles += '\n';
      m += rec.weights[k] * rec.states[k];
    }
    const auto& c = rec.counters;
    summary << t << ',' << num(rec.ess) << ',' << (rec.resampled ? 1 : 0) << ',' << c.factor_touches
            << ',' << c.phi_evaluations << ',' << c.bound_evaluations << ',' << c.events << ','
            << c.layers << ',' << c.kills;
    for (int j = 0; j < d; ++j) summary << ',' << num(m[j]);
    summary << "\n";
  }

  OccupationEstimate occ = OccupationEstimate::from_records(res.records, cfg.run.burn_in);
  std::ostringstream rs;
  rs << "# qsmc run summary\n[config]\n";
  for (const auto& [k, v] : cfg.echo) rs << k << " = " << v << "\n";
  rs << "[data]\nprovenance = " << pm.data.provenance << "\n"
     << "n_data = " << pm.model->n_data() << "\n"
     << "dim = " << d << "\n"
     << "[setup]\nx_hat = " << join(pm.x_hat) << "\n"
     << "precond_diag = " << join(pm.precond.diag) << "\n"
     << "start = " << join(pm.start) << "\n"
     << "[results]\ncheckpoints_used = " << occ.checkpoints() << "\n"
     << "posterior_mean = " << join(occ.mean()) << "\n";
  Mat cov = occ.covariance();
  rs << "posterior_cov = " << join(Eigen::Map<Vec>(cov.data(), cov.size())) << "\n";
  if (occ.checkpoints() >= 20) rs << "posterior_mean_se = " << join(occ.batch_means_se(20)) << "\n";
  append_counters(rs, res.total);
  rs << "touches_per_unit_time = " << num(static_cast<double>(res.total.factor_touches) / cfg.run.horizon)
     << "\n"
     << "setup_seconds = " << num(pm.prepare_seconds) << "\n"
     << "wall_seconds = " << num(wall) << "\n";

  fs::create_directories(cfg.output);
  write_atomic((fs::path(cfg.output) / "particles.csv").string(), particles);
  write_atomic((fs::path(cfg.output) / "summary.csv").string(), summary.str());
  write_atomic((fs::path(cfg.output) / "run_summary.txt").string(), rs.str());
  log << "posterior mean " << occ.mean().transpose() << "\nwrote " << cfg.output << "\n";
  return res;
}

std::string diagnose(const DiagnoseOptions& opts) {
  if (opts.run_dirs.empty()) throw ConfigError("diagnose: no run directory given");
  if (opts.bins < 1) throw ConfigError("diagnose: bins must be >= 1");
  const fs::path first(opts.run_dirs.front());
  auto info = read_summary(first);
  double t_star = opts.burn_in;
  if (t_star < 0.0) t_star = info.count("burn_in") ? std::stod(info["burn_in"]) : 0.0;
  OccupationEstimate occ = load_occupation(first, t_star);
  if (occ.checkpoints() == 0) throw DataError("diagnose: no checkpoints at or after burn-in");
  const Vec mean = occ.mean();
  const int d = static_cast<int>(mean.size());
  const fs::path out = opts.output.empty() ? first / "diagnose" : fs::path(opts.output);
  fs::create_directories(out);

  std::ostringstream rep;
  rep << "run = " << first.string() << "\nburn_in = " << num(t_star)
      << "\ncheckpoints_used = " << occ.checkpoints() << "\nposterior_mean = " << join(mean) << "\n";
  Mat cov = occ.covariance();
  rep << "posterior_cov = " << join(Eigen::Map<Vec>(cov.data(), cov.size())) << "\n";
  if (occ.checkpoints() >= 20) rep << "posterior_mean_se = " << join(occ.batch_means_se(20)) << "\n";

  if (!opts.reference.empty()) {
    Vec ks(d);
    if (opts.reference.rfind("normal:", 0) == 0) {
      Vec p = parse_vector(opts.reference.substr(7), "reference");
      if (p.size() != 2 || !(p[1] > 0.0)) throw ConfigError("reference normal:mu,sd needs sd > 0");
      for (int j = 0; j < d; ++j)
        ks[j] = occ.ks_distance(j, [&](double x) { return normal_cdf(x, p[0], p[1]); });
    } else {
      OccupationEstimate other = load_occupation(opts.reference, t_star);
      for (int j = 0; j < d; ++j) ks[j] = occ.ks_distance(j, other);
    }
    rep << "reference = " << opts.reference << "\nks = " << join(ks) << "\n";
  }

  for (int j = 0; j < d; ++j) {
    auto [lo, hi] = occ.range(j);
    if (!(hi > lo)) hi = lo + 1.0;
    auto h = occ.histogram(j, opts.bins, lo, hi);
    std::ostringstream csv;
    csv << "bin_lo,bin_hi,mass,density\n";
    const double w = (hi - lo) / opts.bins;
    for (int b = 0; b < opts.bins; ++b)
      csv << num(lo + b * w) << ',' << num(lo + (b + 1) * w) << ',' << num(h[b]) << ','
          << num(h[b] / w) << "\n";
    write_atomic((out / ("histogram_x" + std::to_string(j) + ".csv")).string(), csv.str());
  }

  // ESS and mean trace straight from the run's summary.
  write_atomic((out / "ess_trace.csv").string(), read_file(first / "summary.csv"));

  if (opts.run_dirs.size() > 1) {
    std::ostringstream cost;
    cost << "run,n_data,horizon,factor_touches,touches_per_unit_time\n";
    for (const auto& dir : opts.run_dirs) {
      auto s = read_summary(dir);
      cost << dir << ',' << s["n_data"] << ',' << s["horizon"] << ',' << s["factor_touches"] << ','
           << s["touches_per_unit_time"] << "\n";
    }
    write_atomic((out / "cost_table.csv").string(), cost.str());
    rep << "cost_table = " << (out / "cost_table.csv").string() << "\n";
  }
  write_atomic((out / "report.txt").string(), rep.str());
  return rep.str();
}

namespace {

struct PhiObjective {
  const TargetModel* model;
  const Preconditioner* precond;
  Vec lo, hi;
};

double phi_clamped(const gsl_vector* v, void* p) {
  auto* ob = static_cast<PhiObjective*>(p);
  Vec x(v->size);
  for (std::size_t j = 0; j < v->size; ++j)
    x[j] = std::clamp(gsl_vector_get(v, j), ob->lo[j], ob->hi[j]);
  double val = phi_unshifted(*ob->model, *ob->precond, x);
  return std::isfinite(val) ? val : 1e300;
}

}  // namespace

PhiBoundEstimate estimate_phi_bound(const TargetModel& model, const Preconditioner& precond,
                                    const Vec& lo, const Vec& hi, int grid_per_dim) {
  const int d = model.dim();
  if (lo.size() != d || hi.size() != d) throw ConfigError("search box dimension mismatch");
  if ((hi.array() < lo.array()).any() || !lo.allFinite() || !hi.allFinite())
    throw ConfigError("search box must be bounded with lo <= hi");
  int g = grid_per_dim > 0 ? grid_per_dim
                           : std::max(3, static_cast<int>(std::pow(20001.0, 1.0 / d)));
  PhiBoundEstimate best{INFINITY, lo, 0};
  std::vector<int> idx(d, 0);
  for (;;) {
    Vec x(d);
    for (int j = 0; j < d; ++j)
      x[j] = hi[j] == lo[j] ? lo[j] : lo[j] + (hi[j] - lo[j]) * idx[j] / (g - 1.0);
    double v = phi_unshifted(model, precond, x);
    ++best.grid_points;
    if (v < best.value) best = {v, x, best.grid_points};
    int j = 0;
    while (j < d && ++idx[j] == ((hi[j] == lo[j]) ? 1 : g)) idx[j++] = 0;
    if (j == d) break;
  }
  if ((hi - lo).maxCoeff() == 0.0) return best;

  gsl_set_error_handler_off();
  PhiObjective ob{&model, &precond, lo, hi};
  gsl_multimin_function fn{&phi_clamped, static_cast<std::size_t>(d), &ob};
  gsl_vector* x0 = gsl_vector_alloc(d);
  gsl_vector* step = gsl_vector_alloc(d);
  for (int j = 0; j < d; ++j) {
    gsl_vector_set(x0, j, best.argmin[j]);
    gsl_vector_set(step, j, std::max(1e-12, (hi[j] - lo[j]) / (g - 1.0)));
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, d);
  gsl_multimin_fminimizer_set(s, &fn, x0, step);
  for (int it = 0; it < 5000; ++it) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-10) == GSL_SUCCESS) break;
  }
  Vec x(d);
  for (int j = 0; j < d; ++j) x[j] = std::clamp(gsl_vector_get(s->x, j), lo[j], hi[j]);
  double v = phi_unshifted(model, precond, x);
  if (v < best.value) {
    best.value = v;
    best.argmin = x;
  }
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(x0);
  gsl_vector_free(step);
  return best;
}

}  // namespace qsmc
