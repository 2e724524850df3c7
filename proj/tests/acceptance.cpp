// Acceptance suite: one PASS/FAIL line per criterion. Tolerances, sizes and
// seeds are pinned below. Run with criterion numbers as arguments to select
// a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qsmc/bessel.hpp"
#include "qsmc/experiment.hpp"
#include "qsmc/fpt.hpp"
#include "qsmc/optimize.hpp"
#include "qsmc/potential.hpp"

namespace fs = std::filesystem;
using namespace qsmc;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "qsmc_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    std::ofstream(d / "toy.csv") << "y\n-3.5\n-2.5\n-1.5\n-0.5\n0.5\n1.5\n2.5\n3.5\n";
    return d;
  }();
  return dir;
}

// n = 8 toy whose posterior is exactly N(0, 1).
std::string toy_config(const std::string& engine, std::size_t particles, double horizon,
                       double burn_in, std::uint64_t seed) {
  return fmt("engine = %s\nmodel = gaussian-location\ndata = toy.csv\n"
             "noise_sd = 2.8284271247461903\nprior_sd = inf\nprecond = identity\nx_hat = 0\n"
             "particles = %zu\nhorizon = %g\ncheckpoint_gap = 0.1\nburn_in = %g\nseed = %llu\n",
             engine.c_str(), particles, horizon, burn_in,
             static_cast<unsigned long long>(seed));
}

ExperimentConfig config_from(const std::string& text) {
  return parse_config(text, "acceptance", scratch().string());
}

struct RunOutcome {
  OccupationEstimate occ;
  CostCounters total;
  double median_ess = 0.0;
};

RunOutcome run_in_process(const ExperimentConfig& cfg) {
  PreparedModel pm = prepare_model(cfg);
  auto phi = make_phi_provider(cfg, pm);
  RunResult res = run_engine(cfg.run, *phi, pm.precond, pm.start);
  std::vector<double> ess;
  for (const auto& rec : res.records) ess.push_back(rec.ess);
  std::nth_element(ess.begin(), ess.begin() + ess.size() / 2, ess.end());
  return {OccupationEstimate::from_records(res.records, cfg.run.burn_in), res.total,
          ess[ess.size() / 2]};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

const char* kEngines[] = {"qsmc", "scale", "r-qsmc", "r-scale"};

// 1. First-passage sampler exactness.
Verdict fpt_exactness() {
  const int draws = 1000000;
  RandomStream rng(101);
  std::vector<double> tau(draws);
  double plus = 0.0;
  for (int i = 0; i < draws; ++i) {
    UnitFpt u = sample_unit_fpt(rng);
    tau[i] = u.tau_bar;
    plus += u.sign > 0;
  }
  auto m = oracle::mean_se(tau);
  const double freq = plus / draws;
  const double ks = oracle::ks_distance(tau, [](double t) { return oracle::fpt_series_cdf(t, 10000); });
  bool ok = std::abs(m.mean - 1.0) <= 0.01 && std::abs(freq - 0.5) <= 0.002 && ks < 0.002;
  return {ok, fmt("mean %.5f (|-1| <= 0.01), plus fraction %.5f (|-0.5| <= 0.002), KS %.5f (< 0.002)",
                  m.mean, freq, ks)};
}

// 2. Envelope constants and refinement counts.
Verdict fpt_constants() {
  UnitFptProposalConstants c = compute_unit_fpt_constants(0.64);
  const double r1 = std::round(c.M1 * 1e6) / 1e6, r2 = std::round(c.M2 * 1e6) / 1e6;
  RandomStream rng(102);
  FptStats stats;
  for (int i = 0; i < 200000; ++i) sample_unit_fpt(rng, &stats);
  const double inner = static_cast<double>(stats.refinements) / static_cast<double>(stats.proposals);
  bool ok = std::abs(r1 - 0.422599) < 5e-7 && std::abs(r2 - 0.578103) < 5e-7 && inner <= 3.0;
  return {ok, fmt("M1 %.7f -> %.6f (0.422599), M2 %.7f -> %.6f (0.578103), mean inner refinements %.3f (<= 3)",
                  c.M1, r1, c.M2, r2, inner)};
}

// 3. Bridge-point law and the behaviour of its acceptance bounds.
Verdict bessel_bridge() {
  std::string detail;
  bool ok = true;
  struct Case {
    double tau, W_tau;
  };
  // A short layer (three-Gaussian proposal) and a long one (series proposal).
  for (Case c : {Case{1.0, 1.0}, Case{3.0, -1.0}}) {
    RandomStream rng(103);
    const double theta = 1.0, q = 0.5;
    const int bins = 50, draws = 100000;
    std::vector<double> edges(bins + 1), counts(bins, 0.0);
    for (int b = 0; b <= bins; ++b) edges[b] = -theta + 2.0 * theta * b / bins;
    for (int i = 0; i < draws; ++i) {
      double w = sample_bessel_bridge_point(0.0, c.tau, 0.0, c.W_tau, theta, q, rng);
      counts[std::clamp(static_cast<int>((w + theta) / (2.0 * theta) * bins), 0, bins - 1)] += 1.0;
    }
    auto probs = oracle::constrained_bridge_bin_probs(0.0, q, c.tau, 0.0, c.W_tau, theta, edges);
    double p = oracle::chi_square_pvalue(counts, probs);
    ok = ok && p > 0.01;
    detail += fmt("chi2 p (tau=%g) %.4f (> 0.01); ", c.tau, p);
  }
  RandomStream rng(203);
  int order_fail = 0, ratio_fail = 0, ratios = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double theta = 0.1 + 3.0 * rng.uniform();
    const double W_s = rng.normal();
    const FirstPassage fp = sample_fpt(W_s, theta, rng);
    const double q = fp.tau * rng.uniform();
    const double W_q = sample_bessel_bridge_point(0.0, fp.tau, W_s, fp.endpoint, theta, q, rng);
    double prev_lo = 0.0, prev_hi = 1.0, prev_gap = -1.0;
    for (int n = 1; n <= 8; ++n) {
      auto [lo, hi] = bessel_acceptance_bounds(n, 0.0, q, fp.tau, W_s, W_q, fp.endpoint, theta);
      if (lo > hi || lo < prev_lo - 1e-13 || hi > prev_hi + 1e-13) ++order_fail;
      const double gap = hi - lo;
      if (prev_gap > 1e-12) {
        ++ratios;
        worst = std::max(worst, gap / prev_gap);
        if (!(gap < prev_gap)) ++ratio_fail;
      }
      prev_lo = lo;
      prev_hi = hi;
      prev_gap = gap;
    }
  }
  ok = ok && order_fail == 0 && ratio_fail == 0;
  detail += fmt("1000 inputs: monotonicity failures %d, gap ratios checked %d, max ratio %.4f (< 1)",
                order_fail, ratios, worst);
  return {ok, detail};
}

// 4. The exhaustive mean over all (n+1)^2 index pairs reproduces the rate.
Verdict subsampling_unbiased() {
  RandomStream rng(104);
  Mat x(8, 2);
  Vec y(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = rng.normal();
    y[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  }
  LogisticRegressionModel model(x, y, PriorSpec{Vec::Zero(2), Vec::Constant(2, 2.0)});
  Vec x_hat = find_mode(model, Vec::Zero(2));
  auto pc = Preconditioner::from_diag(inverse_information_diag(model, x_hat));
  auto cache = precompute_control_variates(model, pc, x_hat);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    Vec at = x_hat + Vec::NullaryExpr(2, [&] { return rng.normal(); });
    double sum = 0.0;
    for (std::size_t i = 0; i <= 8; ++i)
      for (std::size_t j = 0; j <= 8; ++j) {
        SubsampleDraw d;
        d.pairs = {{i, j}};
        sum += phi_subsampled(cache, model, pc, d, at);
      }
    const double exact = phi_exact(model, pc, at);
    worst = std::max(worst, std::abs(sum / 81.0 - exact) / std::abs(exact));
  }
  return {worst <= 1e-12, fmt("max relative error over 100 points %.3e (<= 1e-12)", worst)};
}

// 5. Each engine's occupation measure against N(0, 1).
Verdict quasi_stationary() {
  bool ok = true;
  std::string detail;
  for (const char* e : kEngines) {
    auto t0 = std::chrono::steady_clock::now();
    RunOutcome r = run_in_process(config_from(toy_config(e, 1024, 50.0, 10.0, 105)));
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double ks = r.occ.ks_distance(0, normal_cdf);
    double limit = std::string(e) == "qsmc" ? 0.02 : 0.03;
    ok = ok && ks < limit && secs < 600.0;
    detail += fmt("%s KS %.4f (< %.2f, %.0f s); ", e, ks, limit, secs);
  }
  return {ok, detail};
}

// 6. Posterior means over replicate seeds agree across engines.
Verdict cross_agreement() {
  const int seeds = 20;
  std::vector<oracle::Estimate> est;
  std::string detail;
  for (const char* e : kEngines) {
    std::vector<double> means;
    for (int s = 0; s < seeds; ++s)
      means.push_back(run_in_process(config_from(toy_config(e, 256, 20.0, 5.0, 600 + s))).occ.mean()[0]);
    est.push_back(oracle::mean_se(means));
    detail += fmt("%s %.4f+-%.4f; ", e, est.back().mean, est.back().se);
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < est.size(); ++a)
    for (std::size_t b = a + 1; b < est.size(); ++b)
      worst = std::max(worst, std::abs(est[a].mean - est[b].mean) /
                                  std::hypot(est[a].se, est[b].se));
  detail += fmt("max pairwise z %.2f (<= 3)", worst);
  return {worst <= 3.0, detail};
}

// 7. Menarche logistic regression against the maximum-likelihood fit.
Verdict logistic_menarche() {
  const std::string cfg_text =
      "engine = scale\nmodel = logistic-regression\ndata = " + std::string(QSMC_SOURCE_DIR) +
      "/data/menarche.csv\nprior_sd = inf\nparticles = 100\nhorizon = 200\ncheckpoint_gap = 0.1\n"
      "burn_in = 10\ntheta_scale = 0.25\nseed = 107\n";
  ExperimentConfig cfg = config_from(cfg_text);
  PreparedModel pm = prepare_model(cfg);
  auto phi = make_phi_provider(cfg, pm);
  RunResult res = run_engine(cfg.run, *phi, pm.precond, pm.start);
  OccupationEstimate occ = OccupationEstimate::from_records(res.records, cfg.run.burn_in);
  const Vec mean = occ.mean(), se_mc = occ.batch_means_se(20);

  // Maximum likelihood fit and its standard errors from the Fisher information.
  const Mat& v = pm.data.values;
  Vec mle = find_mode(*pm.model, pm.x_hat);
  Mat info = Mat::Zero(2, 2);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    Vec xi(2);
    xi << 1.0, v(i, 0);
    double p = 1.0 / (1.0 + std::exp(-xi.dot(mle)));
    info += p * (1.0 - p) * xi * xi.transpose();
  }
  Vec se_glm = info.inverse().diagonal().cwiseSqrt();
  const Vec target = (Vec(2) << 1.410, 4.658).finished();
  bool ok = v.rows() == 3918;
  std::string detail = fmt("n %ld, MLE [%.3f, %.3f]; ", static_cast<long>(v.rows()), mle[0], mle[1]);
  for (int j = 0; j < 2; ++j) {
    double combined = std::hypot(se_mc[j], se_glm[j]);
    double z = std::abs(mean[j] - target[j]) / combined;
    ok = ok && z <= 3.0;
    detail += fmt("b%d mean %.4f, z %.2f (<= 3, MC-only z %.2f); ", j, mean[j], z,
                  std::abs(mean[j] - target[j]) / se_mc[j]);
  }
  return {ok, detail};
}

// 8. Factor touches per unit time stay flat as n grows.
Verdict sublinear_cost() {
  std::vector<double> rates;
  std::string detail;
  for (int p : {8, 10, 12, 14}) {
    std::string text = fmt("engine = scale\nmodel = t5-location\nsynthetic_n = %d\ntrue_params = 0\n"
                           "data_seed = 108\nprior_sd = inf\nparticles = 64\nhorizon = 20\n"
                           "theta_scale = 0.5\nseed = 108\n",
                           1 << p);
    ExperimentConfig cfg = config_from(text);
    RunOutcome r = run_in_process(cfg);
    rates.push_back(static_cast<double>(r.total.factor_touches) / cfg.run.horizon);
    detail += fmt("n=2^%d %.0f; ", p, rates.back());
  }
  double ratio = *std::max_element(rates.begin(), rates.end()) /
                 *std::min_element(rates.begin(), rates.end());
  detail += fmt("max/min %.3f (< 2)", ratio);
  return {ratio < 2.0, detail};
}

// 9. Contaminated regression: marginal modes near the generating values.
Verdict mixture_modes() {
  const std::string text =
      "engine = scale\nmodel = contaminated-mixture\nsynthetic_n = 16384\n"
      "true_params = 2,5,1,10,0.05\ndata_seed = 109\nparticles = 256\nhorizon = 50\n"
      "checkpoint_gap = 0.1\nburn_in = 10\ntheta_scale = 0.05\nevent_rate_fraction = 0.5\n"
      "seed = 109\n";
  RunOutcome r = run_in_process(config_from(text));
  const Vec truth = (Vec(5) << 2.0, 5.0, 0.0, std::log(10.0), std::log(0.05 / 0.95)).finished();
  const Vec mean = r.occ.mean();
  const Vec sd = r.occ.covariance().diagonal().cwiseSqrt();
  bool ok = true;
  std::string detail;
  const char* names[] = {"alpha", "beta", "log sigma", "log phi", "logit p"};
  for (int j = 0; j < 5; ++j) {
    const int bins = 40;
    const double lo = mean[j] - 4.0 * sd[j], hi = mean[j] + 4.0 * sd[j];
    auto h = r.occ.histogram(j, bins, lo, hi);
    int best = static_cast<int>(std::max_element(h.begin(), h.end()) - h.begin());
    double mode = lo + (best + 0.5) * (hi - lo) / bins;
    double z = std::abs(mode - truth[j]) / sd[j];
    ok = ok && z <= 3.0;
    detail += fmt("%s mode %.4f vs %.4f (%.2f sd); ", names[j], mode, truth[j], z);
  }
  detail += fmt("median ESS %.0f of 256", r.median_ess);
  return {ok, detail};
}

// 10. Three estimators of the survival functional against a fine Euler oracle.
Verdict feynman_kac() {
  auto model = [] {
    Mat y(8, 1);
    y << -3.5, -2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 3.5;
    return GaussianLocationModel(y, std::sqrt(8.0),
                                 PriorSpec{Vec::Zero(1), Vec::Constant(1, INFINITY)});
  }();
  auto pc = Preconditioner::identity(1);
  ExactPhiProvider phi(model, pc);
  const Vec x0 = Vec::Constant(1, 0.5), theta = Vec::Constant(1, 0.5);
  const int reps = 100000;
  bool ok = true;
  std::string detail;
  double worst = 0.0;
  for (double T : {0.25, 0.5, 1.0}) {
    RandomStream orng(110);
    auto euler = oracle::feynman_kac_euler([](double x) { return 0.5 * x * x; }, 0.5, 1.0, T, 1e-4,
                                           20000, orng);
    std::vector<double> w(reps), surv(reps), acc(reps);
    for (int i = 0; i < reps; ++i) {
      auto r1 = RandomStream::derive(110, i, 1), r2 = RandomStream::derive(110, i, 2),
           r3 = RandomStream::derive(110, i, 3);
      auto traj = TrajectoryState::start(0.0, x0, theta, false);
      is_kbm_advance(traj, phi, pc, T, r1);
      w[i] = std::exp(traj.log_weight);
      surv[i] = kbm_kill(0.0, x0, phi, pc, theta, r2).kill_time > T;
      acc[i] = prs_sample_k(x0, T, phi, pc, theta, r3).accepted;
    }
    oracle::Estimate est[] = {euler, oracle::mean_se(w), oracle::mean_se(surv), oracle::mean_se(acc)};
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b)
        worst = std::max(worst, std::abs(est[a].mean - est[b].mean) / std::hypot(est[a].se, est[b].se));
    detail += fmt("T=%g oracle %.4f (closed form %.4f) IS %.4f KBM %.4f PRS %.4f; ", T, est[0].mean,
                  oracle::feynman_kac_quadratic(0.5, T), est[1].mean, est[2].mean, est[3].mean);
  }
  ok = worst <= 3.0;
  detail += fmt("max pairwise z %.2f (<= 3)", worst);
  return {ok, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// 11. Byte-identical particle files on rerun and across thread counts.
Verdict determinism() {
  bool ok = true;
  std::string detail;
  std::ostringstream sink;
  for (const char* e : kEngines) {
    std::vector<std::string> files;
    for (int variant = 0; variant < 3; ++variant) {
      const int threads = variant == 2 ? 4 : 1;
      fs::path out = scratch() / fmt("det_%s_%d", e, variant);
      std::string text = toy_config(e, 200, 5.0, 1.0, 111) + fmt("threads = %d\noutput = %s\n", threads,
                                                                 out.string().c_str());
      run_experiment(config_from(text), sink);
      files.push_back(slurp(out / "particles.csv"));
    }
    bool same = !files[0].empty() && files[0] == files[1] && files[0] == files[2];
    ok = ok && same;
    detail += fmt("%s %s; ", e, same ? "identical" : "DIFFERENT");
  }
  return {ok, detail + "(rerun and threads=4 against threads=1)"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "first-passage sampler exactness", 60, fpt_exactness},
      {2, "first-passage envelope constants", 60, fpt_constants},
      {3, "bridge point law and bound contraction", 300, bessel_bridge},
      {4, "subsampled rate unbiasedness", 1, subsampling_unbiased},
      {5, "quasi-stationary recovery of N(0,1)", 2400, quasi_stationary},
      {6, "engine cross-agreement", 900, cross_agreement},
      {7, "logistic regression on Menarche data", 1800, logistic_menarche},
      {8, "sub-linear cost in n", 1800, sublinear_cost},
      {9, "contaminated mixture modes", 3600, mixture_modes},
      {10, "survival functional estimators", 600, feynman_kac},
      {11, "determinism", 600, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = v.pass && secs < c.budget_seconds;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): "
              << v.detail << fmt(" [%.1f s, budget %.0f s]", secs, c.budget_seconds) << std::endl;
  }
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criteria failed"
                         : std::string("acceptance: all selected criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
