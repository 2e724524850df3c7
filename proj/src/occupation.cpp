#include <algorithm>
#include <cmath>

#include "qsmc/smc.hpp"

namespace qsmc {

OccupationEstimate OccupationEstimate::from_records(const std::vector<CheckpointRecord>& records,
                                                    double t_star) {
  OccupationEstimate est(t_star);
  for (const auto& r : records) est.add(r);
  return est;
}

void OccupationEstimate::add(const CheckpointRecord& record) {
  add(record.time, record.states, record.weights);
}

void OccupationEstimate::add(double time, const std::vector<Vec>& states,
                             const std::vector<double>& weights) {
  if (time < t_star_) return;
  if (states.empty() || states.size() != weights.size())
    throw std::invalid_argument("occupation: states and weights must be non-empty and aligned");
  Vec m = Vec::Zero(states.front().size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    states_.push_back(states[k]);
    weights_.push_back(weights[k]);
    m += weights[k] * states[k];
  }
  checkpoint_means_.push_back(m);
}

Vec OccupationEstimate::mean() const {
  if (checkpoint_means_.empty()) throw std::logic_error("occupation: no checkpoints after t*");
  Vec m = Vec::Zero(checkpoint_means_.front().size());
  for (const Vec& c : checkpoint_means_) m += c;
  return m / static_cast<double>(checkpoint_means_.size());
}

Mat OccupationEstimate::covariance() const {
  const Vec m = mean();
  Mat c = Mat::Zero(m.size(), m.size());
  for (std::size_t k = 0; k < states_.size(); ++k) {
    Vec d = states_[k] - m;
    c += weights_[k] * d * d.transpose();
  }
  return c / static_cast<double>(checkpoint_means_.size());
}

std::vector<std::pair<double, double>> OccupationEstimate::sorted_marginal(int coord) const {
  std::vector<std::pair<double, double>> v;
  v.reserve(states_.size());
  const double scale = 1.0 / static_cast<double>(checkpoint_means_.size());
  for (std::size_t k = 0; k < states_.size(); ++k)
    v.emplace_back(states_[k][coord], weights_[k] * scale);
  std::sort(v.begin(), v.end());
  return v;
}

double OccupationEstimate::ks_distance(int coord, const std::function<double(double)>& cdf) const {
  auto v = sorted_marginal(coord);
  double below = 0.0, worst = 0.0;
  for (std::size_t k = 0; k < v.size();) {
    const double x = v[k].first;
    double mass = 0.0;
    for (; k < v.size() && v[k].first == x; ++k) mass += v[k].second;
    const double f = cdf(x);
    worst = std::max({worst, std::abs(below - f), std::abs(below + mass - f)});
    below += mass;
  }
  return worst;
}

double OccupationEstimate::ks_distance(int coord, const OccupationEstimate& other) const {
  auto a = sorted_marginal(coord), b = other.sorted_marginal(coord);
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, worst = 0.0;
  while (i < a.size() || j < b.size()) {
    double x = std::min(i < a.size() ? a[i].first : INFINITY, j < b.size() ? b[j].first : INFINITY);
    for (; i < a.size() && a[i].first == x; ++i) fa += a[i].second;
    for (; j < b.size() && b[j].first == x; ++j) fb += b[j].second;
    worst = std::max(worst, std::abs(fa - fb));
  }
  return worst;
}

std::pair<double, double> OccupationEstimate::range(int coord) const {
  double lo = INFINITY, hi = -INFINITY;
  for (const Vec& x : states_) {
    lo = std::min(lo, x[coord]);
    hi = std::max(hi, x[coord]);
  }
  return {lo, hi};
}

std::vector<double> OccupationEstimate::histogram(int coord, int bins, double lo, double hi) const {
  if (bins < 1 || !(hi > lo)) throw std::invalid_argument("histogram: need bins >= 1 and hi > lo");
  std::vector<double> h(bins, 0.0);
  const double scale = 1.0 / static_cast<double>(checkpoint_means_.size());
  for (std::size_t k = 0; k < states_.size(); ++k) {
    double x = states_[k][coord];
    if (x < lo || x > hi) continue;
    int b = std::min(bins - 1, static_cast<int>((x - lo) / (hi - lo) * bins));
    h[b] += weights_[k] * scale;
  }
  return h;
}

Vec OccupationEstimate::batch_means_se(int batches) const {
  const std::size_t m = checkpoint_means_.size();
  if (batches < 2 || m < static_cast<std::size_t>(batches))
    throw std::invalid_argument("batch_means_se: need at least `batches` >= 2 checkpoints");
  const int d = static_cast<int>(checkpoint_means_.front().size());
  std::vector<Vec> means;
  for (int b = 0; b < batches; ++b) {
    std::size_t lo = b * m / batches, hi = (b + 1) * m / batches;
    Vec s = Vec::Zero(d);
    for (std::size_t k = lo; k < hi; ++k) s += checkpoint_means_[k];
    means.push_back(s / static_cast<double>(hi - lo));
  }
  Vec grand = Vec::Zero(d);
  for (const Vec& v : means) grand += v;
  grand /= batches;
  Vec var = Vec::Zero(d);
  for (const Vec& v : means) var += (v - grand).cwiseAbs2();
  var /= (batches - 1);
  return (var / batches).cwiseSqrt();
}

}  // namespace qsmc
