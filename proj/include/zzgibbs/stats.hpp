#ifndef ZZGIBBS_STATS_HPP
#define ZZGIBBS_STATS_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "zzgibbs/trajectory.hpp"

namespace zzgibbs {

inline double sample_mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sample_sd(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("sd needs two values");
  const double m = sample_mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

// Batch-means mean and standard error for a correlated series.
inline MeanEstimate batch_means(std::span<const double> x, std::size_t batches = 50) {
  if (batches < 2 || x.size() < batches) throw std::invalid_argument("batch means: too few values");
  const std::size_t len = x.size() / batches;
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) means[b] = sample_mean(x.subspan(b * len, len));
  return {sample_mean(x.first(len * batches)), sample_sd(means) / std::sqrt(static_cast<double>(batches))};
}

inline double combined_se(double a, double b) { return std::sqrt(a * a + b * b); }

inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Silverman's rule of thumb: 0.9 min(sd, IQR / 1.34) n^(-1/5).
inline double silverman_bandwidth(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double sd = sample_sd(x);
  const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) spread = 1e-3 * std::max(1.0, std::abs(s.front()));
  return 0.9 * spread * std::pow(static_cast<double>(x.size()), -0.2);
}

struct DensityGrid {
  std::vector<double> x;
  std::vector<double> density;
};

// Gaussian KDE evaluated on `points` equally spaced values in [lo, hi].
inline DensityGrid kde_grid(std::span<const double> samples, double lo, double hi, std::size_t points = 512) {
  if (points < 2 || !(hi > lo)) throw std::invalid_argument("density grid needs lo < hi and two points");
  const double h = silverman_bandwidth(samples);
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  DensityGrid g;
  g.x.resize(points);
  g.density.assign(points, 0.0);
  for (std::size_t k = 0; k < points; ++k) g.x[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
  for (double s : samples)
    for (std::size_t k = 0; k < points; ++k) {
      const double z = (g.x[k] - s) / h;
      if (std::abs(z) < 40.0) g.density[k] += std::exp(-0.5 * z * z);
    }
  for (double& v : g.density) v *= norm;
  return g;
}

}  // namespace zzgibbs

#endif
