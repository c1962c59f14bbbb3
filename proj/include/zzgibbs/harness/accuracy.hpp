#ifndef ZZGIBBS_HARNESS_ACCURACY_HPP
#define ZZGIBBS_HARNESS_ACCURACY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "zzgibbs/core_types.hpp"
#include "zzgibbs/pmcmc.hpp"
#include "zzgibbs/trajectory.hpp"

namespace zzgibbs {

struct MomentSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

struct AccuracyRecord {
  std::uint64_t sim_calls;
  std::size_t dim;  // 1-based
  double mean_err;
  double sd_err;
};

namespace detail {

// Integrals of theta_j and theta_j^2 over [0, t] for each sorted query time t.
inline std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> cumulative_integrals(const Trajectory& traj,
                                                                                    const std::vector<double>& times) {
  require_skeleton(traj);
  const std::size_t d = traj.dimension(), K = traj.size();
  const double t0 = traj.time(0);
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)), s2 = s1;
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> out;
  out.reserve(times.size());
  std::size_t k = 0;
  auto add = [&](std::size_t seg, double a, double b) {
    const double L = b - a;
    if (L <= 0.0) return;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = position_in_segment(traj, seg, j, a), v = traj.velocity(seg, j);
      s1[static_cast<Eigen::Index>(j)] += x * L + 0.5 * v * L * L;
      s2[static_cast<Eigen::Index>(j)] += x * x * L + x * v * L * L + L * L * L / 3.0;
    }
  };
  double covered = t0;
  for (double t : times) {
    while (k < K && segment_end(traj, k) <= t) {
      add(k, covered, segment_end(traj, k));
      covered = segment_end(traj, k);
      ++k;
    }
    Eigen::VectorXd a = s1, b = s2;
    if (k < K && t > covered) {
      // partial segment, not committed
      const double L = t - covered;
      for (std::size_t j = 0; j < d; ++j) {
        const double x = position_in_segment(traj, k, j, covered), v = traj.velocity(k, j);
        a[static_cast<Eigen::Index>(j)] += x * L + 0.5 * v * L * L;
        b[static_cast<Eigen::Index>(j)] += x * x * L + x * v * L * L + L * L * L / 3.0;
      }
    }
    out.emplace_back(a, b);
  }
  return out;
}

inline MomentSummary moments_from_integrals(const std::pair<Eigen::VectorXd, Eigen::VectorXd>& lo,
                                            const std::pair<Eigen::VectorXd, Eigen::VectorXd>& hi, double length) {
  MomentSummary m;
  m.mean = (hi.first - lo.first) / length;
  const Eigen::VectorXd second = (hi.second - lo.second) / length;
  m.sd = (second - m.mean.cwiseProduct(m.mean)).cwiseMax(0.0).cwiseSqrt();
  return m;
}

}  // namespace detail

// Moments over the checkpoint prefixes [t0, t0 + c L / C], c = 1..C, each with
// its own burn-in fraction. The last entry covers the whole trajectory.
inline std::vector<MomentSummary> trajectory_prefix_moments(const Trajectory& traj, std::size_t checkpoints,
                                                            double burnin_fraction = default_burnin_fraction) {
  detail::require_skeleton(traj);
  if (checkpoints == 0) throw std::invalid_argument("need at least one checkpoint");
  const double t0 = traj.time(0), L = traj.total_time() - t0;
  std::vector<double> ends(checkpoints), starts(checkpoints);
  for (std::size_t c = 0; c < checkpoints; ++c) {
    ends[c] = c + 1 == checkpoints ? traj.total_time() : t0 + L * static_cast<double>(c + 1) / static_cast<double>(checkpoints);
    starts[c] = t0 + burnin_fraction * (ends[c] - t0);
  }
  std::vector<double> all(ends);
  all.insert(all.end(), starts.begin(), starts.end());
  std::sort(all.begin(), all.end());
  const auto ints = detail::cumulative_integrals(traj, all);
  auto lookup = [&](double t) { return ints[static_cast<std::size_t>(std::lower_bound(all.begin(), all.end(), t) - all.begin())]; };
  std::vector<MomentSummary> out;
  for (std::size_t c = 0; c < checkpoints; ++c) out.push_back(detail::moments_from_integrals(lookup(starts[c]), lookup(ends[c]), ends[c] - starts[c]));
  return out;
}

inline MomentSummary trajectory_summary(const Trajectory& traj, double burnin_fraction = default_burnin_fraction) {
  return trajectory_prefix_moments(traj, 1, burnin_fraction).back();
}

inline MomentSummary chain_summary(const Eigen::MatrixXd& draws, std::size_t first, std::size_t last) {
  if (last < first) throw std::invalid_argument("empty chain prefix");
  const auto rows = draws.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(last - first + 1));
  MomentSummary m;
  m.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centred = rows.rowwise() - m.mean.transpose();
  m.sd = (centred.cwiseProduct(centred).colwise().sum().transpose() / static_cast<double>(rows.rows())).cwiseSqrt();
  return m;
}

inline std::vector<AccuracyRecord> compare_to_gold(const MomentSummary& est, const MomentSummary& gold,
                                                   std::uint64_t sims) {
  std::vector<AccuracyRecord> out;
  for (Eigen::Index j = 0; j < gold.mean.size(); ++j)
    out.push_back({sims, static_cast<std::size_t>(j) + 1, std::abs(est.mean[j] - gold.mean[j]), std::abs(est.sd[j] - gold.sd[j])});
  return out;
}

// Cumulative-prefix errors of a zig-zag run, simulator calls taken at
// the last recorded point of each prefix.
inline std::vector<AccuracyRecord> accuracy_metrics(const Trajectory& traj, const MomentSummary& gold,
                                                    std::size_t checkpoints = 50,
                                                    double burnin_fraction = default_burnin_fraction) {
  if (traj.size() < 2) throw std::invalid_argument("accuracy metrics need a non-empty run");
  const auto prefix = trajectory_prefix_moments(traj, checkpoints, burnin_fraction);
  const double t0 = traj.time(0), L = traj.total_time() - t0;
  std::vector<AccuracyRecord> out;
  std::size_t k = 0;
  for (std::size_t c = 0; c < checkpoints; ++c) {
    std::uint64_t sims;
    if (c + 1 == checkpoints) {
      sims = traj.diagnostics().simulator_calls;
    } else {
      const double end = t0 + L * static_cast<double>(c + 1) / static_cast<double>(checkpoints);
      while (k + 1 < traj.size() && traj.time(k + 1) <= end) ++k;
      sims = traj.simulator_calls_at(k);
    }
    const auto rec = compare_to_gold(prefix[c], gold, sims);
    out.insert(out.end(), rec.begin(), rec.end());
  }
  return out;
}

// Cumulative-prefix errors of an MCMC chain; m simulator calls per iteration.
inline std::vector<AccuracyRecord> accuracy_metrics(const Chain& chain, std::size_t m, const MomentSummary& gold,
                                                    std::size_t checkpoints = 50,
                                                    double burnin_fraction = default_burnin_fraction) {
  const std::size_t S = chain.iterations();
  if (S == 0) throw std::invalid_argument("accuracy metrics need a non-empty run");
  std::vector<AccuracyRecord> out;
  std::size_t last_s = 0;
  for (std::size_t c = 1; c <= checkpoints; ++c) {
    const std::size_t s = std::max<std::size_t>(1, S * c / checkpoints);
    if (s == last_s) continue;
    last_s = s;
    const auto first = static_cast<std::size_t>(std::ceil(burnin_fraction * static_cast<double>(s)));
    const auto rec = compare_to_gold(chain_summary(chain.draws, std::min(first, s), s), gold,
                                     static_cast<std::uint64_t>(m) * s);
    out.insert(out.end(), rec.begin(), rec.end());
  }
  return out;
}

inline void write_accuracy_csv(const std::vector<AccuracyRecord>& recs, std::ostream& os) {
  os << "sim_calls,dim,mean_err,sd_err\n";
  for (const auto& r : recs)
    os << r.sim_calls << ',' << r.dim << ',' << format_double(r.mean_err) << ',' << format_double(r.sd_err) << '\n';
}

}  // namespace zzgibbs

#endif
