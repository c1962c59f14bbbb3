#ifndef ZZGIBBS_TRAJECTORY_HPP
#define ZZGIBBS_TRAJECTORY_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "zzgibbs/core_types.hpp"

namespace zzgibbs {

inline constexpr double default_burnin_fraction = 0.1;

namespace detail {

inline void require_skeleton(const Trajectory& traj) {
  if (traj.size() < 2)
    throw std::invalid_argument("insufficient skeleton");
}

inline double burnin_start(const Trajectory& traj, double burnin_fraction) {
  if (!(burnin_fraction >= 0.0) || !(burnin_fraction < 1.0))
    throw std::invalid_argument("burn-in exhausts trajectory");
  const double t0 = traj.time(0) + burnin_fraction * (traj.total_time() - traj.time(0));
  if (!(t0 < traj.total_time())) throw std::invalid_argument("burn-in exhausts trajectory");
  return t0;
}

inline double segment_end(const Trajectory& traj, std::size_t k) {
  return k + 1 < traj.size() ? traj.time(k + 1) : traj.total_time();
}

// Calls f(k, a, b) for each piece [a, b] of segment k overlapping [lo, hi].
template <class F>
void for_each_piece(const Trajectory& traj, double lo, double hi, F&& f) {
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double a = std::max(lo, traj.time(k));
    const double b = std::min(hi, segment_end(traj, k));
    if (b > a) f(k, a, b);
    if (segment_end(traj, k) >= hi) break;
  }
}

inline double position_in_segment(const Trajectory& traj, std::size_t k, std::size_t j, double t) {
  return traj.position(k, j) + traj.velocity(k, j) * (t - traj.time(k));
}

}  // namespace detail

// Exact position at time t.
inline Eigen::VectorXd trajectory_position(const Trajectory& traj, double t) {
  if (traj.empty()) throw std::invalid_argument("insufficient skeleton");
  std::size_t lo = 0, hi = traj.size();
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (traj.time(mid) <= t) lo = mid; else hi = mid;
  }
  Eigen::VectorXd x(traj.dimension());
  for (std::size_t j = 0; j < traj.dimension(); ++j) x[j] = detail::position_in_segment(traj, lo, j, t);
  return x;
}

// Time average of theta_j^q along the path after burn-in, integrated exactly.
inline double trajectory_time_average(const Trajectory& traj, std::size_t j, int q,
                                      double burnin_fraction = default_burnin_fraction) {
  detail::require_skeleton(traj);
  if (q != 1 && q != 2) throw std::invalid_argument("moment order must be 1 or 2");
  if (j >= traj.dimension()) throw std::out_of_range("coordinate index out of range");
  const double t0 = detail::burnin_start(traj, burnin_fraction);
  const double T = traj.total_time();
  double acc = 0.0;
  detail::for_each_piece(traj, t0, T, [&](std::size_t k, double a, double b) {
    const double x = detail::position_in_segment(traj, k, j, a);
    const double v = traj.velocity(k, j);
    const double h = b - a;
    acc += q == 1 ? x * h + 0.5 * v * h * h : x * x * h + x * v * h * h + v * v * h * h * h / 3.0;
  });
  return acc / (T - t0);
}

struct TrajectoryMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  Eigen::MatrixXd covariance;
};

// Exact first and second moments (including cross moments) after burn-in.
inline TrajectoryMoments trajectory_moments(const Trajectory& traj,
                                            double burnin_fraction = default_burnin_fraction) {
  detail::require_skeleton(traj);
  const double t0 = detail::burnin_start(traj, burnin_fraction);
  const double T = traj.total_time();
  const std::size_t d = traj.dimension();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd x(d), v(d);
  detail::for_each_piece(traj, t0, T, [&](std::size_t k, double a, double b) {
    const double h = b - a;
    for (std::size_t j = 0; j < d; ++j) {
      x[j] = detail::position_in_segment(traj, k, j, a);
      v[j] = traj.velocity(k, j);
    }
    m1 += x * h + 0.5 * v * h * h;
    // integral of (x + v s)(x + v s)^T over [0, h]
    m2 += x * x.transpose() * h + 0.5 * (x * v.transpose() + v * x.transpose()) * h * h +
          v * v.transpose() * (h * h * h / 3.0);
  });
  const double len = T - t0;
  TrajectoryMoments out;
  out.mean = m1 / len;
  out.covariance = m2 / len - out.mean * out.mean.transpose();
  out.sd = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

struct MeanEstimate {
  double mean;
  double se;
};

// Batch-means standard error of the time average of theta_j, splitting the
// post-burn-in window into equal time batches.
inline MeanEstimate trajectory_batch_means(const Trajectory& traj, std::size_t j, std::size_t batches = 50,
                                           double burnin_fraction = default_burnin_fraction) {
  detail::require_skeleton(traj);
  if (batches < 2) throw std::invalid_argument("need at least two batches");
  const double t0 = detail::burnin_start(traj, burnin_fraction);
  const double T = traj.total_time();
  const double w = (T - t0) / static_cast<double>(batches);
  std::vector<double> sums(batches, 0.0);
  detail::for_each_piece(traj, t0, T, [&](std::size_t k, double a, double b) {
    const double v = traj.velocity(k, j);
    auto idx = std::min(static_cast<std::size_t>((a - t0) / w), batches - 1);
    for (; idx < batches; ++idx) {
      const double lo = std::max(a, t0 + w * static_cast<double>(idx));
      const double hi = idx + 1 == batches ? b : std::min(b, t0 + w * static_cast<double>(idx + 1));
      if (hi > lo) {
        const double x = detail::position_in_segment(traj, k, j, lo);
        sums[idx] += x * (hi - lo) + 0.5 * v * (hi - lo) * (hi - lo);
      }
      if (hi >= b) break;
    }
  });
  double mean = 0.0;
  for (double& s : sums) { s /= w; mean += s; }
  mean /= static_cast<double>(batches);
  double var = 0.0;
  for (double s : sums) var += (s - mean) * (s - mean);
  var /= static_cast<double>(batches - 1);
  return {mean, std::sqrt(var / static_cast<double>(batches))};
}

// Samples theta(t0 + i * dt) for all grid times within [t0, T].
inline std::vector<Eigen::VectorXd> trajectory_discretize(const Trajectory& traj, double dt,
                                                          double burnin_fraction = default_burnin_fraction) {
  detail::require_skeleton(traj);
  if (!(dt > 0.0)) throw std::invalid_argument("discretization step must be positive");
  const double t0 = detail::burnin_start(traj, burnin_fraction);
  const double T = traj.total_time();
  const double tol = 1e-12 * std::max(1.0, std::abs(T));
  std::vector<Eigen::VectorXd> out;
  std::size_t k = 0;
  const std::size_t d = traj.dimension();
  for (std::size_t i = 0;; ++i) {
    const double t = t0 + dt * static_cast<double>(i);
    if (t > T + tol) break;
    while (k + 1 < traj.size() && traj.time(k + 1) <= t) ++k;
    Eigen::VectorXd x(d);
    for (std::size_t j = 0; j < d; ++j) x[j] = detail::position_in_segment(traj, k, j, t);
    out.push_back(std::move(x));
  }
  return out;
}

struct ValidationReport {
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
};

inline ValidationReport validate_trajectory(const Trajectory& traj, double tol = 1e-9) {
  ValidationReport rep;
  auto add = [&](std::size_t k, const std::string& what) {
    rep.problems.push_back("point " + std::to_string(k) + ": " + what);
  };
  const std::size_t d = traj.dimension();
  for (std::size_t k = 0; k < traj.size(); ++k) {
    for (std::size_t j = 0; j < d; ++j)
      if (traj.velocity(k, j) != 1 && traj.velocity(k, j) != -1) add(k, "velocity entry not in {-1, +1}");
    if (k == 0) continue;
    const double dt = traj.time(k) - traj.time(k - 1);
    if (dt < 0.0) add(k, "event times decrease");
    for (std::size_t j = 0; j < d; ++j) {
      const double expect = traj.position(k - 1, j) + traj.velocity(k - 1, j) * dt;
      if (std::abs(traj.position(k, j) - expect) > tol * std::max(1.0, std::abs(expect)))
        add(k, "position breaks linear dynamics");
    }
    std::size_t changed = 0;
    for (std::size_t j = 0; j < d; ++j) changed += traj.velocity(k, j) != traj.velocity(k - 1, j);
    if (traj.kind(k) == EventKind::flip && changed != 1) add(k, "flip must change exactly one velocity component");
    if (traj.kind(k) != EventKind::flip && changed != 0) add(k, "velocity changed without a flip");
  }
  if (!traj.empty() && traj.time(traj.size() - 1) > traj.total_time() + tol)
    add(traj.size() - 1, "event after total time");
  return rep;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_skeleton_csv(const Trajectory& traj, std::ostream& os) {
  const std::size_t d = traj.dimension();
  os << "k,t,event";
  for (std::size_t j = 1; j <= d; ++j) os << ",theta_" << j;
  for (std::size_t j = 1; j <= d; ++j) os << ",nu_" << j;
  os << '\n';
  for (std::size_t k = 0; k < traj.size(); ++k) {
    os << k << ',' << format_double(traj.time(k)) << ',' << to_string(traj.kind(k));
    for (std::size_t j = 0; j < d; ++j) os << ',' << format_double(traj.position(k, j));
    for (std::size_t j = 0; j < d; ++j) os << ',' << traj.velocity(k, j);
    os << '\n';
  }
}

// Inverse of write_skeleton_csv. The total time is not part of the format.
inline Trajectory read_skeleton_csv(std::istream& is, double total_time) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty skeleton file");
  std::size_t cols = std::count(line.begin(), line.end(), ',') + 1;
  if (cols < 5 || (cols - 3) % 2 != 0) throw std::invalid_argument("malformed skeleton header");
  const std::size_t d = (cols - 3) / 2;
  Trajectory traj(d);
  std::vector<double> theta(d);
  std::vector<int> nu(d);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::getline(ss, cell, ',');
    const double t = std::stod(cell);
    std::getline(ss, cell, ',');
    const EventKind kind = parse_event_kind(cell);
    for (std::size_t j = 0; j < d; ++j) { std::getline(ss, cell, ','); theta[j] = std::stod(cell); }
    for (std::size_t j = 0; j < d; ++j) { std::getline(ss, cell, ','); nu[j] = std::stoi(cell); }
    traj.append(t, theta, nu, kind);
  }
  traj.set_total_time(total_time);
  return traj;
}

}  // namespace zzgibbs

#endif
