#ifndef ZZGIBBS_ZIGZAG_HPP
#define ZZGIBBS_ZIGZAG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zzgibbs/core_types.hpp"
#include "zzgibbs/envelope.hpp"
#include "zzgibbs/gibbs_target.hpp"
#include "zzgibbs/rng.hpp"

namespace zzgibbs {

enum class InitialVelocity { all_positive, random };

struct ZigZagConfig {
  double total_time = 1000.0;
  double horizon = 1.0;
  double safety_factor = 1.05;
  std::size_t b = 5;
  std::uint64_t seed = 1;
  Eigen::VectorXd initial_position;
  InitialVelocity initial_velocity = InitialVelocity::all_positive;
  bool strict_thinning = true;
  std::optional<std::size_t> subsample;
  // Rejected proposals do not change the path; dropping them keeps long runs small.
  bool store_rejected = true;
};

class EnvelopeViolation : public std::runtime_error {
 public:
  EnvelopeViolation(const Eigen::VectorXd& theta, const std::vector<int>& nu, std::size_t j, double t, double ratio)
      : std::runtime_error(describe(theta, nu, j, t, ratio)), coordinate(j), time(t), thinning_ratio(ratio) {}

  std::size_t coordinate;
  double time;
  double thinning_ratio;

 private:
  static std::string describe(const Eigen::VectorXd& theta, const std::vector<int>& nu, std::size_t j, double t,
                              double ratio) {
    std::ostringstream os;
    os << "envelope violated at (theta=[";
    for (Eigen::Index i = 0; i < theta.size(); ++i) os << (i ? "," : "") << theta[i];
    os << "], nu=[";
    for (std::size_t i = 0; i < nu.size(); ++i) os << (i ? "," : "") << nu[i];
    os << "], j=" << j << ", t=" << t << "), ratio " << ratio;
    return os.str();
  }
};

// Ratios above this are reported as envelope violations; the slack absorbs
// round-off when an envelope is exact.
inline constexpr double violation_tolerance = 1e-12;

namespace detail {

template <ZigZagTarget Target, class Provider>
Trajectory zigzag_core(const Target& target, const Provider& provider, const ZigZagConfig& cfg, Rng& rng,
                       std::optional<std::size_t> batch_size) {
  const std::size_t d = target.dimension();
  if (!(cfg.total_time > 0.0)) throw std::invalid_argument("total time must be positive");
  if (!(cfg.horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (static_cast<std::size_t>(cfg.initial_position.size()) != d)
    throw std::invalid_argument("initial position has wrong dimension");

  const std::size_t n = target.num_observations();
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  const bool subsampling = batch_size && *batch_size < n;
  if (batch_size && (*batch_size == 0 || *batch_size > n))
    throw std::invalid_argument("subsample size must be in [1, n]");
  const std::size_t batch = batch_size ? *batch_size : n;
  const std::uint64_t pseudo_per_proposal =
      target.simulations_per_estimate() * target.pseudo_observations_per_simulation(batch);

  Eigen::VectorXd theta = cfg.initial_position;
  std::vector<int> nu(d, 1);
  if (cfg.initial_velocity == InitialVelocity::random)
    for (auto& v : nu) v = rng.uniform() < 0.5 ? -1 : 1;

  Trajectory traj(d);
  traj.append(0.0, theta, nu, EventKind::initial, 0);
  auto& diag = traj.diagnostics();

  auto fetch_envelope = [&]() {
    RateEnvelope env = provider(theta, nu, cfg.horizon);
    env.check();
    if (env.dimension() != d) throw std::invalid_argument("envelope has wrong dimension");
    return env;
  };

  const double T = cfg.total_time;
  const double omega = target.weight();
  double t = 0.0;
  double anchor = 0.0;
  RateEnvelope env = fetch_envelope();
  Eigen::VectorXd prior_grad(d), phi(d);

  auto advance = [&](double dt) {
    for (std::size_t j = 0; j < d; ++j) theta[j] += nu[j] * dt;
    t += dt;
  };

  while (true) {
    const double elapsed = t - anchor;
    const double remaining = env.horizon - elapsed;
    double best = std::numeric_limits<double>::infinity();
    std::size_t jstar = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double tau = first_arrival_affine(env.intercept[j] + env.slope[j] * elapsed, env.slope[j], rng);
      if (tau < best) { best = tau; jstar = j; }
    }

    if (best >= remaining) {
      if (t + remaining >= T) { advance(T - t); break; }
      advance(remaining);
      traj.append(t, theta, nu, EventKind::refresh, diag.simulator_calls);
      ++diag.refreshes;
      anchor = t;
      env = fetch_envelope();
      continue;
    }
    if (t + best >= T) { advance(T - t); break; }
    advance(best);

    ++diag.proposals;
    diag.simulator_calls += target.simulations_per_estimate();
    diag.pseudo_observations += pseudo_per_proposal;
    target.prior_log_density_gradient(theta, prior_grad);
    if (subsampling) {
      // partial Fisher-Yates: the first `batch` entries become a uniform subset
      for (std::size_t i = 0; i < batch; ++i) std::swap(indices[i], indices[i + rng.index(n - i)]);
      target.estimate_loss_gradient_batch(theta, std::span<const std::size_t>(indices.data(), batch), rng, phi);
    } else {
      target.estimate_loss_gradient(theta, rng, phi);
    }
    const double rate = std::max(nu[jstar] * (-prior_grad[jstar] + omega * phi[jstar]), 0.0);
    const double bound = env.rate(jstar, t - anchor);
    const double ratio = rate / bound;
    diag.max_thinning_ratio = std::max(diag.max_thinning_ratio, ratio);
    if (!(ratio <= 1.0 + violation_tolerance)) {
      ++diag.bound_violations;
      if (cfg.strict_thinning) {
        traj.set_total_time(t);
        throw EnvelopeViolation(theta, nu, jstar, t, ratio);
      }
    }
    if (rng.uniform() < ratio) {
      nu[jstar] = -nu[jstar];
      ++diag.flips;
      traj.append(t, theta, nu, EventKind::flip, diag.simulator_calls);
      anchor = t;
      env = fetch_envelope();
    } else if (cfg.store_rejected) {
      traj.append(t, theta, nu, EventKind::rejected, diag.simulator_calls);
    }
  }
  traj.set_total_time(T);
  return traj;
}

}  // namespace detail

template <ZigZagTarget Target, class Provider>
Trajectory zigzag_run(const Target& target, const Provider& envelope_provider, const ZigZagConfig& cfg, Rng& rng) {
  return detail::zigzag_core(target, envelope_provider, cfg, rng, std::nullopt);
}

template <ZigZagTarget Target, class Provider>
Trajectory zigzag_run(const Target& target, const Provider& envelope_provider, const ZigZagConfig& cfg) {
  Rng rng(cfg.seed);
  return zigzag_run(target, envelope_provider, cfg, rng);
}

// Same dynamics with the loss gradient averaged over a fresh uniform batch of
// size n_tilde (without replacement) at each proposal. The provider must bound
// the per-observation terms uniformly; with n_tilde = n the full estimator is
// used and the result matches zigzag_run.
template <ZigZagTarget Target, class Provider>
Trajectory zigzag_run_subsampled(const Target& target, const Provider& envelope_provider, const ZigZagConfig& cfg,
                                 std::size_t n_tilde, Rng& rng) {
  if (n_tilde > target.num_observations()) throw std::invalid_argument("subsample size exceeds n");
  return detail::zigzag_core(target, envelope_provider, cfg, rng, n_tilde);
}

template <ZigZagTarget Target, class Provider>
Trajectory zigzag_run_subsampled(const Target& target, const Provider& envelope_provider, const ZigZagConfig& cfg,
                                 std::size_t n_tilde) {
  Rng rng(cfg.seed);
  return zigzag_run_subsampled(target, envelope_provider, cfg, n_tilde, rng);
}

}  // namespace zzgibbs

#endif
