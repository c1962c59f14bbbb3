#ifndef ZZGIBBS_GIBBS_TARGET_HPP
#define ZZGIBBS_GIBBS_TARGET_HPP

#include <concepts>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "zzgibbs/rng.hpp"

namespace zzgibbs {

// What the zig-zag sampler needs from a generalised-Bayes posterior
// pi(theta) exp(-omega L(theta)). The loss-gradient estimators draw their own
// b fresh pseudo-observation sets; batch estimators average over the given
// observation indices only.
template <class T>
concept ZigZagTarget = requires(const T& t, const Eigen::VectorXd& theta, Rng& rng, Eigen::VectorXd& out,
                                std::span<const std::size_t> batch) {
  { t.dimension() } -> std::convertible_to<std::size_t>;
  { t.weight() } -> std::convertible_to<double>;
  { t.simulations_per_estimate() } -> std::convertible_to<std::size_t>;
  { t.num_observations() } -> std::convertible_to<std::size_t>;
  { t.pseudo_observations_per_simulation(std::size_t{}) } -> std::convertible_to<std::size_t>;
  t.prior_log_density_gradient(theta, out);
  t.estimate_loss_gradient(theta, rng, out);
  t.estimate_loss_gradient_batch(theta, batch, rng, out);
};

// Type-erased target assembled from callables. Pseudo-observation sets are
// flat vectors; phi receives the b sets drawn at theta and the observation
// indices to average over (all indices for the full-data estimator).
class GibbsTarget {
 public:
  using PseudoSet = std::vector<double>;
  using PriorGradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  using Simulator = std::function<PseudoSet(const Eigen::VectorXd&, Rng&)>;
  using Phi = std::function<Eigen::VectorXd(const Eigen::VectorXd&, std::span<const PseudoSet>,
                                            std::span<const std::size_t>)>;

  GibbsTarget(std::size_t dimension, double omega, PriorGradient prior_gradient, Phi phi, Simulator simulator,
              std::size_t b, std::size_t n = 1)
      : d_(dimension), omega_(omega), b_(b), n_(n), prior_(std::move(prior_gradient)), phi_(std::move(phi)),
        sim_(std::move(simulator)), all_(n) {
    if (d_ == 0) throw std::invalid_argument("target dimension must be positive");
    if (!(omega_ >= 0.0)) throw std::invalid_argument("omega must be non-negative");
    if (b_ == 0) throw std::invalid_argument("b must be positive");
    std::iota(all_.begin(), all_.end(), std::size_t{0});
  }

  std::size_t dimension() const { return d_; }
  double weight() const { return omega_; }
  std::size_t simulations_per_estimate() const { return b_; }
  std::size_t num_observations() const { return n_; }
  std::size_t pseudo_observations_per_simulation(std::size_t batch) const { return batch; }

  void prior_log_density_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& out) const {
    out = prior_(theta);
  }
  void estimate_loss_gradient(const Eigen::VectorXd& theta, Rng& rng, Eigen::VectorXd& out) const {
    estimate_loss_gradient_batch(theta, all_, rng, out);
  }
  void estimate_loss_gradient_batch(const Eigen::VectorXd& theta, std::span<const std::size_t> batch, Rng& rng,
                                    Eigen::VectorXd& out) const {
    std::vector<PseudoSet> sims;
    sims.reserve(b_);
    for (std::size_t k = 0; k < b_; ++k) sims.push_back(sim_(theta, rng));
    out = phi_(theta, sims, batch);
  }

 private:
  std::size_t d_;
  double omega_;
  std::size_t b_;
  std::size_t n_;
  PriorGradient prior_;
  Phi phi_;
  Simulator sim_;
  std::vector<std::size_t> all_;
};

}  // namespace zzgibbs

#endif
