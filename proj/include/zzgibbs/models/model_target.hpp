#ifndef ZZGIBBS_MODELS_MODEL_TARGET_HPP
#define ZZGIBBS_MODELS_MODEL_TARGET_HPP

#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "zzgibbs/core_types.hpp"
#include "zzgibbs/rng.hpp"

namespace zzgibbs {

enum class EnvelopeScope { full, subsample };

// Adapts a model to the zig-zag target interface for a fixed omega and b.
template <class Model>
class ModelTarget {
 public:
  ModelTarget(const Model& model, double omega, std::size_t b) : model_(&model), omega_(omega), b_(b) {
    if (!(omega >= 0.0)) throw std::invalid_argument("omega must be non-negative");
    model.check_simulation_count(b);
    all_.resize(model.num_observations());
    std::iota(all_.begin(), all_.end(), std::size_t{0});
  }

  std::size_t dimension() const { return model_->dimension(); }
  double weight() const { return omega_; }
  std::size_t simulations_per_estimate() const { return b_; }
  std::size_t num_observations() const { return model_->num_observations(); }
  std::size_t pseudo_observations_per_simulation(std::size_t batch) const {
    return model_->pseudo_observations_per_simulation(batch);
  }
  void prior_log_density_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& out) const {
    model_->prior_log_density_gradient(theta, out);
  }
  void estimate_loss_gradient(const Eigen::VectorXd& theta, Rng& rng, Eigen::VectorXd& out) const {
    model_->estimate_loss_gradient(theta, b_, all_, rng, out);
  }
  void estimate_loss_gradient_batch(const Eigen::VectorXd& theta, std::span<const std::size_t> batch, Rng& rng,
                                    Eigen::VectorXd& out) const {
    model_->estimate_loss_gradient(theta, b_, batch, rng, out);
  }

  const Model& model() const { return *model_; }

 private:
  const Model* model_;
  double omega_;
  std::size_t b_;
  std::vector<std::size_t> all_;
};

// Envelope provider bound to a model, omega and safety factor.
template <class Model>
struct ModelEnvelope {
  const Model* model;
  double omega;
  double eta;
  EnvelopeScope scope = EnvelopeScope::full;

  RateEnvelope operator()(const Eigen::VectorXd& theta, const std::vector<int>& nu, double horizon) const {
    return model->envelope(theta, nu, horizon, omega, eta, scope);
  }
};

}  // namespace zzgibbs

#endif
