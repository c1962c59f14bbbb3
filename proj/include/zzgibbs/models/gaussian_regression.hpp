#ifndef ZZGIBBS_MODELS_GAUSSIAN_REGRESSION_HPP
#define ZZGIBBS_MODELS_GAUSSIAN_REGRESSION_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "zzgibbs/aux_state.hpp"
#include "zzgibbs/core_types.hpp"
#include "zzgibbs/losses.hpp"
#include "zzgibbs/models/model_target.hpp"
#include "zzgibbs/rng.hpp"

namespace zzgibbs {

// Box-Muller generator for y = x' beta + sigma * xi, theta = (beta, log sigma).
// Base noise is (v1, v2) uniform on (0, 1).
struct RegressionDraw {
  double value;
  double xi;  // standard normal part; dG/dlog sigma = sigma * xi
};

inline RegressionDraw regression_generate(double mean, double sigma, double v1, double v2) {
  if (!(v1 > 0.0 && v1 <= 1.0)) throw std::domain_error("regression generator needs v1 in (0, 1]");
  const double xi = std::sqrt(-2.0 * std::log(v1)) * std::cos(2.0 * std::numbers::pi * v2);
  return {mean + sigma * xi, xi};
}

// max over w of |w| |w + delta| exp(-w^2 / (2 gamma)). For delta >= 0 the
// maximiser is the root in [0, sqrt(2 gamma)] of w^3 + delta w^2 - 2 gamma w - gamma delta.
inline double regression_scale_kernel_sup(double delta, double gamma) {
  const double dl = std::abs(delta);
  double lo = 0.0, hi = std::sqrt(2.0 * gamma);
  auto f = [&](double w) { return ((w + dl) * w - 2.0 * gamma) * w - gamma * dl; };
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  // evaluate at both bracket ends; the function is flat at the root
  auto g = [&](double w) { return w * (w + dl) * std::exp(-0.5 * w * w / gamma); };
  return std::max(g(lo), g(hi));
}

// Linear regression with Laplace-robust MMD loss. Priors beta ~ N(0, 25 I),
// sigma^2 ~ IG(2, 0.5), expressed on tau = log sigma.
class GaussianRegression {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  static constexpr double coefficient_prior_variance = 25.0;
  static constexpr double sigma2_prior_shape = 2.0;
  static constexpr double sigma2_prior_scale = 0.5;

  GaussianRegression(const Dataset& data, double gamma = 1.0) : X_(data.X), kernel_(gamma, 1) {
    if (data.y.cols() != 1) throw std::invalid_argument("regression needs a single response column");
    if (data.X.rows() != data.y.rows() || data.X.cols() == 0) throw std::invalid_argument("covariates do not match");
    y_.assign(data.y.data(), data.y.data() + data.y.rows());
  }

  std::size_t dimension() const { return static_cast<std::size_t>(X_.cols()) + 1; }
  std::size_t num_coefficients() const { return static_cast<std::size_t>(X_.cols()); }
  std::size_t num_observations() const { return y_.size(); }
  std::size_t pseudo_observations_per_simulation(std::size_t batch) const { return batch; }
  void check_simulation_count(std::size_t b) const {
    if (b < 2) throw std::invalid_argument("unbiased MMD needs b >= 2");
  }
  const RbfKernel& kernel() const { return kernel_; }
  double gamma() const { return kernel_.gamma(); }
  const RowMatrix& covariates() const { return X_; }
  double response(std::size_t i) const { return y_[i]; }

  double mean(const Eigen::VectorXd& theta, std::size_t i) const {
    return X_.row(static_cast<Eigen::Index>(i)).dot(theta.head(X_.cols()));
  }

  // log pi up to a constant: -|beta|^2/50 - 4 tau - exp(-2 tau)/2 (includes the
  // Jacobian of sigma^2 = exp(2 tau)).
  double log_prior(const Eigen::VectorXd& theta) const {
    const auto p = X_.cols();
    const double tau = theta[p];
    return -0.5 * theta.head(p).squaredNorm() / coefficient_prior_variance -
           2.0 * sigma2_prior_shape * tau - sigma2_prior_scale * std::exp(-2.0 * tau);
  }
  void prior_log_density_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& out) const {
    const auto p = X_.cols();
    out.resize(p + 1);
    out.head(p) = -theta.head(p) / coefficient_prior_variance;
    out[p] = scale_prior_gradient(theta[p]);
  }
  static double scale_prior_gradient(double tau) {
    return -2.0 * sigma2_prior_shape + 2.0 * sigma2_prior_scale * std::exp(-2.0 * tau);
  }

  // Pushes noise v (b pairs) for observation i; u gets b values, jac b x d.
  void push(const Eigen::VectorXd& theta, std::size_t i, std::span<const double> v, double* u, double* jac) const {
    const std::size_t p = num_coefficients(), d = p + 1, b = v.size() / 2;
    const double c = mean(theta, i), sigma = std::exp(theta[static_cast<Eigen::Index>(p)]);
    for (std::size_t k = 0; k < b; ++k) {
      const RegressionDraw g = regression_generate(c, sigma, v[2 * k], v[2 * k + 1]);
      u[k] = g.value;
      for (std::size_t j = 0; j < p; ++j) jac[k * d + j] = X_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      jac[k * d + p] = sigma * g.xi;
    }
  }

  // Unbiased-MMD gradient averaged over `batch`, b fresh draws per observation.
  void estimate_loss_gradient(const Eigen::VectorXd& theta, std::size_t b, std::span<const std::size_t> batch,
                              Rng& rng, Eigen::VectorXd& out) const {
    const std::size_t p = num_coefficients();
    out.setZero(static_cast<Eigen::Index>(p + 1));
    const double sigma = std::exp(theta[static_cast<Eigen::Index>(p)]);
    const double gamma = kernel_.gamma(), kmax = kernel_.max_value();
    std::vector<double> u(b);
    const double data_scale = -2.0 / static_cast<double>(b);
    const double pair_scale = 2.0 / (static_cast<double>(b) * static_cast<double>(b - 1));
    for (std::size_t i : batch) {
      const double c = mean(theta, i);
      double coef = 0.0, scale = 0.0;
      for (std::size_t k = 0; k < b; ++k) {
        const double v1 = rng.uniform(), v2 = rng.uniform();
        const RegressionDraw g = regression_generate(c, sigma, v1, v2);
        u[k] = g.value;
        const double r = y_[i] - g.value;
        const double dk = r / gamma * kmax * std::exp(-0.5 * r * r / gamma);  // d k(y, u) / du
        coef += dk;
        scale += dk * sigma * g.xi;
      }
      coef *= data_scale;
      scale *= data_scale;
      // pair term touches only log sigma: d/dtau k(u_a, u_c) = -(u_a - u_c)^2 / gamma * k
      double pair = 0.0;
      for (std::size_t a = 0; a < b; ++a)
        for (std::size_t c2 = a + 1; c2 < b; ++c2) {
          const double dd = u[a] - u[c2];
          pair -= dd * dd / gamma * kmax * std::exp(-0.5 * dd * dd / gamma);
        }
      scale += pair_scale * pair;
      out.head(p) += coef * X_.row(static_cast<Eigen::Index>(i)).transpose();
      out[static_cast<Eigen::Index>(p)] += scale;
    }
    out /= static_cast<double>(batch.size());
  }

  AuxLayout aux_layout(std::size_t m) const { return {num_observations(), m, 2, NoiseKind::uniform}; }
  BlockStrategy default_blocking() const { return BlockStrategy::per_observation; }
  std::size_t pmcmc_pseudo_observations(std::size_t m) const { return m * num_observations(); }

  // Biased MMD estimate (V-statistic) from stored noise, m draws per observation.
  double loss_estimate(const Eigen::VectorXd& theta, const AuxState& aux) const {
    const std::size_t n = num_observations(), m = aux.layout.draws, p = num_coefficients();
    if (aux.layout.blocks != n || aux.layout.noise_dim != 2) throw std::invalid_argument("aux layout mismatch");
    const double sigma = std::exp(theta[static_cast<Eigen::Index>(p)]);
    const double gamma = kernel_.gamma(), kmax = kernel_.max_value();
    const double md = static_cast<double>(m);
    std::vector<double> u(m);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = mean(theta, i);
      double cross = 0.0, pair = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        u[j] = regression_generate(c, sigma, aux.value(i, j, 0), aux.value(i, j, 1)).value;
        const double r = y_[i] - u[j];
        cross += std::exp(-0.5 * r * r / gamma);
      }
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t l = j + 1; l < m; ++l) {
          const double r = u[j] - u[l];
          pair += std::exp(-0.5 * r * r / gamma);
        }
      total += kmax * (-2.0 * cross / md + (2.0 * pair + md) / (md * md));
    }
    return total / static_cast<double>(n);
  }

  RateEnvelope envelope(const Eigen::VectorXd& theta, const std::vector<int>& nu, double horizon, double omega,
                        double eta, EnvelopeScope scope = EnvelopeScope::full) const {
    const std::size_t p = num_coefficients(), n = num_observations();
    const double gamma = kernel_.gamma();
    const double coef_bound = std::exp(-0.5) / (std::sqrt(2.0 * std::numbers::pi) * gamma);
    const double scale_norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * std::pow(gamma, 1.5));
    const double pair_bound = 2.0 * std::exp(-1.0) / std::sqrt(2.0 * std::numbers::pi * gamma);
    const bool full = scope == EnvelopeScope::full;
    std::vector<double> agg(p + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = X_.row(static_cast<Eigen::Index>(i));
      double delta0 = y_[i] - mean(theta, i), drift = 0.0;
      for (std::size_t j = 0; j < p; ++j) drift += row[static_cast<Eigen::Index>(j)] * nu[j];
      const double delta1 = delta0 - horizon * drift;
      // convex in delta, so the sup over the segment sits at an endpoint
      const double q = scale_norm * std::max(regression_scale_kernel_sup(delta0, gamma),
                                             regression_scale_kernel_sup(delta1, gamma));
      for (std::size_t j = 0; j <= p; ++j) {
        const double v = j < p ? coef_bound * std::abs(row[static_cast<Eigen::Index>(j)]) : q;
        agg[j] = full ? agg[j] + v : std::max(agg[j], v);
      }
    }
    if (full)
      for (double& a : agg) a /= static_cast<double>(n);

    RateEnvelope env;
    env.horizon = horizon;
    env.intercept.resize(p + 1);
    env.slope.resize(p + 1);
    for (std::size_t j = 0; j < p; ++j) {
      const double bj = theta[static_cast<Eigen::Index>(j)];
      env.intercept[j] = eta * (std::max(0.0, nu[j] * bj / coefficient_prior_variance) + omega * 2.0 * agg[j]);
      env.slope[j] = eta / coefficient_prior_variance;
    }
    // -d log pi / d tau = 4 - exp(-2 tau) is monotone, so endpoints suffice
    const double tau0 = theta[static_cast<Eigen::Index>(p)], tau1 = tau0 + nu[p] * horizon;
    const double prior = std::max({0.0, -nu[p] * scale_prior_gradient(tau0), -nu[p] * scale_prior_gradient(tau1)});
    env.intercept[p] = eta * (prior + omega * (2.0 * agg[p] + pair_bound));
    env.slope[p] = 0.0;
    return env;
  }

 private:
  RowMatrix X_;
  std::vector<double> y_;
  RbfKernel kernel_;
};

}  // namespace zzgibbs

#endif
