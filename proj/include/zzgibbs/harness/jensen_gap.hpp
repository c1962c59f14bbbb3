#ifndef ZZGIBBS_HARNESS_JENSEN_GAP_HPP
#define ZZGIBBS_HARNESS_JENSEN_GAP_HPP

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

#include "zzgibbs/models/poisson_regression.hpp"
#include "zzgibbs/rng.hpp"
#include "zzgibbs/special.hpp"

namespace zzgibbs {

struct JensenGapEstimate {
  double estimate = 0.0;
  double se = 0.0;
  double expected_z = 0.0;  // E p(u; lambda)^beta, exact
};

// sum_u p(u; lambda)^(1 + beta), summed until the remaining mass is negligible.
inline double poisson_power_series(double lambda, double beta) {
  const double log_lambda = std::log(lambda);
  const auto mode = static_cast<unsigned long>(lambda);
  double s = 0.0;
  for (unsigned long u = mode;; ++u) {
    const double t = std::exp((1.0 + beta) * poisson_log_pmf(u, lambda, log_lambda));
    s += t;
    if (t < 1e-18 * s) break;
  }
  for (unsigned long u = mode; u-- > 0;) {
    const double t = std::exp((1.0 + beta) * poisson_log_pmf(u, lambda, log_lambda));
    s += t;
    if (t < 1e-18 * s) break;
  }
  return s;
}

// Upper bound 1.6 e / (4m) on the prior-weighted gap.
inline double jensen_gap_bound(std::size_t m) { return 1.6 * std::numbers::e / (4.0 * static_cast<double>(m)); }

// Nested Monte Carlo estimate of E exp(Z_m) - exp(E Z_m) for observation i,
// Z_m = (1/m) sum_j p(u_j; x_i)^beta with u_j ~ Poisson(exp(x_i' theta)).
// Each replicate uses exp(Z) - exp(mu) (1 + Z - mu), which has the same mean
// (E Z = mu exactly) and is nonnegative by convexity. With prior_sd set the
// estimate is multiplied by the N(0, prior_sd^2 I) density at theta.
inline JensenGapEstimate jensen_gap_estimate(const PoissonRegression& model, const Eigen::VectorXd& theta,
                                             std::size_t i, std::size_t m, std::size_t reps, Rng& rng,
                                             std::optional<double> prior_sd = std::nullopt) {
  if (m == 0) throw std::invalid_argument("m must be positive");
  if (reps < 2) throw std::invalid_argument("need at least two replications");
  const double beta = model.beta();
  const double eta = model.linear_predictor(theta, i);
  if (eta > 40.0) throw std::overflow_error("rate overflow in Jensen gap");
  const double lambda = std::exp(eta);
  const double mu = poisson_power_series(lambda, beta);
  const double emu = std::exp(mu);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const unsigned long u = poisson_quantile(lambda, rng.uniform());
      z += std::exp(beta * poisson_log_pmf(u, lambda, eta));
    }
    z /= static_cast<double>(m);
    const double g = std::exp(z) - emu * (1.0 + (z - mu));
    if (!std::isfinite(g)) throw std::overflow_error("non-finite Jensen gap replicate");
    s1 += g;
    s2 += g * g;
  }
  const double R = static_cast<double>(reps);
  JensenGapEstimate out;
  out.expected_z = mu;
  out.estimate = s1 / R;
  out.se = std::sqrt(std::max(0.0, s2 / R - out.estimate * out.estimate) / (R - 1.0));
  if (prior_sd) {
    const double sd = *prior_sd;
    if (!(sd > 0.0)) throw std::invalid_argument("prior sd must be positive");
    double log_density = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j)
      log_density += -0.5 * theta[j] * theta[j] / (sd * sd) - std::log(sd * std::sqrt(2.0 * std::numbers::pi));
    const double w = std::exp(log_density);
    out.estimate *= w;
    out.se *= w;
  }
  return out;
}

}  // namespace zzgibbs

#endif
