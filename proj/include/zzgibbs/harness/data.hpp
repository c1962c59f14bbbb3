#ifndef ZZGIBBS_HARNESS_DATA_HPP
#define ZZGIBBS_HARNESS_DATA_HPP

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>

#include <Eigen/Dense>

#include "zzgibbs/core_types.hpp"
#include "zzgibbs/rng.hpp"
#include "zzgibbs/special.hpp"
#include "zzgibbs/trajectory.hpp"

namespace zzgibbs {

// Stream offsets keep data generation independent of sampler seeds.
inline constexpr std::uint64_t data_stream = 0x64617461;

// n pairs on the uniform scale from a Gaussian copula with correlation rho.
inline Dataset gen_copula_data(std::size_t n, double rho, std::uint64_t seed) {
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("copula correlation must be in (-1, 1)");
  Rng rng(seed, data_stream);
  Dataset d;
  d.y.resize(static_cast<Eigen::Index>(n), 2);
  const double s = std::sqrt(1.0 - rho * rho);
  for (Eigen::Index i = 0; i < d.y.rows(); ++i) {
    const double z1 = rng.normal(), z2 = rho * z1 + s * rng.normal();
    d.y(i, 0) = normal_cdf(z1);
    d.y(i, 1) = normal_cdf(z2);
  }
  return d;
}

inline Eigen::VectorXd regression_true_coefficients() {
  Eigen::VectorXd b(8);
  b << 4, 4, 3, 3, 2, 2, 1, 1;
  return b;
}

// Truth for (beta, log sigma) with sigma matched to the Laplace(0, 1) noise sd.
inline Eigen::VectorXd regression_true_theta() {
  Eigen::VectorXd t(9);
  t << regression_true_coefficients(), 0.5 * std::log(2.0);
  return t;
}

// Intercept plus 7 standard normal covariates, Laplace(0, 1) errors.
inline Dataset gen_regression_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, data_stream + 1);
  const Eigen::VectorXd beta = regression_true_coefficients();
  Dataset d;
  d.X.resize(static_cast<Eigen::Index>(n), 8);
  d.y.resize(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    d.X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < 8; ++j) d.X(i, j) = rng.normal();
    const double e = -std::log(rng.uniform()) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    d.y(i, 0) = d.X.row(i).dot(beta) + e;
  }
  return d;
}

inline Eigen::VectorXd poisson_true_theta() {
  Eigen::VectorXd t(5);
  t << 1.0, 0.5, 1.5, 0.0, 0.0;
  return t;
}

// Intercept plus 4 N(0, 0.25^2) covariates.
inline Eigen::MatrixXd gen_poisson_covariates(std::size_t n, Rng& rng) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 5);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < 5; ++j) X(i, j) = 0.25 * rng.normal();
  }
  return X;
}

inline Dataset gen_poisson_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, data_stream + 2);
  const Eigen::VectorXd theta = poisson_true_theta();
  Dataset d;
  d.X = gen_poisson_covariates(n, rng);
  d.y.resize(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i)
    d.y(i, 0) = static_cast<double>(poisson_quantile(std::exp(d.X.row(i).dot(theta)), rng.uniform()));
  return d;
}

inline void write_dataset_csv(const Dataset& d, std::ostream& os) {
  const auto q = d.y.cols(), p = d.X.cols();
  for (Eigen::Index c = 0; c < q; ++c) os << (c ? "," : "") << (q == 1 ? std::string("y") : "y" + std::to_string(c + 1));
  for (Eigen::Index c = 0; c < p; ++c) os << ",x" << c + 1;
  os << '\n';
  for (Eigen::Index i = 0; i < d.y.rows(); ++i) {
    for (Eigen::Index c = 0; c < q; ++c) os << (c ? "," : "") << format_double(d.y(i, c));
    for (Eigen::Index c = 0; c < p; ++c) os << ',' << format_double(d.X(i, c));
    os << '\n';
  }
}

}  // namespace zzgibbs

#endif
