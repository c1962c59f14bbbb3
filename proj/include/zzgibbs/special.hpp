#ifndef ZZGIBBS_SPECIAL_HPP
#define ZZGIBBS_SPECIAL_HPP

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace zzgibbs {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal quantile needs p in (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

inline double log_factorial(unsigned long u) {
  static const auto table = [] {
    std::array<double, 1024> t{};
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::lgamma(static_cast<double>(i) + 1.0);
    return t;
  }();
  return u < table.size() ? table[u] : std::lgamma(static_cast<double>(u) + 1.0);
}

inline double poisson_log_pmf(unsigned long u, double lambda, double log_lambda) {
  return static_cast<double>(u) * log_lambda - lambda - log_factorial(u);
}

// Smallest u with P(X <= u) >= p for X ~ Poisson(lambda).
inline unsigned long poisson_quantile(double lambda, double p) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::domain_error("Poisson rate must be finite and >= 0");
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("Poisson quantile needs p in (0, 1)");
  if (lambda == 0.0) return 0;
  if (lambda < 30.0) {
    double pmf = std::exp(-lambda), cdf = pmf;
    unsigned long u = 0;
    while (cdf < p) {
      ++u;
      pmf *= lambda / static_cast<double>(u);
      const double next = cdf + pmf;
      if (next == cdf) break;  // p within rounding of 1
      cdf = next;
    }
    return u;
  }
  // start at the mode and walk, using the regularised incomplete gamma for the cdf
  const double ll = std::log(lambda);
  auto u = static_cast<unsigned long>(lambda);
  double cdf = boost::math::gamma_q(static_cast<double>(u) + 1.0, lambda);
  if (cdf >= p) {
    while (u > 0) {
      const double below = cdf - std::exp(poisson_log_pmf(u, lambda, ll));
      if (below < p) break;
      cdf = below;
      --u;
    }
    return u;
  }
  while (cdf < p) {
    ++u;
    const double next = cdf + std::exp(poisson_log_pmf(u, lambda, ll));
    if (next == cdf) break;
    cdf = next;
  }
  return u;
}

}  // namespace zzgibbs

#endif
