#ifndef ZZGIBBS_MODELS_POISSON_REGRESSION_HPP
#define ZZGIBBS_MODELS_POISSON_REGRESSION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
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
#include "zzgibbs/special.hpp"

namespace zzgibbs {

// Closed-form bound on |u - lambda| p(u; lambda)^beta over u, times |x_j|.
inline double poisson_closed_form_bound(double lambda, double beta, double abs_x) {
  const double log_lambda = std::log(lambda);
  return std::exp(lambda * beta - 0.5 * beta * std::log(std::numbers::pi)) * std::exp(std::exp(2.0 * log_lambda - 1.0)) *
         abs_x;
}

// Certified sup over u in N and lambda in [lo, hi] of |u - lambda| p(u; lambda)^beta.
// For fixed u the interior critical points in lambda solve
// beta lambda^2 - (1 + 2 beta u) lambda + beta u^2 = 0. The search over u
// stops once (u - lo) p(u; hi)^beta, which dominates every later term, is
// decreasing and below the running maximum.
inline double poisson_weighted_score_sup(double lo, double hi, double beta) {
  check_beta(beta);
  if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi)) throw std::domain_error("invalid Poisson rate interval");
  auto h = [beta](unsigned long u, double lambda) {
    return std::abs(static_cast<double>(u) - lambda) * std::exp(beta * poisson_log_pmf(u, lambda, std::log(lambda)));
  };
  double best = 0.0;
  for (unsigned long u = 0;; ++u) {
    const double ud = static_cast<double>(u);
    best = std::max({best, h(u, lo), h(u, hi)});
    const double disc = std::sqrt(1.0 + 4.0 * beta * ud);
    for (double r : {(1.0 + 2.0 * beta * ud - disc) / (2.0 * beta), (1.0 + 2.0 * beta * ud + disc) / (2.0 * beta)})
      if (r > lo && r < hi) best = std::max(best, h(u, r));
    if (ud > hi) {
      const auto tail = [&](unsigned long w) {
        return (static_cast<double>(w) - lo) * std::exp(beta * poisson_log_pmf(w, hi, std::log(hi)));
      };
      const double next = tail(u + 1);
      if (next < tail(u) && next <= best) break;
    }
    if (u > 100000000ul) throw std::overflow_error("envelope overflow; reduce t_h");
  }
  return best;
}

// Range-max table of poisson_weighted_score_sup over cells of log lambda.
class PoissonSupTable {
 public:
  static constexpr double log_min = -30.0;
  static constexpr double log_max = 8.0;
  static constexpr double cell = 1.0 / 64.0;

  explicit PoissonSupTable(double beta) : beta_(beta) {
    const auto cells = static_cast<std::size_t>(std::llround((log_max - log_min) / cell));
    std::vector<double> base(cells);
    for (std::size_t k = 0; k < cells; ++k) {
      const double a = log_min + cell * static_cast<double>(k);
      base[k] = poisson_weighted_score_sup(std::exp(a), std::exp(a + cell), beta);
    }
    levels_.push_back(std::move(base));
    for (std::size_t w = 1; 2 * w <= cells; w *= 2) {
      const auto& prev = levels_.back();
      std::vector<double> next(cells - 2 * w + 1);
      for (std::size_t i = 0; i < next.size(); ++i) next[i] = std::max(prev[i], prev[i + w]);
      levels_.push_back(std::move(next));
    }
  }

  double beta() const { return beta_; }

  // Upper bound on the sup over lambda in [exp(l_lo), exp(l_hi)].
  double sup_over_log_rates(double l_lo, double l_hi) const {
    if (!(l_lo >= log_min && l_hi <= log_max)) return poisson_weighted_score_sup(std::exp(l_lo), std::exp(l_hi), beta_);
    const std::size_t cells = levels_.front().size();
    // widen by a hair so rounding never drops a boundary cell
    auto cell_of = [&](double l, double nudge) {
      const double x = std::floor((l - log_min) / cell + nudge);
      return static_cast<std::size_t>(std::clamp(x, 0.0, static_cast<double>(cells - 1)));
    };
    const std::size_t a = cell_of(l_lo, -1e-9), b = cell_of(l_hi, 1e-9);
    const std::size_t len = b - a + 1;
    std::size_t level = 0;
    while ((std::size_t{2} << level) <= len) ++level;
    const auto& row = levels_[level];
    return std::max(row[a], row[b + 1 - (std::size_t{1} << level)]);
  }

  static std::shared_ptr<const PoissonSupTable> shared(double beta) {
    static std::mutex mu;
    static std::map<double, std::shared_ptr<const PoissonSupTable>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[beta];
    if (!slot) slot = std::make_shared<const PoissonSupTable>(beta);
    return slot;
  }

 private:
  double beta_;
  std::vector<std::vector<double>> levels_;
};

enum class PoissonBound { exact, closed_form };

// Poisson regression y_i ~ Poisson(exp(x_i' theta)) with a N(0, I) prior and
// the beta-divergence loss. Pseudo-observations are conditional on x_i; the
// base noise is one uniform per draw, mapped through the inverse cdf.
class PoissonRegression {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  PoissonRegression(const Dataset& data, double beta, PoissonBound bound = PoissonBound::exact)
      : X_(data.X), beta_(beta), bound_(bound) {
    check_beta(beta);
    if (data.y.cols() != 1) throw std::invalid_argument("Poisson regression needs a single response column");
    if (data.X.rows() != data.y.rows() || data.X.cols() == 0) throw std::invalid_argument("covariates do not match");
    y_.resize(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
      const double v = data.y(static_cast<Eigen::Index>(i), 0);
      if (!(v >= 0.0) || v != std::floor(v)) throw std::invalid_argument("Poisson responses must be counts");
      y_[i] = static_cast<unsigned long>(v);
    }
    if (bound_ == PoissonBound::exact) table_ = PoissonSupTable::shared(beta);
  }

  std::size_t dimension() const { return static_cast<std::size_t>(X_.cols()); }
  std::size_t num_observations() const { return y_.size(); }
  std::size_t pseudo_observations_per_simulation(std::size_t batch) const { return batch; }
  void check_simulation_count(std::size_t b) const {
    if (b == 0) throw std::invalid_argument("b must be positive");
  }
  double beta() const { return beta_; }
  const RowMatrix& covariates() const { return X_; }
  unsigned long response(std::size_t i) const { return y_[i]; }

  double log_prior(const Eigen::VectorXd& theta) const { return -0.5 * theta.squaredNorm(); }
  void prior_log_density_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& out) const { out = -theta; }

  double linear_predictor(const Eigen::VectorXd& theta, std::size_t i) const {
    return X_.row(static_cast<Eigen::Index>(i)).dot(theta);
  }
  double rate(const Eigen::VectorXd& theta, std::size_t i) const {
    const double lambda = std::exp(linear_predictor(theta, i));
    if (!std::isfinite(lambda)) throw std::overflow_error("Poisson rate overflow");
    return lambda;
  }

  double log_density(const Eigen::VectorXd& theta, double v, std::size_t i) const {
    const double l = linear_predictor(theta, i);
    return poisson_log_pmf(static_cast<unsigned long>(v), std::exp(l), l);
  }
  void add_score(const Eigen::VectorXd& theta, double v, std::size_t i, double w, Eigen::VectorXd& out) const {
    out += w * (v - rate(theta, i)) * X_.row(static_cast<Eigen::Index>(i)).transpose();
  }

  std::vector<unsigned long> simulate(const Eigen::VectorXd& theta, Rng& rng) const {
    std::vector<unsigned long> out(num_observations());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = poisson_quantile(rate(theta, i), rng.uniform());
    return out;
  }

  // phi averaged over `batch`, with b fresh draws per observation.
  void estimate_loss_gradient(const Eigen::VectorXd& theta, std::size_t b, std::span<const std::size_t> batch,
                              Rng& rng, Eigen::VectorXd& out) const {
    out.setZero(theta.size());
    const double inv_b = 1.0 / static_cast<double>(b);
    std::vector<double> pmf, cdf, pw;
    for (std::size_t i : batch) {
      const double l = linear_predictor(theta, i);
      const double lambda = std::exp(l);
      if (!std::isfinite(lambda) || lambda > 1e8) throw std::overflow_error("Poisson rate overflow");
      double acc = 0.0;
      if (lambda < 30.0) {
        // inversion by the recursion of poisson_quantile on a table grown on demand,
        // shared by the b draws of this observation
        pmf.assign(1, std::exp(-lambda));
        cdf.assign(1, pmf[0]);
        pw.assign(1, powered(pmf[0]));
        for (std::size_t k = 0; k < b; ++k) {
          const double p = rng.uniform();
          std::size_t u = 0;
          double weight;
          while (true) {
            if (cdf[u] >= p) { weight = pw[u]; break; }
            if (u + 1 == cdf.size()) {
              const double next_pmf = pmf.back() * lambda / static_cast<double>(u + 1);
              const double next_cdf = cdf.back() + next_pmf;
              if (next_cdf == cdf.back()) { ++u; weight = powered(next_pmf); break; }
              pmf.push_back(next_pmf);
              cdf.push_back(next_cdf);
              pw.push_back(powered(next_pmf));
            }
            ++u;
          }
          acc += (static_cast<double>(u) - lambda) * weight;
        }
      } else {
        for (std::size_t k = 0; k < b; ++k) {
          const unsigned long u = draw(lambda, rng.uniform());
          acc += (static_cast<double>(u) - lambda) * std::exp(beta_ * poisson_log_pmf(u, lambda, l));
        }
      }
      acc *= inv_b;
      acc -= (static_cast<double>(y_[i]) - lambda) * std::exp(beta_ * poisson_log_pmf(y_[i], lambda, l));
      out += acc * X_.row(static_cast<Eigen::Index>(i)).transpose();
    }
    out *= (beta_ + 1.0) / static_cast<double>(batch.size());
  }

  AuxLayout aux_layout(std::size_t m) const { return {num_observations(), m, 1, NoiseKind::uniform}; }
  BlockStrategy default_blocking() const { return BlockStrategy::per_observation; }
  std::size_t pmcmc_pseudo_observations(std::size_t m) const { return m * num_observations(); }

  // Beta loss estimate from the stored uniforms (m per observation).
  double loss_estimate(const Eigen::VectorXd& theta, const AuxState& aux) const {
    const std::size_t n = num_observations(), m = aux.layout.draws;
    if (aux.layout.blocks != n || aux.layout.noise_dim != 1) throw std::invalid_argument("aux layout mismatch");
    double sim = 0.0, obs = 0.0;
    std::vector<double> pmf, cdf, powered;
    for (std::size_t i = 0; i < n; ++i) {
      const double l = linear_predictor(theta, i);
      const double lambda = std::exp(l);
      if (!std::isfinite(lambda) || lambda > 1e8) return std::numeric_limits<double>::infinity();
      obs += std::exp(beta_ * poisson_log_pmf(y_[i], lambda, l));
      double acc = 0.0;
      if (lambda < 30.0) {
        pmf.assign(1, std::exp(-lambda));
        cdf.assign(1, pmf[0]);
        powered.assign(1, std::exp(-beta_ * lambda));
        for (std::size_t j = 0; j < m; ++j) {
          const double p = aux.value(i, j);
          std::size_t u = 0;
          while (cdf[u] < p) {
            if (u + 1 == cdf.size()) {
              const double next_pmf = pmf.back() * lambda / static_cast<double>(cdf.size());
              const double next_cdf = cdf.back() + next_pmf;
              if (next_cdf == cdf.back()) break;
              pmf.push_back(next_pmf);
              cdf.push_back(next_cdf);
              powered.push_back(std::exp(beta_ * poisson_log_pmf(cdf.size() - 1, lambda, l)));
            }
            ++u;
          }
          acc += powered[u];
        }
      } else {
        for (std::size_t j = 0; j < m; ++j)
          acc += std::exp(beta_ * poisson_log_pmf(poisson_quantile(lambda, aux.value(i, j)), lambda, l));
      }
      sim += acc / static_cast<double>(m);
    }
    return (sim - (1.0 + 1.0 / beta_) * obs) / static_cast<double>(n);
  }

  // Per-observation bound on |u - lambda_i| p^beta along theta + nu s, s in [0, horizon].
  double observation_bound(const Eigen::VectorXd& theta, const std::vector<int>& nu, double horizon,
                           std::size_t i) const {
    const auto row = X_.row(static_cast<Eigen::Index>(i));
    double l0 = row.dot(theta), slope = 0.0;
    for (Eigen::Index j = 0; j < row.size(); ++j) slope += row[j] * nu[static_cast<std::size_t>(j)];
    double l1 = l0 + horizon * slope;
    if (l1 < l0) std::swap(l0, l1);
    if (l1 > 40.0) throw std::overflow_error("envelope overflow; reduce t_h");
    if (bound_ == PoissonBound::closed_form) return poisson_closed_form_bound(std::exp(l1), beta_, 1.0);
    return table_->sup_over_log_rates(l0, l1);
  }

  RateEnvelope envelope(const Eigen::VectorXd& theta, const std::vector<int>& nu, double horizon, double omega,
                        double eta, EnvelopeScope scope = EnvelopeScope::full) const {
    const std::size_t d = dimension(), n = num_observations();
    std::vector<double> agg(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = observation_bound(theta, nu, horizon, i);
      for (std::size_t j = 0; j < d; ++j) {
        const double v = std::abs(X_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) * g;
        agg[j] = scope == EnvelopeScope::full ? agg[j] + v : std::max(agg[j], v);
      }
    }
    RateEnvelope env;
    env.horizon = horizon;
    env.intercept.resize(d);
    env.slope.assign(d, eta);
    for (std::size_t j = 0; j < d; ++j) {
      const double data = omega * (beta_ + 1.0) * 2.0 * (scope == EnvelopeScope::full ? agg[j] / static_cast<double>(n) : agg[j]);
      env.intercept[j] = eta * (std::max(0.0, nu[j] * theta[static_cast<Eigen::Index>(j)]) + data);
    }
    return env;
  }

 private:
  static unsigned long draw(double lambda, double u) { return poisson_quantile(lambda, u); }
  double powered(double pmf) const { return beta_ == 0.5 ? std::sqrt(pmf) : std::pow(pmf, beta_); }

  RowMatrix X_;
  std::vector<unsigned long> y_;
  double beta_;
  PoissonBound bound_;
  std::shared_ptr<const PoissonSupTable> table_;
};

}  // namespace zzgibbs

#endif
