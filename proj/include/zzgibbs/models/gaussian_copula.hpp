#ifndef ZZGIBBS_MODELS_GAUSSIAN_COPULA_HPP
#define ZZGIBBS_MODELS_GAUSSIAN_COPULA_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "zzgibbs/aux_state.hpp"
#include "zzgibbs/core_types.hpp"
#include "zzgibbs/losses.hpp"
#include "zzgibbs/models/model_target.hpp"
#include "zzgibbs/rng.hpp"
#include "zzgibbs/special.hpp"

namespace zzgibbs {

// rho = 2 / (1 + exp(-theta)) - 1
inline double copula_rho(double theta) { return std::tanh(0.5 * theta); }
inline double copula_rho_derivative(double theta) {
  const double r = copula_rho(theta);
  return 0.5 * (1.0 - r * r);
}

// Ranks scaled by 1/(n+1); ties get their average rank.
inline std::vector<double> pseudo_observations(std::span<const double> x) {
  const std::size_t n = x.size();
  for (double v : x)
    if (std::isnan(v)) throw std::invalid_argument("pseudo-observations: NaN in data");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> out(n);
  for (std::size_t s = 0; s < n;) {
    std::size_t e = s;
    while (e + 1 < n && x[order[e + 1]] == x[order[s]]) ++e;
    const double rank = 0.5 * static_cast<double>(s + e) + 1.0;
    for (std::size_t k = s; k <= e; ++k) out[order[k]] = rank / static_cast<double>(n + 1);
    s = e + 1;
  }
  return out;
}

// Gaussian-scale pseudo pair (v1, rho v1 + sqrt(1 - rho^2) v2) and the
// derivative of its second coordinate in theta.
struct CopulaDraw {
  double z1;
  double z2;
  double dz2;
};

inline CopulaDraw copula_generate(double theta, double v1, double v2) {
  const double r = copula_rho(theta);
  const double s = std::sqrt(std::max(0.0, 1.0 - r * r));
  return {v1, r * v1 + s * v2, 0.5 * (s * s * v1 - r * s * v2)};
}

// max over e1 of exp(-e1^2 / (2 gamma)) |e1 + kappa|
inline double copula_inner_sup(double kappa, double gamma) {
  const double a = std::abs(kappa), r = std::sqrt(a * a + 4.0 * gamma);
  const double x = 0.5 * (r - a);
  return 0.5 * (a + r) * std::exp(-0.5 * x * x / gamma);
}

// F(c; rho) = max over (e1, e2) of exp(-(e1^2 + e2^2) / (2 gamma)) |e2| |e1 - rho e2 + c|.
// The e1 maximisation is closed form; e2 is searched on a grid and refined.
inline double copula_kernel_sup(double c, double rho, double gamma) {
  const double half = 10.0 * std::sqrt(gamma);
  constexpr int points = 401;
  const double step = 2.0 * half / (points - 1);
  auto f = [&](double e2) { return std::exp(-0.5 * e2 * e2 / gamma) * std::abs(e2) * copula_inner_sup(c - rho * e2, gamma); };
  int best = 0;
  double best_val = -1.0;
  for (int k = 0; k < points; ++k) {
    const double v = f(-half + step * k);
    if (v > best_val) { best_val = v; best = k; }
  }
  if (best == 0 || best == points - 1) throw std::runtime_error("widen z-grid");
  // golden-section refinement on the bracketing cell pair
  double lo = -half + step * (best - 1), hi = -half + step * (best + 1);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo), f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) { lo = x1; x1 = x2; f1 = f2; x2 = lo + g * (hi - lo); f2 = f(x2); }
    else { hi = x2; x2 = x1; f2 = f1; x1 = hi - g * (hi - lo); f1 = f(x1); }
  }
  return std::max({best_val, f1, f2});
}

// F tabulated on a rho grid over [-1, 1] and |c| knots. F is nondecreasing in
// |c| and, along any rho interval, bounded by its values at the endpoints.
class CopulaSupTable {
 public:
  static constexpr int rho_cells = 128;  // rho step 1/64
  static constexpr double knot = 1.0 / 32.0;

  CopulaSupTable(double gamma, double c_max) : gamma_(gamma) {
    knots_ = static_cast<std::size_t>(std::ceil(c_max / knot)) + 2;
    values_.resize((rho_cells + 1) * knots_);
    for (int k = 0; k <= rho_cells; ++k)
      for (std::size_t q = 0; q < knots_; ++q)
        values_[static_cast<std::size_t>(k) * knots_ + q] = copula_kernel_sup(knot * static_cast<double>(q), grid_rho(k), gamma);
  }

  static double grid_rho(int k) { return -1.0 + 2.0 * k / rho_cells; }
  double c_max() const { return knot * static_cast<double>(knots_ - 1); }

  // Bound on F(|c|; rho_k) via the next knot up.
  double at(int k, double c) const {
    const double a = std::abs(c);
    const auto q = static_cast<std::size_t>(std::ceil(a / knot));
    if (q >= knots_) throw std::runtime_error("widen z-grid");
    return values_[static_cast<std::size_t>(k) * knots_ + q];
  }

  static std::shared_ptr<const CopulaSupTable> shared(double gamma, double c_max) {
    static std::mutex mu;
    static std::map<std::pair<double, double>, std::shared_ptr<const CopulaSupTable>> cache;
    const double rounded = std::ceil(c_max);
    std::lock_guard lock(mu);
    auto& slot = cache[{gamma, rounded}];
    if (!slot) slot = std::make_shared<const CopulaSupTable>(gamma, rounded);
    return slot;
  }

 private:
  double gamma_;
  std::size_t knots_ = 0;
  std::vector<double> values_;
};

// Bivariate Gaussian copula with correlation rho(theta), logistic prior on
// theta and MMD loss on the normal-score scale of the pseudo-observations.
class GaussianCopula {
 public:
  GaussianCopula(const Dataset& data, double gamma = 1.0) : kernel_(gamma, 2) {
    if (data.y.cols() != 2) throw std::invalid_argument("copula needs two response columns");
    const std::size_t n = data.n();
    if (n == 0) throw std::invalid_argument("copula needs data");
    z_.resize(2 * n);
    double zmax = 0.0;
    for (int c = 0; c < 2; ++c) {
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = data.y(static_cast<Eigen::Index>(i), c);
      const auto u = pseudo_observations(col);
      for (std::size_t i = 0; i < n; ++i) {
        z_[2 * i + static_cast<std::size_t>(c)] = normal_quantile(u[i]);
        zmax = std::max(zmax, std::abs(z_[2 * i + static_cast<std::size_t>(c)]));
      }
    }
    table_ = CopulaSupTable::shared(gamma, 2.0 * zmax + 0.1);
  }

  std::size_t dimension() const { return 1; }
  std::size_t num_observations() const { return z_.size() / 2; }
  std::size_t pseudo_observations_per_simulation(std::size_t) const { return 1; }
  void check_simulation_count(std::size_t b) const {
    if (b < 2) throw std::invalid_argument("unbiased MMD needs b >= 2");
  }
  const RbfKernel& kernel() const { return kernel_; }
  std::span<const double> normal_scores() const { return z_; }

  // Logistic density: symmetric, written to avoid overflow.
  double log_prior(const Eigen::VectorXd& theta) const {
    const double a = std::abs(theta[0]);
    return -a - 2.0 * std::log1p(std::exp(-a));
  }
  void prior_log_density_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& out) const {
    out.resize(1);
    out[0] = -copula_rho(theta[0]);
  }

  // Generator interface for mmd_grad_phi.
  std::size_t output_dimension() const { return 2; }
  std::size_t noise_dimension() const { return 2; }
  void push(const Eigen::VectorXd& theta, std::span<const double> v, double* u, double* jac) const {
    const CopulaDraw g = copula_generate(theta[0], v[0], v[1]);
    u[0] = g.z1;
    u[1] = g.z2;
    jac[0] = 0.0;
    jac[1] = g.dz2;
  }

  void estimate_loss_gradient(const Eigen::VectorXd& theta, std::size_t b, std::span<const std::size_t> batch,
                              Rng& rng, Eigen::VectorXd& out) const {
    const double gamma = kernel_.gamma(), kmax = kernel_.max_value();
    std::vector<CopulaDraw> w(b);
    for (auto& g : w) {
      const double v1 = rng.normal(), v2 = rng.normal();
      g = copula_generate(theta[0], v1, v2);
    }
    double data = 0.0;
    for (std::size_t i : batch) {
      const double y1 = z_[2 * i], y2 = z_[2 * i + 1];
      for (const auto& g : w) {
        const double r1 = y1 - g.z1, r2 = y2 - g.z2;
        data += r2 / gamma * kmax * std::exp(-0.5 * (r1 * r1 + r2 * r2) / gamma) * g.dz2;
      }
    }
    data *= -2.0 / (static_cast<double>(b) * static_cast<double>(batch.size()));
    double pair = 0.0;
    for (std::size_t a = 0; a < b; ++a)
      for (std::size_t c = a + 1; c < b; ++c) {
        const double r1 = w[c].z1 - w[a].z1, r2 = w[c].z2 - w[a].z2;
        pair += r2 / gamma * kmax * std::exp(-0.5 * (r1 * r1 + r2 * r2) / gamma) * (w[a].dz2 - w[c].dz2);
      }
    pair *= 2.0 / (static_cast<double>(b) * static_cast<double>(b - 1));
    out.resize(1);
    out[0] = data + pair;
  }

  AuxLayout aux_layout(std::size_t m) const { return {1, m, 2, NoiseKind::normal}; }
  BlockStrategy default_blocking() const { return BlockStrategy::per_draw; }
  std::size_t pmcmc_pseudo_observations(std::size_t m) const { return m; }

  // Biased MMD estimate from m stored normal pairs shared by all observations.
  double loss_estimate(const Eigen::VectorXd& theta, const AuxState& aux) const {
    const std::size_t m = aux.layout.draws, n = num_observations();
    if (aux.layout.blocks != 1 || aux.layout.noise_dim != 2) throw std::invalid_argument("aux layout mismatch");
    const double gamma = kernel_.gamma(), kmax = kernel_.max_value(), c = -0.5 / gamma;
    std::vector<double> w1(m), w2(m);
    for (std::size_t j = 0; j < m; ++j) {
      const CopulaDraw g = copula_generate(theta[0], aux.value(0, j, 0), aux.value(0, j, 1));
      w1[j] = g.z1;
      w2[j] = g.z2;
    }
    double cross = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y1 = z_[2 * i], y2 = z_[2 * i + 1];
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double r1 = y1 - w1[j], r2 = y2 - w2[j];
        row += std::exp(c * (r1 * r1 + r2 * r2));
      }
      cross += row;
    }
    double pair = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t l = j + 1; l < m; ++l) {
        const double r1 = w1[j] - w1[l], r2 = w2[j] - w2[l];
        pair += std::exp(c * (r1 * r1 + r2 * r2));
      }
    const double md = static_cast<double>(m);
    return kmax * (-2.0 * cross / (static_cast<double>(n) * md) + (2.0 * pair + md) / (md * md));
  }

  RateEnvelope envelope(const Eigen::VectorXd& theta, const std::vector<int>& nu, double horizon, double omega,
                        double eta, EnvelopeScope scope = EnvelopeScope::full) const {
    const double r0 = copula_rho(theta[0]), r1 = copula_rho(theta[0] + nu[0] * horizon);
    if (1.0 - std::abs(r1) < 1e-6) throw std::runtime_error("shrink horizon");
    const double lo = std::min(r0, r1), hi = std::max(r0, r1);
    const int klo = std::clamp(static_cast<int>(std::floor((lo + 1.0) * CopulaSupTable::rho_cells / 2.0)), 0,
                               CopulaSupTable::rho_cells);
    const int khi = std::clamp(static_cast<int>(std::ceil((hi + 1.0) * CopulaSupTable::rho_cells / 2.0)), 0,
                               CopulaSupTable::rho_cells);
    const double rlo = CopulaSupTable::grid_rho(klo), rhi = CopulaSupTable::grid_rho(khi);
    const std::size_t n = num_observations();
    double agg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y1 = z_[2 * i], y2 = z_[2 * i + 1];
      const double q = std::max(table_->at(klo, y1 - rlo * y2), table_->at(khi, y1 - rhi * y2));
      agg = scope == EnvelopeScope::full ? agg + q : std::max(agg, q);
    }
    if (scope == EnvelopeScope::full) agg /= static_cast<double>(n);
    const double pair = std::max(table_->at(klo, 0.0), table_->at(khi, 0.0));
    const double gamma = kernel_.gamma();
    const double norm = 1.0 / (4.0 * std::numbers::pi * gamma * gamma);
    RateEnvelope env;
    env.horizon = horizon;
    // |d log pi / d theta| = |tanh(theta / 2)| <= 1
    env.intercept = {eta * (1.0 + omega * norm * (2.0 * agg + pair))};
    env.slope = {0.0};
    return env;
  }

 private:
  RbfKernel kernel_;
  std::vector<double> z_;  // n x 2 normal scores, row-major
  std::shared_ptr<const CopulaSupTable> table_;
};

}  // namespace zzgibbs

#endif
