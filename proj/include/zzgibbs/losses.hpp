#ifndef ZZGIBBS_LOSSES_HPP
#define ZZGIBBS_LOSSES_HPP

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace zzgibbs {

// Normalised Gaussian RBF kernel on R^p:
// k(y, u) = (2 pi gamma)^(-p/2) exp(-|y - u|^2 / (2 gamma)).
class RbfKernel {
 public:
  RbfKernel(double gamma, std::size_t p) : gamma_(gamma), p_(p) {
    if (!(gamma > 0.0)) throw std::invalid_argument("kernel bandwidth must be positive");
    if (p == 0) throw std::invalid_argument("kernel dimension must be positive");
    norm_ = std::pow(2.0 * std::numbers::pi * gamma, -0.5 * static_cast<double>(p));
  }

  double gamma() const { return gamma_; }
  std::size_t dimension() const { return p_; }
  double max_value() const { return norm_; }

  double operator()(const double* y, const double* u) const {
    double r2 = 0.0;
    for (std::size_t l = 0; l < p_; ++l) r2 += (y[l] - u[l]) * (y[l] - u[l]);
    return norm_ * std::exp(-0.5 * r2 / gamma_);
  }
  double operator()(std::span<const double> y, std::span<const double> u) const {
    check(y, u);
    return (*this)(y.data(), u.data());
  }

  // d k(y, u) / d u_l
  double partial_u(const double* y, const double* u, std::size_t l) const {
    return (y[l] - u[l]) / gamma_ * (*this)(y, u);
  }
  double partial_u(std::span<const double> y, std::span<const double> u, std::size_t l) const {
    check(y, u);
    if (l >= p_) throw std::out_of_range("kernel partial index out of range");
    return partial_u(y.data(), u.data(), l);
  }

 private:
  void check(std::span<const double> y, std::span<const double> u) const {
    if (y.size() != p_ || u.size() != p_) throw std::invalid_argument("kernel argument has wrong dimension");
  }
  double gamma_;
  std::size_t p_;
  double norm_;
};

inline double rbf_partial(std::span<const double> y, std::span<const double> u, std::size_t l, double gamma) {
  return RbfKernel(gamma, y.size()).partial_u(y, u, l);
}

// ---- beta-divergence (density power) loss --------------------------------

inline void check_beta(double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
}

// (1/m) sum p(u_j)^beta - (1 + 1/beta)(1/n) sum p(y_i)^beta from log densities.
inline double beta_loss_from_log_densities(std::span<const double> log_p_sim, std::span<const double> log_p_obs,
                                           double beta) {
  check_beta(beta);
  if (log_p_sim.empty() || log_p_obs.empty()) throw std::invalid_argument("beta loss needs data and simulations");
  double a = 0.0, c = 0.0;
  for (double lp : log_p_sim) a += std::exp(beta * lp);
  for (double lp : log_p_obs) c += std::exp(beta * lp);
  const double out = a / static_cast<double>(log_p_sim.size()) -
                     (1.0 + 1.0 / beta) * c / static_cast<double>(log_p_obs.size());
  if (!std::isfinite(out)) throw std::domain_error("non-finite density in beta loss");
  return out;
}

template <class LogDensity>
double beta_loss_estimate(LogDensity&& log_density, std::span<const double> y, std::span<const double> u,
                          double beta) {
  std::vector<double> ls(u.size()), lo(y.size());
  for (std::size_t j = 0; j < u.size(); ++j) ls[j] = log_density(u[j]);
  for (std::size_t i = 0; i < y.size(); ++i) lo[i] = log_density(y[i]);
  return beta_loss_from_log_densities(ls, lo, beta);
}

// Model with per-observation conditional densities: log_density(theta, v, i)
// and add_score(theta, v, i, w, out) adding w * d/dtheta log p(v | x_i).
template <class M>
concept ConditionalDensityModel = requires(const M& m, const Eigen::VectorXd& th, double v, std::size_t i,
                                           Eigen::VectorXd& out) {
  { m.log_density(th, v, i) } -> std::convertible_to<double>;
  m.add_score(th, v, i, 1.0, out);
};

// phi = (beta+1)/n sum_i [ (1/b) sum_k s(u_ik) p(u_ik)^beta - s(y_i) p(y_i)^beta ],
// u laid out row-major as n rows of b draws.
template <ConditionalDensityModel M>
Eigen::VectorXd beta_grad_phi(const M& model, const Eigen::VectorXd& theta, std::span<const double> y,
                              std::span<const double> u, std::size_t b, double beta) {
  check_beta(beta);
  const std::size_t n = y.size();
  if (n == 0 || b == 0 || u.size() != n * b) throw std::invalid_argument("beta gradient: bad layout");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(theta.size());
  const double scale = (beta + 1.0) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < b; ++k) {
      const double v = u[i * b + k];
      model.add_score(theta, v, i, scale / static_cast<double>(b) * std::exp(beta * model.log_density(theta, v, i)),
                      out);
    }
    model.add_score(theta, y[i], i, -scale * std::exp(beta * model.log_density(theta, y[i], i)), out);
  }
  return out;
}

// ---- MMD loss ---------------------------------------------------------------
// Points are flat row-major arrays of p-vectors.

namespace detail {
inline std::size_t count_points(std::span<const double> pts, std::size_t p) {
  if (pts.size() % p != 0) throw std::invalid_argument("point array not a multiple of kernel dimension");
  return pts.size() / p;
}

inline double mmd_cross_term(const RbfKernel& k, std::span<const double> y, std::span<const double> u) {
  const std::size_t p = k.dimension(), n = count_points(y, p), m = count_points(u, p);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) s += k(y.data() + i * p, u.data() + j * p);
  return s / static_cast<double>(n * m);
}

inline double mmd_pair_sum_offdiag(const RbfKernel& k, std::span<const double> u) {
  const std::size_t p = k.dimension(), m = count_points(u, p);
  double s = 0.0;
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t l = j + 1; l < m; ++l) s += k(u.data() + j * p, u.data() + l * p);
  return 2.0 * s;
}
}  // namespace detail

// -2/(nm) sum k(y_i, u_j) + 1/m^2 sum_{j, j'} k(u_j, u_j').
inline double mmd_loss_biased(const RbfKernel& k, std::span<const double> y, std::span<const double> u) {
  const std::size_t m = detail::count_points(u, k.dimension());
  if (m == 0 || y.empty()) throw std::invalid_argument("MMD loss needs data and simulations");
  const double md = static_cast<double>(m);
  return -2.0 * detail::mmd_cross_term(k, y, u) +
         (detail::mmd_pair_sum_offdiag(k, u) + md * k.max_value()) / (md * md);
}

// -2/(nb) sum k(y_i, u_j) + 1/(b(b-1)) sum_{j != j'} k(u_j, u_j').
inline double mmd_loss_unbiased(const RbfKernel& k, std::span<const double> y, std::span<const double> u) {
  const std::size_t b = detail::count_points(u, k.dimension());
  if (b < 2) throw std::invalid_argument("unbiased MMD needs b >= 2");
  if (y.empty()) throw std::invalid_argument("MMD loss needs data");
  const double bd = static_cast<double>(b);
  return -2.0 * detail::mmd_cross_term(k, y, u) + detail::mmd_pair_sum_offdiag(k, u) / (bd * (bd - 1.0));
}

// Gradient of the unbiased MMD estimate through u_k = G(theta, v_k), given the
// pushed-forward points u (b x p) and Jacobians jac (b blocks of p x d,
// row-major). Averages the data term over the observations in y.
inline Eigen::VectorXd mmd_grad_phi(const RbfKernel& k, std::span<const double> y, std::span<const double> u,
                                    std::span<const double> jac, std::size_t d) {
  const std::size_t p = k.dimension(), n = detail::count_points(y, p), b = detail::count_points(u, p);
  if (b < 2) throw std::invalid_argument("unbiased MMD needs b >= 2");
  if (n == 0) throw std::invalid_argument("MMD gradient needs data");
  if (jac.size() != b * p * d) throw std::invalid_argument("Jacobian has wrong size");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  auto J = [&](std::size_t kk, std::size_t l, std::size_t r) { return jac[(kk * p + l) * d + r]; };
  const double data_scale = -2.0 / (static_cast<double>(n) * static_cast<double>(b));
  for (std::size_t kk = 0; kk < b; ++kk) {
    const double* uk = u.data() + kk * p;
    for (std::size_t i = 0; i < n; ++i) {
      const double* yi = y.data() + i * p;
      const double kv = k(yi, uk);
      for (std::size_t l = 0; l < p; ++l) {
        const double g = data_scale * (yi[l] - uk[l]) / k.gamma() * kv;
        for (std::size_t r = 0; r < d; ++r) out[r] += g * J(kk, l, r);
      }
    }
  }
  // d/dtheta k(u_a, u_c) = sum_l d_1l k (J_a - J_c), d_1l k(a, c) = (c_l - a_l)/gamma k
  const double pair_scale = 2.0 / (static_cast<double>(b) * static_cast<double>(b - 1));
  for (std::size_t a = 0; a < b; ++a) {
    for (std::size_t c = a + 1; c < b; ++c) {
      const double* ua = u.data() + a * p;
      const double* uc = u.data() + c * p;
      const double kv = k(ua, uc);
      for (std::size_t l = 0; l < p; ++l) {
        const double g = pair_scale * (uc[l] - ua[l]) / k.gamma() * kv;
        for (std::size_t r = 0; r < d; ++r) out[r] += g * (J(a, l, r) - J(c, l, r));
      }
    }
  }
  return out;
}

// Generator interface: push(theta, v, u_out, jac_out) writes u = G(theta, v)
// (p values) and dG/dtheta (p x d, row-major).
template <class G>
concept Generator = requires(const G& g, const Eigen::VectorXd& th, std::span<const double> v, double* u,
                             double* jac) {
  { g.output_dimension() } -> std::convertible_to<std::size_t>;
  { g.noise_dimension() } -> std::convertible_to<std::size_t>;
  g.push(th, v, u, jac);
};

template <Generator G>
Eigen::VectorXd mmd_grad_phi(const RbfKernel& k, const G& gen, const Eigen::VectorXd& theta,
                             std::span<const double> y, std::span<const double> v) {
  const std::size_t p = gen.output_dimension(), q = gen.noise_dimension();
  const auto d = static_cast<std::size_t>(theta.size());
  if (v.size() % q != 0) throw std::invalid_argument("noise array not a multiple of noise dimension");
  const std::size_t b = v.size() / q;
  std::vector<double> u(b * p), jac(b * p * d);
  for (std::size_t kk = 0; kk < b; ++kk) gen.push(theta, v.subspan(kk * q, q), u.data() + kk * p, jac.data() + kk * p * d);
  return mmd_grad_phi(k, y, u, jac, d);
}

}  // namespace zzgibbs

#endif
