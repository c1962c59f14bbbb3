#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "zzgibbs/harness/data.hpp"
#include "zzgibbs/models/gaussian_copula.hpp"
#include "zzgibbs/models/gaussian_regression.hpp"
#include "zzgibbs/models/poisson_regression.hpp"
#include "zzgibbs/trajectory.hpp"
#include "zzgibbs/zigzag.hpp"

using namespace zzgibbs;

namespace {

struct MeanAndSe {
  Eigen::VectorXd mean, se;
};

// Monte Carlo mean of phi over fresh draws.
template <class Model>
MeanAndSe phi_average(const Model& model, const Eigen::VectorXd& theta, std::size_t b, std::size_t reps,
                      std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> all(model.num_observations());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto d = theta.size();
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(d), s2 = Eigen::VectorXd::Zero(d), phi(d);
  for (std::size_t r = 0; r < reps; ++r) {
    model.estimate_loss_gradient(theta, b, all, rng, phi);
    s1 += phi;
    s2 += phi.cwiseProduct(phi);
  }
  const double R = static_cast<double>(reps);
  MeanAndSe out;
  out.mean = s1 / R;
  out.se = ((s2 / R - out.mean.cwiseProduct(out.mean)) / (R - 1.0)).cwiseMax(0.0).cwiseSqrt();
  return out;
}

void expect_within_se(const MeanAndSe& mc, const Eigen::VectorXd& exact, double k) {
  for (Eigen::Index j = 0; j < exact.size(); ++j)
    EXPECT_LE(std::abs(mc.mean[j] - exact[j]), k * mc.se[j] + 1e-12)
        << "component " << j << ": mc " << mc.mean[j] << " exact " << exact[j] << " se " << mc.se[j];
}

// Checks the realised rate never exceeds the envelope along the ray.
template <class Model>
void expect_envelope_dominates(const Model& model, const Eigen::VectorXd& theta, double omega, std::size_t b,
                               std::uint64_t seed, EnvelopeScope scope = EnvelopeScope::full,
                               std::size_t batch = 0) {
  Rng rng(seed);
  const std::size_t d = model.dimension(), n = model.num_observations();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Eigen::VectorXd prior(d), phi(d);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> nu(d);
    for (auto& v : nu) v = rng.uniform() < 0.5 ? -1 : 1;
    const double h = 1.0;
    const RateEnvelope env = model.envelope(theta, nu, h, omega, 1.0, scope);
    for (int step = 0; step <= 10; ++step) {
      const double s = h * step / 10.0;
      Eigen::VectorXd x = theta;
      for (std::size_t j = 0; j < d; ++j) x[static_cast<Eigen::Index>(j)] += nu[j] * s;
      for (int rep = 0; rep < 20; ++rep) {
        std::span<const std::size_t> use(idx);
        if (batch) {
          for (std::size_t i = 0; i < batch; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
          use = use.first(batch);
        }
        model.prior_log_density_gradient(x, prior);
        model.estimate_loss_gradient(x, b, use, rng, phi);
        for (std::size_t j = 0; j < d; ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          const double rate = std::max(0.0, nu[j] * (-prior[jj] + omega * phi[jj]));
          ASSERT_LE(rate, env.rate(j, s)) << "dim " << j << " s " << s;
        }
      }
    }
  }
}

template <class Model>
std::pair<Eigen::VectorXd, Eigen::VectorXd> zigzag_means(const Model& model, double omega, std::size_t b, double T,
                                                         const Eigen::VectorXd& init, std::uint64_t seed) {
  ZigZagConfig cfg;
  cfg.total_time = T;
  cfg.b = b;
  cfg.seed = seed;
  cfg.initial_position = init;
  cfg.store_rejected = false;
  const ModelTarget target(model, omega, b);
  const auto traj = zigzag_run(target, ModelEnvelope<Model>{&model, omega, cfg.safety_factor}, cfg);
  EXPECT_EQ(traj.diagnostics().bound_violations, 0u);
  Eigen::VectorXd m(model.dimension()), se(model.dimension());
  for (std::size_t j = 0; j < model.dimension(); ++j) {
    const auto bm = trajectory_batch_means(traj, j, 40);
    m[static_cast<Eigen::Index>(j)] = bm.mean;
    se[static_cast<Eigen::Index>(j)] = bm.se;
  }
  return {m, se};
}

template <class Model>
void expect_b_invariance(const Model& model, double omega, double T, const Eigen::VectorXd& init) {
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> res;
  for (std::size_t b : {2u, 10u, 50u}) res.push_back(zigzag_means(model, omega, b, T, init, 100 + b));
  for (std::size_t a = 0; a < res.size(); ++a)
    for (std::size_t c = a + 1; c < res.size(); ++c)
      for (Eigen::Index j = 0; j < init.size(); ++j) {
        const double se = std::hypot(res[a].second[j], res[c].second[j]);
        EXPECT_LE(std::abs(res[a].first[j] - res[c].first[j]), 3.0 * se) << "pair " << a << c << " dim " << j;
      }
}

}  // namespace

// ---------------- copula ----------------

TEST(Copula, CorrelationMapAndPrior) {
  EXPECT_NEAR(copula_rho(std::log(3.0)), 0.5, 1e-15);
  EXPECT_NEAR(copula_rho(0.7), 2.0 / (1.0 + std::exp(-0.7)) - 1.0, 1e-15);
  const GaussianCopula model(gen_copula_data(10, 0.5, 1));
  Eigen::VectorXd g(1);
  for (double th : {-30.0, -2.0, 0.0, 0.4, 3.0, 30.0}) {
    const Eigen::VectorXd t = Eigen::VectorXd::Constant(1, th);
    model.prior_log_density_gradient(t, g);
    EXPECT_NEAR(-g[0], std::tanh(th / 2.0), 1e-15);
    EXPECT_LE(std::abs(g[0]), 1.0);
    const double h = 1e-5;
    EXPECT_NEAR(g[0], (model.log_prior(Eigen::VectorXd::Constant(1, th + h)) -
                       model.log_prior(Eigen::VectorXd::Constant(1, th - h))) / (2 * h), 1e-8);
  }
  // logistic density integrates to one
  EXPECT_NEAR(oracle::integrate([&](double t) { return std::exp(model.log_prior(Eigen::VectorXd::Constant(1, t))); },
                                -60.0, 60.0),
              1.0, 1e-10);
}

TEST(Copula, PseudoObservations) {
  const std::vector<double> x{1.0, 2.0, 3.0};
  const auto u = pseudo_observations(x);
  EXPECT_NEAR(u[1], 0.5, 1e-15);
  EXPECT_NEAR(u[0], 0.25, 1e-15);
  const auto t = pseudo_observations(std::vector<double>{5.0, 1.0, 5.0});
  EXPECT_NEAR(t[0], 2.5 / 4.0, 1e-15);
  EXPECT_NEAR(t[2], 2.5 / 4.0, 1e-15);
  EXPECT_THROW(pseudo_observations(std::vector<double>{1.0, std::nan("")}), std::invalid_argument);
}

TEST(Copula, GeneratorAndJacobian) {
  const double th = std::log(3.0);
  const auto g = copula_generate(th, 1.0, 0.0);
  EXPECT_NEAR(g.z1, 1.0, 1e-15);
  EXPECT_NEAR(g.z2, 0.5, 1e-15);
  for (double v2 : {-1.3, 0.2, 2.0}) {
    const double h = 1e-6;
    const double fd = (copula_generate(th + h, 0.7, v2).z2 - copula_generate(th - h, 0.7, v2).z2) / (2 * h);
    EXPECT_NEAR(copula_generate(th, 0.7, v2).dz2, fd, 1e-8);
  }
}

TEST(Copula, KernelSupMatchesBruteForce) {
  const double gamma = 1.0;
  for (double rho : {-0.9, 0.0, 0.5, 1.0})
    for (double c : {0.0, 0.7, -2.5}) {
      double brute = 0.0;
      for (double e1 = -8; e1 <= 8; e1 += 0.01)
        for (double e2 = -8; e2 <= 8; e2 += 0.01)
          brute = std::max(brute, std::exp(-0.5 * (e1 * e1 + e2 * e2) / gamma) * std::abs(e2) * std::abs(e1 - rho * e2 + c));
      const double f = copula_kernel_sup(c, rho, gamma);
      EXPECT_GE(f, brute * (1 - 1e-12));
      EXPECT_LE(f, brute * (1 + 1e-3));
    }
}

TEST(Copula, GradientUnbiased) {
  const GaussianCopula model(gen_copula_data(20, 0.5, 2));
  Eigen::MatrixXd z(20, 2);
  for (Eigen::Index i = 0; i < 20; ++i) { z(i, 0) = model.normal_scores()[2 * i]; z(i, 1) = model.normal_scores()[2 * i + 1]; }
  for (double th : {-0.5, std::log(3.0), 2.0}) {
    const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, th);
    const auto exact = oracle::central_difference([&](const Eigen::VectorXd& t) { return oracle::copula_mmd_loss(z, t[0], 1.0); },
                                                  theta, 1e-4);
    expect_within_se(phi_average(model, theta, 3, 100000, 7), exact, 4.0);
  }
}

TEST(Copula, EnvelopeDominates) {
  const GaussianCopula model(gen_copula_data(50, 0.5, 3));
  for (double th : {-1.0, 1.1, 3.0}) {
    expect_envelope_dominates(model, Eigen::VectorXd::Constant(1, th), 50.0, 2, 11);
    expect_envelope_dominates(model, Eigen::VectorXd::Constant(1, th), 50.0, 2, 12, EnvelopeScope::subsample, 5);
  }
}

TEST(Copula, EnvelopeNearBoundaryRaises) {
  const GaussianCopula model(gen_copula_data(10, 0.5, 3));
  EXPECT_THROW(model.envelope(Eigen::VectorXd::Constant(1, 14.0), {1}, 1.0, 10.0, 1.05), std::runtime_error);
}

TEST(Copula, BiasedLossExpectation) {
  // E of the V-statistic = L + (k(0) - E k(U, U')) / m
  const GaussianCopula model(gen_copula_data(15, 0.5, 5));
  Eigen::MatrixXd z(15, 2);
  for (Eigen::Index i = 0; i < 15; ++i) { z(i, 0) = model.normal_scores()[2 * i]; z(i, 1) = model.normal_scores()[2 * i + 1]; }
  const double th = 0.8, m = 4;
  const double L = oracle::copula_mmd_loss(z, th, 1.0);
  // U - U' ~ N(0, 2 Sigma), Sigma with eigenvalues 1 +- rho, so E k(U, U') has a closed form
  const double rho = std::tanh(th / 2.0), kmax = 1.0 / (2.0 * std::numbers::pi);
  const double pair = kmax / std::sqrt((1.0 + 2.0 * (1.0 + rho)) * (1.0 + 2.0 * (1.0 - rho)));
  const double expect = L + (kmax - pair) / m;
  Rng rng(6);
  double s1 = 0, s2 = 0;
  const int R = 100000;
  for (int r = 0; r < R; ++r) {
    const auto aux = make_aux_state(model.aux_layout(4), rng);
    const double v = model.loss_estimate(Eigen::VectorXd::Constant(1, th), aux);
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / R, se = std::sqrt((s2 / R - mean * mean) / (R - 1));
  EXPECT_LE(std::abs(mean - expect), 4 * se);
}

TEST(Copula, BInvariance) {
  const GaussianCopula model(gen_copula_data(30, 0.5, 8));
  expect_b_invariance(model, 30.0, 3000.0, Eigen::VectorXd::Constant(1, std::log(3.0)));
}

// ---------------- regression ----------------

TEST(Regression, GeneratorWorkedValuesAndErrors) {
  const auto g = regression_generate(1.5, 2.0, std::exp(-2.0), 0.0);
  EXPECT_NEAR(g.value, 1.5 + 2.0 * 2.0, 1e-14);
  EXPECT_THROW(regression_generate(0.0, 1.0, 0.0, 0.3), std::domain_error);
}

TEST(Regression, PriorGradient) {
  const GaussianRegression model(gen_regression_data(10, 1));
  Eigen::VectorXd th = Eigen::VectorXd::Zero(9), g;
  model.prior_log_density_gradient(th, g);
  EXPECT_NEAR(g[8], -3.0, 1e-15);
  th << 1, -2, 0.5, 0, 0, 3, 1, 1, 0.4;
  model.prior_log_density_gradient(th, g);
  const auto fd = oracle::central_difference([&](const Eigen::VectorXd& t) { return model.log_prior(t); }, th, 1e-5);
  for (Eigen::Index j = 0; j < 9; ++j) EXPECT_NEAR(g[j], fd[j], 1e-7);
}

TEST(Regression, JacobianMatchesDifferences) {
  const auto data = gen_regression_data(5, 2);
  const GaussianRegression model(data);
  Eigen::VectorXd th = regression_true_theta();
  const std::vector<double> v{0.3, 0.8};
  double u, jac[9];
  model.push(th, 2, v, &u, jac);
  for (Eigen::Index j = 0; j < 9; ++j) {
    Eigen::VectorXd a = th, b = th;
    a[j] += 1e-6;
    b[j] -= 1e-6;
    double ua, ub, tmp[9];
    model.push(a, 2, v, &ua, tmp);
    model.push(b, 2, v, &ub, tmp);
    EXPECT_NEAR(jac[j], (ua - ub) / 2e-6, 1e-7);
  }
  EXPECT_NEAR(jac[8], u - model.mean(th, 2), 1e-12);
}

TEST(Regression, EnvelopeConstants) {
  EXPECT_NEAR(std::exp(-0.5) / std::sqrt(2 * std::numbers::pi), 0.2419707245, 1e-9);
  EXPECT_NEAR(2 * std::exp(-1.0) / std::sqrt(2 * std::numbers::pi), 0.2935253, 1e-6);
  for (double delta : {0.0, 0.4, -1.7, 5.0})
    for (double gamma : {0.5, 1.0, 2.0}) {
      double brute = 0.0;
      for (double w = -20; w <= 20; w += 1e-4)
        brute = std::max(brute, std::abs(w) * std::abs(w + delta) * std::exp(-0.5 * w * w / gamma));
      const double f = regression_scale_kernel_sup(delta, gamma);
      EXPECT_GE(f, brute * (1 - 1e-12));
      EXPECT_LE(f, brute * (1 + 1e-6));
    }
}

TEST(Regression, PhiMatchesGenericChainRule) {
  const auto data = gen_regression_data(6, 3);
  const GaussianRegression model(data);
  const Eigen::VectorXd th = regression_true_theta() + Eigen::VectorXd::Constant(9, 0.1);
  const std::size_t b = 4;
  Rng rng(4), replay(4);
  std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
  Eigen::VectorXd phi;
  model.estimate_loss_gradient(th, b, all, rng, phi);
  Eigen::VectorXd generic = Eigen::VectorXd::Zero(9);
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<double> v(2 * b), u(b), jac(b * 9);
    for (double& x : v) x = replay.uniform();
    model.push(th, i, v, u.data(), jac.data());
    const std::vector<double> y{model.response(i)};
    generic += mmd_grad_phi(model.kernel(), y, u, jac, 9);
  }
  generic /= 6.0;
  for (Eigen::Index j = 0; j < 9; ++j) EXPECT_NEAR(phi[j], generic[j], 1e-13);
}

TEST(Regression, GradientUnbiased) {
  const auto data = gen_regression_data(8, 4);
  const GaussianRegression model(data);
  Rng rng(9);
  for (int rep = 0; rep < 3; ++rep) {
    Eigen::VectorXd th = regression_true_theta();
    for (Eigen::Index j = 0; j < 9; ++j) th[j] += 0.3 * rng.normal();
    const auto exact = oracle::central_difference(
        [&](const Eigen::VectorXd& t) { return oracle::regression_mmd_loss(data.X, data.y.col(0), t, 1.0); }, th, 1e-4);
    expect_within_se(phi_average(model, th, 3, 100000, 20 + rep), exact, 4.0);
  }
}

TEST(Regression, EnvelopeDominates) {
  const auto data = gen_regression_data(40, 5);
  const GaussianRegression model(data);
  Rng rng(3);
  for (int rep = 0; rep < 3; ++rep) {
    Eigen::VectorXd th = regression_true_theta();
    for (Eigen::Index j = 0; j < 9; ++j) th[j] += 0.5 * rng.normal();
    expect_envelope_dominates(model, th, 40.0, 2, 30 + rep);
    expect_envelope_dominates(model, th, 40.0, 2, 40 + rep, EnvelopeScope::subsample, 4);
  }
}

TEST(Regression, BInvariance) {
  const auto data = gen_regression_data(20, 6);
  const GaussianRegression model(data);
  expect_b_invariance(model, 20.0, 600.0, regression_true_theta());
}

// ---------------- Poisson ----------------

TEST(Poisson, ClosedFormBoundValueAndValidity) {
  EXPECT_NEAR(poisson_closed_form_bound(1.0, 0.5, 1.0), 1.7891, 1e-4);
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const double lambda = std::exp(2.0 * rng.normal()), beta = 0.1 + rng.uniform();
    const double bound = poisson_closed_form_bound(lambda, beta, 1.0);
    for (long u = 0; u <= 200; ++u)
      EXPECT_LE(std::abs(u - lambda) * std::pow(oracle::poisson_pmf(u, lambda), beta), bound);
  }
}

TEST(Poisson, ExactSupMatchesBruteForce) {
  for (double beta : {0.5, 1.0, 2.0})
    for (auto [lo, hi] : {std::pair{0.01, 0.05}, {0.5, 1.7}, {2.7, 3.0}, {7.0, 20.0}}) {
      double brute = 0.0;
      for (int k = 0; k <= 4000; ++k) {
        const double lambda = lo + (hi - lo) * k / 4000.0;
        for (long u = 0; u <= 200; ++u)
          brute = std::max(brute, std::abs(u - lambda) * std::pow(oracle::poisson_pmf(u, lambda), beta));
      }
      const double s = poisson_weighted_score_sup(lo, hi, beta);
      EXPECT_GE(s, brute * (1 - 1e-12));
      EXPECT_LE(s, brute * (1 + 1e-4));
    }
}

TEST(Poisson, TableBoundsDirectSup) {
  const auto table = PoissonSupTable::shared(0.5);
  Rng rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    const double a = 3.0 * rng.normal(), w = std::abs(rng.normal());
    EXPECT_GE(table->sup_over_log_rates(a, a + w) * (1 + 1e-12), poisson_weighted_score_sup(std::exp(a), std::exp(a + w), 0.5));
  }
}

TEST(Poisson, QuantileMatchesCdf) {
  for (double lambda : {0.3, 4.0, 29.0, 45.0, 400.0})
    for (double p : {1e-6, 0.1, 0.5, 0.9, 0.999999}) {
      const auto u = static_cast<long>(poisson_quantile(lambda, p));
      double cdf = 0.0;
      for (long k = 0; k <= u; ++k) cdf += oracle::poisson_pmf(k, lambda);
      EXPECT_GE(cdf, p - 1e-12) << lambda << " " << p;
      EXPECT_LT(cdf - oracle::poisson_pmf(u, lambda), p + 1e-12) << lambda << " " << p;
    }
}

TEST(Poisson, SimulatorMean) {
  Dataset d;
  d.X = Eigen::MatrixXd::Ones(100000, 1);
  d.y = Eigen::MatrixXd::Zero(100000, 1);
  const PoissonRegression model(d, 0.5);
  Rng rng(5);
  const auto u = model.simulate(Eigen::VectorXd::Zero(1), rng);
  double s = 0.0;
  for (auto v : u) s += static_cast<double>(v);
  EXPECT_LE(std::abs(s / 1e5 - 1.0), 4.0 / std::sqrt(1e5));
}

TEST(Poisson, GradientUnbiased) {
  const auto data = gen_poisson_data(10, 7);
  const PoissonRegression model(data, 0.5);
  Rng rng(3);
  for (int rep = 0; rep < 3; ++rep) {
    Eigen::VectorXd th = poisson_true_theta();
    for (Eigen::Index j = 0; j < 5; ++j) th[j] += 0.3 * rng.normal();
    const auto exact = oracle::central_difference(
        [&](const Eigen::VectorXd& t) { return oracle::poisson_beta_loss(data.X, data.y.col(0), t, 0.5); }, th, 1e-5);
    expect_within_se(phi_average(model, th, 2, 100000, 50 + rep), exact, 4.0);
  }
}

TEST(Poisson, LossEstimateUnbiased) {
  const auto data = gen_poisson_data(10, 8);
  const PoissonRegression model(data, 0.5);
  const Eigen::VectorXd th = poisson_true_theta();
  Rng rng(4);
  double s1 = 0, s2 = 0;
  const int R = 50000;
  for (int r = 0; r < R; ++r) {
    const double v = model.loss_estimate(th, make_aux_state(model.aux_layout(3), rng));
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / R, se = std::sqrt((s2 / R - mean * mean) / (R - 1));
  EXPECT_LE(std::abs(mean - oracle::poisson_beta_loss(data.X, data.y.col(0), th, 0.5)), 4 * se);
}

TEST(Poisson, EnvelopeDominates) {
  const auto data = gen_poisson_data(60, 9);
  const PoissonRegression model(data, 0.5);
  Rng rng(6);
  for (int rep = 0; rep < 3; ++rep) {
    Eigen::VectorXd th = poisson_true_theta();
    for (Eigen::Index j = 0; j < 5; ++j) th[j] += 0.3 * rng.normal();
    expect_envelope_dominates(model, th, 60.0, 2, 60 + rep);
    expect_envelope_dominates(model, th, 60.0, 2, 70 + rep, EnvelopeScope::subsample, 6);
  }
}

TEST(Poisson, RateOverflowIsReported) {
  const auto data = gen_poisson_data(5, 9);
  const PoissonRegression model(data, 0.5);
  Eigen::VectorXd th = Eigen::VectorXd::Zero(5);
  th[0] = 45.0;
  try {
    model.envelope(th, {1, 1, 1, 1, 1}, 1.0, 5.0, 1.05);
    FAIL();
  } catch (const std::overflow_error& e) {
    EXPECT_STREQ(e.what(), "envelope overflow; reduce t_h");
  }
}

TEST(Poisson, BInvariance) {
  const auto data = gen_poisson_data(20, 10);
  const PoissonRegression model(data, 0.5);
  expect_b_invariance(model, 20.0, 1500.0, poisson_true_theta());
}
