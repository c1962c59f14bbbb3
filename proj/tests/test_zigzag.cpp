#include <gtest/gtest.h>

#include <sstream>

#include "zzgibbs/harness/data.hpp"
#include "zzgibbs/models/poisson_regression.hpp"
#include "zzgibbs/trajectory.hpp"
#include "zzgibbs/zigzag.hpp"

using namespace zzgibbs;

namespace {

// Standard normal in d dimensions written as a loss with an exact gradient.
GibbsTarget quadratic_target(std::size_t d) {
  return GibbsTarget(
      d, 1.0, [d](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)); },
      [](const Eigen::VectorXd& th, std::span<const GibbsTarget::PseudoSet>, std::span<const std::size_t>) {
        return Eigen::VectorXd(th);
      },
      [](const Eigen::VectorXd&, Rng&) { return GibbsTarget::PseudoSet{}; }, 1);
}

auto quadratic_envelope(double eta) {
  return [eta](const Eigen::VectorXd& th, const std::vector<int>& nu, double horizon) {
    RateEnvelope env;
    env.horizon = horizon;
    for (std::size_t j = 0; j < nu.size(); ++j) {
      env.intercept.push_back(eta * std::max(0.0, nu[j] * th[static_cast<Eigen::Index>(j)]));
      env.slope.push_back(eta);
    }
    return env;
  };
}

ZigZagConfig quadratic_config(std::size_t d, double T, std::uint64_t seed) {
  ZigZagConfig cfg;
  cfg.total_time = T;
  cfg.seed = seed;
  cfg.initial_position = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  cfg.b = 1;
  return cfg;
}

std::string skeleton_text(const Trajectory& t) {
  std::ostringstream os;
  write_skeleton_csv(t, os);
  return os.str();
}

}  // namespace

TEST(FirstArrival, WorkedValues) {
  EXPECT_NEAR(affine_arrival_time(2.0, 0.0, 1.0), 0.5, 1e-15);
  EXPECT_NEAR(affine_arrival_time(1.0, 2.0, 2.0), 1.0, 1e-15);
  EXPECT_TRUE(std::isinf(affine_arrival_time(0.0, 0.0, 1.0)));
  // solves the integrated-rate equation
  for (double a : {0.0, 0.3, 4.0})
    for (double s : {0.0, 1e-9, 2.5}) {
      if (a == 0.0 && s == 0.0) continue;
      const double tau = affine_arrival_time(a, s, 0.7);
      EXPECT_NEAR(a * tau + 0.5 * s * tau * tau, 0.7, 1e-12);
    }
  try {
    affine_arrival_time(-1.0, 0.0, 1.0);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "invalid envelope");
  }
  EXPECT_THROW(affine_arrival_time(1.0, -1.0, 1.0), std::invalid_argument);
}

TEST(ZigZag, StandardNormalMoments) {
  const auto target = quadratic_target(1);
  const auto traj = zigzag_run(target, quadratic_envelope(1.05), quadratic_config(1, 5e4, 42));
  EXPECT_TRUE(validate_trajectory(traj).ok());
  const double m = trajectory_time_average(traj, 0, 1);
  const double v = trajectory_time_average(traj, 0, 2) - m * m;
  EXPECT_LT(std::abs(m), 0.05);
  EXPECT_LT(std::abs(v - 1.0), 0.05);
  EXPECT_EQ(traj.diagnostics().bound_violations, 0u);
}

TEST(ZigZag, ConvergesAsTimeGrows) {
  const auto target = quadratic_target(1);
  const double var_tol[] = {0.3, 0.1, 0.05};
  int idx = 0;
  for (double T : {1e3, 1e4, 5e4}) {
    const auto traj = zigzag_run(target, quadratic_envelope(1.05), quadratic_config(1, T, 7));
    const auto bm = trajectory_batch_means(traj, 0, 25);
    EXPECT_LT(std::abs(bm.mean), 5.0 * bm.se) << "T=" << T;
    const double m = trajectory_time_average(traj, 0, 1);
    EXPECT_LT(std::abs(trajectory_time_average(traj, 0, 2) - m * m - 1.0), var_tol[idx++]) << "T=" << T;
  }
}

TEST(ZigZag, IndependentCoordinatesInTwoDimensions) {
  const auto target = quadratic_target(2);
  const auto traj = zigzag_run(target, quadratic_envelope(1.05), quadratic_config(2, 5e4, 9));
  const auto mom = trajectory_moments(traj);
  EXPECT_LT(std::abs(mom.covariance(0, 1) + mom.mean[0] * mom.mean[1]), 0.05);
  EXPECT_LT(std::abs(mom.covariance(0, 0) - 1.0), 0.05);
  EXPECT_LT(std::abs(mom.covariance(1, 1) - 1.0), 0.05);
}

TEST(ZigZag, BitReproducible) {
  const auto target = quadratic_target(2);
  const auto a = zigzag_run(target, quadratic_envelope(1.05), quadratic_config(2, 500, 3));
  const auto b = zigzag_run(target, quadratic_envelope(1.05), quadratic_config(2, 500, 3));
  const auto c = zigzag_run(target, quadratic_envelope(1.05), quadratic_config(2, 500, 4));
  EXPECT_EQ(skeleton_text(a), skeleton_text(b));
  EXPECT_NE(skeleton_text(a), skeleton_text(c));
}

TEST(ZigZag, HorizonRefreshesKeepTheTarget) {
  const auto target = quadratic_target(1);
  auto cfg = quadratic_config(1, 2e4, 5);
  cfg.horizon = 0.05;
  const auto traj = zigzag_run(target, quadratic_envelope(1.05), cfg);
  EXPECT_GT(traj.diagnostics().refreshes, 1000u);
  EXPECT_TRUE(validate_trajectory(traj).ok());
  const double m = trajectory_time_average(traj, 0, 1);
  EXPECT_LT(std::abs(trajectory_time_average(traj, 0, 2) - m * m - 1.0), 0.08);
}

TEST(ZigZag, StrictModeRaisesOnViolation) {
  const auto target = quadratic_target(1);
  auto cfg = quadratic_config(1, 100, 1);
  try {
    zigzag_run(target, quadratic_envelope(0.5), cfg);
    FAIL();
  } catch (const EnvelopeViolation& e) {
    EXPECT_EQ(std::string(e.what()).rfind("envelope violated at (", 0), 0u);
    EXPECT_GT(e.thinning_ratio, 1.0);
  }
  cfg.strict_thinning = false;
  const auto traj = zigzag_run(target, quadratic_envelope(0.5), cfg);
  EXPECT_GT(traj.diagnostics().bound_violations, 0u);
}

TEST(ZigZag, RejectedProposalsCanBeDropped) {
  const auto target = quadratic_target(1);
  auto cfg = quadratic_config(1, 2000, 8);
  const auto full = zigzag_run(target, quadratic_envelope(2.0), cfg);
  cfg.store_rejected = false;
  const auto lean = zigzag_run(target, quadratic_envelope(2.0), cfg);
  EXPECT_LT(lean.size(), full.size());
  EXPECT_EQ(lean.diagnostics().proposals, full.diagnostics().proposals);
  EXPECT_NEAR(trajectory_time_average(lean, 0, 2), trajectory_time_average(full, 0, 2), 1e-12);
}

TEST(ZigZag, SimulatorCallsCountedPerProposal) {
  const auto data = gen_poisson_data(40, 3);
  const PoissonRegression model(data, 0.5);
  const ModelTarget target(model, 40.0, 3);
  ZigZagConfig cfg;
  cfg.total_time = 3.0;
  cfg.initial_position = poisson_true_theta();
  cfg.b = 3;
  const auto traj = zigzag_run(target, ModelEnvelope<PoissonRegression>{&model, 40.0, 1.05}, cfg);
  const auto& dg = traj.diagnostics();
  EXPECT_EQ(dg.simulator_calls, 3 * dg.proposals);
  EXPECT_EQ(dg.pseudo_observations, 3 * 40 * dg.proposals);
}

TEST(ZigZagSubsampled, FullBatchReproducesPlainRun) {
  const auto data = gen_poisson_data(60, 4);
  const PoissonRegression model(data, 0.5);
  const ModelTarget target(model, 60.0, 2);
  const ModelEnvelope<PoissonRegression> env{&model, 60.0, 1.05};
  ZigZagConfig cfg;
  cfg.total_time = 20.0;
  cfg.initial_position = poisson_true_theta();
  cfg.b = 2;
  cfg.seed = 17;
  const auto a = zigzag_run(target, env, cfg);
  const auto b = zigzag_run_subsampled(target, env, cfg, 60);
  EXPECT_EQ(skeleton_text(a), skeleton_text(b));
  EXPECT_THROW(zigzag_run_subsampled(target, env, cfg, 61), std::invalid_argument);
}
