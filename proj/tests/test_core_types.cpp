#include <gtest/gtest.h>

#include <sstream>

#include "zzgibbs/rng.hpp"
#include "zzgibbs/trajectory.hpp"

using namespace zzgibbs;

namespace {

// theta: 0 -> 1 -> 0 over [0, 2]
Trajectory tent() {
  Trajectory t(1);
  t.append(0.0, std::vector<double>{0.0}, std::vector<int>{1}, EventKind::initial);
  t.append(1.0, std::vector<double>{1.0}, std::vector<int>{-1}, EventKind::flip);
  t.append(2.0, std::vector<double>{0.0}, std::vector<int>{-1}, EventKind::refresh);
  t.set_total_time(2.0);
  return t;
}

Trajectory random_skeleton(std::uint64_t seed, std::size_t d, std::size_t events, double half_width = 0.0) {
  Rng rng(seed);
  Trajectory t(d);
  std::vector<double> x(d);
  std::vector<int> v(d);
  for (std::size_t j = 0; j < d; ++j) { x[j] = rng.normal(); v[j] = rng.uniform() < 0.5 ? -1 : 1; }
  if (half_width > 0.0) std::fill(x.begin(), x.end(), 0.0);
  double time = 0.0;
  t.append(time, x, v, EventKind::initial);
  for (std::size_t k = 0; k < events; ++k) {
    double dt = -std::log(rng.uniform());
    std::size_t flip = rng.index(d);
    if (half_width > 0.0) {
      // bounded path: turn coordinate `flip` around before it leaves [-w, w]
      dt = std::min(dt, half_width - v[flip] * x[flip]);
      for (std::size_t j = 0; j < d; ++j)
        if (j != flip) dt = std::min(dt, half_width - v[j] * x[j]);
    }
    for (std::size_t j = 0; j < d; ++j) x[j] += v[j] * dt;
    time += dt;
    if (half_width > 0.0)
      for (std::size_t j = 0; j < d; ++j)
        if (v[j] * x[j] >= half_width - 1e-12) flip = j;
    v[flip] *= -1;
    t.append(time, x, v, EventKind::flip);
  }
  t.set_total_time(time + 0.5 * (half_width > 0.0 ? half_width : 1.0));
  return t;
}

}  // namespace

TEST(TimeAverage, TentFirstAndSecondMoment) {
  const auto t = tent();
  EXPECT_NEAR(trajectory_time_average(t, 0, 1, 0.0), 0.5, 1e-15);
  EXPECT_NEAR(trajectory_time_average(t, 0, 2, 0.0), 1.0 / 3.0, 1e-15);
}

TEST(TimeAverage, BurnInCutsMidSegment) {
  const auto t = tent();
  // [0.5, 2]: integral of theta = 0.375 + 0.5 = 0.875 over length 1.5
  EXPECT_NEAR(trajectory_time_average(t, 0, 1, 0.25), 0.875 / 1.5, 1e-14);
}

TEST(TimeAverage, Errors) {
  Trajectory one(1);
  one.append(0.0, std::vector<double>{0.0}, std::vector<int>{1}, EventKind::initial);
  one.set_total_time(1.0);
  EXPECT_THROW(trajectory_time_average(one, 0, 1, 0.0), std::invalid_argument);
  const auto t = tent();
  EXPECT_THROW(trajectory_time_average(t, 0, 1, 1.0), std::invalid_argument);
  EXPECT_THROW(trajectory_time_average(t, 0, 3, 0.0), std::invalid_argument);
}

TEST(Discretize, TentHalfStep) {
  const auto s = trajectory_discretize(tent(), 0.5, 0.0);
  ASSERT_EQ(s.size(), 5u);
  const double expect[] = {0.0, 0.5, 1.0, 0.5, 0.0};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(s[i][0], expect[i], 1e-15);
}

TEST(Discretize, StepEqualToTotalTimeGivesOneSample) {
  const auto t = tent();
  const auto s = trajectory_discretize(t, t.total_time(), default_burnin_fraction);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_NEAR(s[0][0], 0.2, 1e-15);
}

TEST(Discretize, NonPositiveStepFails) {
  EXPECT_THROW(trajectory_discretize(tent(), 0.0), std::invalid_argument);
  EXPECT_THROW(trajectory_discretize(tent(), -1.0), std::invalid_argument);
}

TEST(Validate, AcceptsWellFormedSkeleton) {
  EXPECT_TRUE(validate_trajectory(tent()).ok());
  EXPECT_TRUE(validate_trajectory(random_skeleton(3, 4, 50)).ok());
}

TEST(Validate, FlagsZeroVelocityDecreasingTimesAndBadFlips) {
  Trajectory t(2);
  t.append(0.0, std::vector<double>{0, 0}, std::vector<int>{1, 0}, EventKind::initial);
  EXPECT_FALSE(validate_trajectory(t).ok());

  Trajectory back(1);
  back.append(1.0, std::vector<double>{0}, std::vector<int>{1}, EventKind::initial);
  back.append(0.5, std::vector<double>{-0.5}, std::vector<int>{-1}, EventKind::flip);
  back.set_total_time(2.0);
  EXPECT_FALSE(validate_trajectory(back).ok());

  Trajectory two(2);
  two.append(0.0, std::vector<double>{0, 0}, std::vector<int>{1, 1}, EventKind::initial);
  two.append(1.0, std::vector<double>{1, 1}, std::vector<int>{-1, -1}, EventKind::flip);
  two.set_total_time(2.0);
  EXPECT_FALSE(validate_trajectory(two).ok());
}

TEST(Invariant, TimeAverageMatchesFineDiscretisation) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto t = random_skeleton(seed, 1, 60, 0.5);
    const auto s = trajectory_discretize(t, t.total_time() * 1e-6, 0.1);
    double m = 0.0;
    for (const auto& x : s) m += x[0];
    m /= static_cast<double>(s.size());
    EXPECT_NEAR(trajectory_time_average(t, 0, 1, 0.1), m, 1e-6);
    EXPECT_TRUE(validate_trajectory(t).ok());
  }
}

TEST(Invariant, VarianceIsNonNegative) {
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    const auto t = random_skeleton(seed, 2, 10);
    for (std::size_t j = 0; j < 2; ++j) {
      const double m = trajectory_time_average(t, j, 1);
      EXPECT_GE(trajectory_time_average(t, j, 2) - m * m, -1e-12);
    }
  }
}

TEST(Moments, AgreeWithScalarAverages) {
  const auto t = random_skeleton(5, 3, 40);
  const auto mom = trajectory_moments(t, 0.2);
  for (std::size_t j = 0; j < 3; ++j) {
    const double m = trajectory_time_average(t, j, 1, 0.2);
    EXPECT_NEAR(mom.mean[static_cast<Eigen::Index>(j)], m, 1e-12);
    EXPECT_NEAR(mom.covariance(j, j), trajectory_time_average(t, j, 2, 0.2) - m * m, 1e-10);
  }
}

TEST(BatchMeans, MeanMatchesTimeAverage) {
  const auto t = random_skeleton(9, 2, 500);
  for (std::size_t j = 0; j < 2; ++j) {
    const auto bm = trajectory_batch_means(t, j, 20, 0.1);
    EXPECT_NEAR(bm.mean, trajectory_time_average(t, j, 1, 0.1), 1e-10);
    EXPECT_GT(bm.se, 0.0);
  }
}

TEST(SkeletonCsv, RoundTripsExactly) {
  const auto t = random_skeleton(4, 2, 20);
  std::stringstream ss;
  write_skeleton_csv(t, ss);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  EXPECT_EQ(header, "k,t,event,theta_1,theta_2,nu_1,nu_2");
  const auto back = read_skeleton_csv(ss, t.total_time());
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    EXPECT_EQ(back.time(k), t.time(k));
    EXPECT_EQ(back.kind(k), t.kind(k));
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(back.position(k, j), t.position(k, j));
      EXPECT_EQ(back.velocity(k, j), t.velocity(k, j));
    }
  }
}
