#include <gtest/gtest.h>

#include <cmath>

#include "dwgf/random.hpp"
#include "dwgf/schedule.hpp"
#include "test_util.hpp"

using dwgf::Schedule;

TEST(Schedule, IdentityKernelAtZero) {
  const Schedule sched;
  const auto [alpha, sigma] = sched.alpha_sigma(0);
  EXPECT_EQ(alpha, 1.0);
  EXPECT_EQ(sigma, 0.0);
}

TEST(Schedule, TerminalTime) {
  const Schedule sched(999, 0.1, 20.0);
  // B(1) = 0.1 + 19.9 / 2 = 10.05
  const auto [alpha, sigma] = sched.alpha_sigma(999);
  EXPECT_NEAR(alpha, std::exp(-5.025), 1e-15);
  EXPECT_NEAR(alpha, 6.57e-3, 1e-5);
  EXPECT_NEAR(sigma, std::sqrt(1.0 - std::exp(-10.05)), 1e-15);
}

TEST(Schedule, VariancePreservingOnGrid) {
  const Schedule sched;
  double prev_alpha = 2.0, prev_sigma = -1.0;
  for (int s = 0; s <= sched.T(); ++s) {
    const auto [alpha, sigma] = sched.alpha_sigma(s);
    EXPECT_LT(std::abs(alpha * alpha + sigma * sigma - 1.0), 1e-12) << s;
    EXPECT_LT(alpha, prev_alpha);
    EXPECT_GT(sigma, prev_sigma);
    prev_alpha = alpha;
    prev_sigma = sigma;
  }
}

TEST(Schedule, OutOfRangeTime) {
  const Schedule sched(10, 0.1, 20.0);
  EXPECT_THROW(sched.alpha_sigma(-1), dwgf::DomainError);
  EXPECT_THROW(sched.alpha_sigma(11), dwgf::DomainError);
  EXPECT_THROW(sched.weight(11, 0.5), dwgf::DomainError);
}

TEST(Schedule, InvalidParameters) {
  EXPECT_THROW(Schedule(0, 0.1, 20.0), dwgf::ConfigError);
  EXPECT_THROW(Schedule(10, -0.1, 20.0), dwgf::ConfigError);
  EXPECT_THROW(Schedule(10, 0.1, 0.0), dwgf::ConfigError);
}

TEST(Schedule, Diffuse) {
  const Schedule sched;
  const Eigen::Vector3d z0(1.0, -2.0, 0.5);
  const Eigen::Vector3d eps(0.3, 0.1, -0.7);
  EXPECT_EQ(sched.diffuse(z0, 0, eps), z0);

  const auto [alpha, sigma] = sched.alpha_sigma(400);
  const Eigen::Vector3d e1 = Eigen::Vector3d::UnitX();
  EXPECT_TRUE(sched.diffuse(Eigen::Vector3d::Zero(), 400, e1)
                  .isApprox(sigma * e1));
  EXPECT_EQ(sched.diffuse(z0, 400, Eigen::Vector3d::Zero()), alpha * z0);

  const auto s08 = dwgf::testing::alpha08_schedule();
  const Eigen::VectorXd out =
      s08.diffuse(Eigen::Vector2d(1.0, 1.0), 1, Eigen::Vector2d(1.0, -1.0));
  EXPECT_NEAR(out[0], 1.4, 1e-12);
  EXPECT_NEAR(out[1], 0.2, 1e-12);

  EXPECT_THROW(sched.diffuse(z0, 1, Eigen::Vector2d::Zero()), dwgf::ShapeError);
}

TEST(Schedule, Weight) {
  const Schedule sched;
  EXPECT_EQ(sched.weight(0, 0.5), 0.0);
  EXPECT_NEAR(dwgf::testing::alpha08_schedule().weight(1, 0.5), 0.225, 1e-12);
  EXPECT_THROW(sched.weight(3, 0.0), dwgf::ConfigError);
  EXPECT_THROW(sched.weight(3, 1.0), dwgf::ConfigError);

  double prev = -1.0;
  for (int s = 0; s <= sched.T(); ++s) {
    const double w = sched.weight(s, 0.5);
    EXPECT_TRUE(std::isfinite(w));
    EXPECT_GE(w, prev) << s;
    prev = w;
  }
}

TEST(Schedule, DiffuseVarianceMatchesKernel) {
  const Schedule sched;
  dwgf::Rng rng(7);
  const Eigen::Vector2d z0(1.5, -0.5);
  const int s = 300;
  const auto [alpha, sigma] = sched.alpha_sigma(s);
  const int n = 100000;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sum2 = Eigen::Vector2d::Zero();
  for (int k = 0; k < n; ++k) {
    const Eigen::Vector2d zs =
        sched.diffuse(z0, s, dwgf::standard_normal(rng, 2));
    sum += zs;
    sum2 += zs.cwiseProduct(zs);
  }
  const Eigen::Vector2d mean = sum / n;
  const Eigen::Vector2d var =
      (sum2 - n * mean.cwiseProduct(mean)) / static_cast<double>(n - 1);
  // Standard error of a Gaussian sample variance: sigma^2 sqrt(2 / (n - 1)).
  const double se = sigma * sigma * std::sqrt(2.0 / (n - 1));
  for (int k = 0; k < 2; ++k) {
    EXPECT_LT(std::abs(var[k] - sigma * sigma), 3.0 * se);
    EXPECT_LT(std::abs(mean[k] - alpha * z0[k]), 3.0 * sigma / std::sqrt(n));
  }
}
