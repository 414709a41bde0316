#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "aggfolio/loss.hpp"
#include "oracles.hpp"

using namespace aggfolio;

TEST(SquaredLoss, Examples) {
  EXPECT_EQ(squared_loss(0.3, 0.3), 0.0);
  EXPECT_EQ(squared_loss(1.0, 0.0), 1.0);
  EXPECT_NEAR(squared_loss(0.07, 0.02), 0.0025, 1e-17);
}

TEST(SquaredLoss, SymmetricAndZeroOnlyAtEquality) {
  oracle::Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto v = oracle::normal_vector(rng, 2);
    EXPECT_EQ(squared_loss(v(0), v(1)), squared_loss(v(1), v(0)));
    EXPECT_GT(squared_loss(v(0), v(1)), 0.0);
  }
}

TEST(SquaredLoss, RejectsNonFinite) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(squared_loss(nan, 0.0), Error);
  EXPECT_THROW(squared_loss(0.0, inf), Error);
  try {
    squared_loss(nan, 0.0);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
  }
}

TEST(HuberLoss, Examples) {
  EXPECT_EQ(huber_loss(0.5, 0.0, 1.0), 0.25);
  EXPECT_EQ(huber_loss(2.0, 0.0, 1.0), 3.0);
  EXPECT_EQ(huber_loss(1.0, 0.0, 1.0), 1.0);
  // 2 * 1 * 2 - 1 agrees with the quadratic branch at the boundary
  EXPECT_EQ(2.0 * 1.0 * 1.0 - 1.0, 1.0 * 1.0);
}

TEST(HuberLoss, RejectsNonPositiveThreshold) {
  EXPECT_THROW(huber_loss(1.0, 0.0, 0.0), Error);
  EXPECT_THROW(huber_loss(1.0, 0.0, -1.0), Error);
  EXPECT_THROW(huber_gradient(1.0, 0.0), Error);
  EXPECT_THROW(LossKind::huber(0.0), Error);
  try {
    LossKind::huber(-0.5);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parameter);
  }
}

TEST(HuberLoss, EqualsSquaredInsideThreshold) {
  oracle::Rng rng(2);
  for (double xi : {0.01, 0.5, 0.999, 1.0, 3.0}) {
    for (int i = 0; i < 2000; ++i) {
      const double y = std::uniform_real_distribution<double>(-5, 5)(rng);
      const double yhat = y - std::uniform_real_distribution<double>(-xi, xi)(rng);
      if (std::abs(y - yhat) > xi) continue;
      EXPECT_EQ(huber_loss(y, yhat, xi), squared_loss(y, yhat)) << y << " " << yhat << " " << xi;
    }
  }
}

TEST(HuberLoss, ContinuousAndMonotoneOnDenseGrid) {
  for (double xi : {0.2, 0.999, 2.0}) {
    double previous = -1;
    const int n = 200000;
    for (int i = 0; i <= n; ++i) {
      const double x = 5.0 * i / n;
      const double value = huber_loss(x, 0.0, xi);
      EXPECT_GE(value, previous);
      // Lipschitz with constant 2 xi, so neighbouring grid values are close
      if (i > 0) EXPECT_LE(value - previous, 2 * xi * (5.0 / n) + 1e-12);
      EXPECT_EQ(value, huber_loss(-x, 0.0, xi));
      previous = value;
    }
  }
}

TEST(HuberGradient, Examples) {
  EXPECT_DOUBLE_EQ(huber_gradient(0.1, 1.0), 0.2);
  EXPECT_EQ(huber_gradient(3.0, 1.0), 2.0);
  EXPECT_EQ(huber_gradient(-3.0, 1.0), -2.0);
}

TEST(HuberGradient, MatchesCentralDifferences) {
  oracle::Rng rng(3);
  const double h = 1e-6;
  for (double xi : {0.3, 0.999, 2.5}) {
    for (int i = 0; i < 5000; ++i) {
      const double x = std::uniform_real_distribution<double>(-4 * xi, 4 * xi)(rng);
      if (std::abs(std::abs(x) - xi) < 1e-4) continue;
      const double fd = (huber(x + h, xi) - huber(x - h, xi)) / (2 * h);
      const double g = huber_gradient(x, xi);
      EXPECT_LE(std::abs(fd - g), 1e-6 * std::max(1.0, std::abs(g))) << x << " " << xi;
    }
  }
}

TEST(LossGradient, IsDerivativeWithRespectToForecast) {
  oracle::Rng rng(4);
  const double h = 1e-6;
  for (const LossKind& loss : {LossKind::squared(), LossKind::huber(0.5)}) {
    for (int i = 0; i < 1000; ++i) {
      const auto v = oracle::normal_vector(rng, 2);
      const double fd = (evaluate_loss(loss, v(0), v(1) + h) - evaluate_loss(loss, v(0), v(1) - h)) / (2 * h);
      EXPECT_NEAR(loss_gradient(loss, v(0), v(1)), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(PredictiveR2, Examples) {
  EXPECT_EQ(predictive_r2(Eigen::Vector2d(1, 2), Eigen::Vector2d(1, 2)), 1.0);
  EXPECT_EQ(predictive_r2(Eigen::Vector2d(1, 2), Eigen::Vector2d(0, 0)), 0.0);
  EXPECT_DOUBLE_EQ(predictive_r2(Eigen::Vector2d(1, 2), Eigen::Vector2d(2, 2)), 0.8);
}

TEST(PredictiveR2, CanBeNegativeAndRejectsDegenerateInputs) {
  EXPECT_LT(predictive_r2(Eigen::Vector2d(1, 2), Eigen::Vector2d(-3, 5)), 0.0);
  EXPECT_THROW(predictive_r2(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)), Error);
  EXPECT_THROW(predictive_r2(Eigen::VectorXd(Eigen::Vector2d(1, 2)), Eigen::VectorXd(Eigen::Vector3d(1, 2, 3))), Error);
}

TEST(PredictiveR2, InvariantToPairOrder) {
  oracle::Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = oracle::uniform_int(rng, 2, 60);
    const auto y = oracle::normal_vector(rng, n);
    const auto yhat = oracle::normal_vector(rng, n);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Eigen::VectorXd py(n), ph(n);
    for (int i = 0; i < n; ++i) {
      py(i) = y(order[static_cast<std::size_t>(i)]);
      ph(i) = yhat(order[static_cast<std::size_t>(i)]);
    }
    EXPECT_NEAR(predictive_r2(y, yhat), predictive_r2(py, ph), 1e-12);
  }
}
