#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace hetpanel;

TEST(PooledAR1, ConstantActorsAreDegenerate) {
  Matrix y(3, 6);
  for (Index i = 0; i < 3; ++i) y.row(i).setConstant(static_cast<double>(i) + 0.5);
  try {
    (void)fit_pooled_ar1_fe(y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_regression);
  }
  const auto fb = fit_pooled_ar1_fe_or_mean(y);
  EXPECT_TRUE(fb.degenerate);
  const Vector f = forecast_pooled(fb, Vector::Constant(3, 9.0));
  for (Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(f(i), static_cast<double>(i) + 0.5);
}

TEST(PooledAR1, RecoversSimulatedRho) {
  std::mt19937_64 rng(11);
  const auto fit = fit_pooled_ar1_fe(hptest::simulate_ar1(50, 200, 0.5, rng));
  EXPECT_GE(fit.rho, 0.45);
  EXPECT_LE(fit.rho, 0.55);
}

TEST(PooledAR1, SingleActorMatchesLeastSquares) {
  std::mt19937_64 rng(12);
  const Matrix y = hptest::simulate_ar1(1, 40, 0.3, rng);
  const double ybar = y.mean();
  const Index n = y.cols() - 1;
  Matrix x(n, 1);
  Vector z(n);
  for (Index t = 0; t < n; ++t) {
    x(t, 0) = y(0, t) - ybar;
    z(t) = y(0, t + 1) - ybar;
  }
  const double oracle = x.householderQr().solve(z)(0);
  EXPECT_NEAR(fit_pooled_ar1_fe(y).rho, oracle, 1e-12);
}

TEST(PooledAR1, ForecastIdentities) {
  PooledAR1Fit fit;
  fit.actor_means = (Vector(3) << 1.0, -2.0, 0.25).finished();
  const Vector last = (Vector(3) << 4.0, 0.0, -1.0).finished();
  for (double rho : {-0.7, 0.0, 0.4, 0.99}) {
    fit.rho = rho;
    EXPECT_EQ(forecast_pooled(fit, fit.actor_means), fit.actor_means);
  }
  fit.rho = 0.0;
  EXPECT_EQ(forecast_pooled(fit, last), fit.actor_means);
  fit.rho = 1.0;
  EXPECT_EQ(forecast_pooled(fit, last), last);
  try {
    (void)forecast_pooled(fit, Vector::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::alignment_error);
  }
}

TEST(PooledAR1, RhoIsClipped) {
  Matrix y(2, 30);
  for (Index t = 0; t < 30; ++t) {
    y(0, t) = static_cast<double>(t);
    y(1, t) = -2.0 * static_cast<double>(t);
  }
  EXPECT_LE(std::abs(fit_pooled_ar1_fe(y).rho), kRhoClip);
}

TEST(BlockAR1, OneBlockEqualsPooledBitwise) {
  std::mt19937_64 rng(13);
  const auto panel = hptest::make_panel(hptest::simulate_ar1(12, 24, 0.6, rng));
  const auto pooled = fit_pooled_ar1_fe(panel);
  const auto block = fit_block_ar1_fe(panel, single_block_partition(panel, "all", false));
  const auto& b = block.per_block.at("all");
  EXPECT_EQ(b.rho, pooled.rho);
  EXPECT_EQ(b.actor_means, pooled.actor_means);
}

TEST(BlockAR1, RecoversTwoRhos) {
  std::mt19937_64 rng(14);
  Matrix y(80, 200);
  y.topRows(40) = hptest::simulate_ar1(40, 200, 0.9, rng);
  y.bottomRows(40) = hptest::simulate_ar1(40, 200, 0.2, rng);
  std::map<std::string, std::vector<Index>> rows;
  for (Index i = 0; i < 80; ++i) rows[i < 40 ? "hi" : "lo"].push_back(i);
  const auto fit = fit_block_ar1_fe(y, rows);
  EXPECT_NEAR(fit.per_block.at("hi").rho, 0.9, 0.08);
  EXPECT_NEAR(fit.per_block.at("lo").rho, 0.2, 0.08);
}

TEST(BlockAR1, ConstantBlockFallsBack) {
  std::mt19937_64 rng(15);
  Matrix y(6, 12);
  y.topRows(3) = hptest::simulate_ar1(3, 12, 0.5, rng);
  y.bottomRows(3).setConstant(2.0);
  const auto fit = fit_block_ar1_fe(y, {{"x", {0, 1, 2}}, {"c", {3, 4, 5}}});
  EXPECT_TRUE(fit.per_block.at("c").degenerate);
  EXPECT_EQ(fit.per_block.at("c").rho, 0.0);
  const Vector f = forecast_block(fit, Vector::Constant(6, -5.0));
  for (Index i = 3; i < 6; ++i) EXPECT_DOUBLE_EQ(f(i), 2.0);
}

TEST(PooledAR1, FutureQuartersDoNotLeakIntoFit) {
  std::mt19937_64 rng(16);
  const Matrix y = hptest::simulate_ar1(5, 30, 0.5, rng);
  const auto a = fit_pooled_ar1_fe(Matrix(y.leftCols(20)));
  const auto b = fit_pooled_ar1_fe(Matrix(y.leftCols(30).leftCols(20)));
  EXPECT_EQ(a.rho, b.rho);
  EXPECT_EQ(a.actor_means, b.actor_means);
}
