#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace hetpanel;
using hptest::max_abs;

namespace {

struct Fixture {
  Panel panel;
  BlockPartition partition;
  std::map<std::string, std::vector<Index>> rows;
};

Fixture heterogeneous(std::uint64_t seed, Index n = 20, Index t = 32) {
  std::mt19937_64 rng(seed);
  Matrix y = hptest::simulate_ar1(n, t, 0.6, rng);
  // a shared factor on the first block
  Vector f = hptest::gaussian(1, t, rng).row(0).transpose();
  for (Index s = 1; s < t; ++s) f(s) += 0.8 * f(s - 1);
  for (Index i = 0; i < n / 2; ++i) y.row(i) += 0.7 * f.transpose();
  Fixture fx;
  fx.panel = hptest::make_panel(y);
  std::vector<std::string> a, b;
  for (Index i = 0; i < n / 2; ++i) a.push_back("a" + std::to_string(i));
  for (Index i = n / 2; i < n / 2 + 5; ++i) b.push_back("a" + std::to_string(i));
  fx.partition = partition_from_blocks(fx.panel, {{"A", a}, {"B", b}});
  fx.rows = block_rows(fx.panel, fx.partition);
  return fx;
}

ArchitectureSpec spec_of(ArchKind kind, const BlockPartition& p) {
  ArchitectureSpec s;
  s.kind = kind;
  s.partition = p;
  return s;
}

Vector forecast(ArchKind kind, const Fixture& fx, const Matrix& train) {
  const auto fit = fit_architecture(spec_of(kind, fx.partition), train, fx.rows);
  const Index t = train.cols();
  return forecast_architecture(fit, train.col(t - 1), train.col(t - 2));
}

}  // namespace

TEST(LocalRankRule, TableValues) {
  EXPECT_EQ(local_rank_rule(23), 4);
  EXPECT_EQ(local_rank_rule(11), 2);
  EXPECT_EQ(local_rank_rule(25), 4);
  EXPECT_EQ(local_rank_rule(5), 2);
  EXPECT_EQ(local_rank_rule(15), 3);
}

TEST(Architecture, ParseNames) {
  EXPECT_EQ(parse_arch("ba_m2"), ArchKind::BA_M2);
  EXPECT_EQ(parse_arch("M2"), ArchKind::M2);
  EXPECT_EQ(parse_arch("ens"), ArchKind::ENS);
  EXPECT_THROW((void)parse_arch("m3"), Error);
}

TEST(Architecture, G0RecoveryIsBitExact) {
  const auto fx = heterogeneous(41);
  const Matrix& y = fx.panel.values;
  auto m2 = fit_architecture(spec_of(ArchKind::M2, fx.partition), y, fx.rows);
  const auto g0 = fit_architecture(spec_of(ArchKind::G0, fx.partition), y, fx.rows);
  zero_stage2(m2);
  const Index t = y.cols();
  const Vector a = forecast_architecture(m2, y.col(t - 1), y.col(t - 2));
  const Vector b = forecast_architecture(g0, y.col(t - 1), y.col(t - 2));
  EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(Architecture, G0EqualsPooledForecast) {
  const auto fx = heterogeneous(42);
  const Matrix& y = fx.panel.values;
  const Vector g0 = forecast(ArchKind::G0, fx, y);
  const Vector pooled = forecast_pooled(fit_pooled_ar1_fe(y), y.col(y.cols() - 1));
  EXPECT_TRUE((g0.array() == pooled.array()).all());
}

TEST(Architecture, EmptyLocalSetM2EqualsG1) {
  auto fx = heterogeneous(43);
  fx.partition.local_blocks.clear();
  const Vector m2 = forecast(ArchKind::M2, fx, fx.panel.values);
  const Vector g1 = forecast(ArchKind::G1, fx, fx.panel.values);
  EXPECT_TRUE((m2.array() == g1.array()).all());
}

TEST(Architecture, OneBlockBaEqualsG0) {
  auto fx = heterogeneous(44);
  fx.partition = single_block_partition(fx.panel, "all", false);
  fx.rows = block_rows(fx.panel, fx.partition);
  const Vector ba = forecast(ArchKind::BA, fx, fx.panel.values);
  const Vector g0 = forecast(ArchKind::G0, fx, fx.panel.values);
  EXPECT_TRUE((ba.array() == g0.array()).all());
}

TEST(Architecture, EnsembleIsMeanOfG1AndBa) {
  const auto fx = heterogeneous(45);
  const Vector ens = forecast(ArchKind::ENS, fx, fx.panel.values);
  const Vector g1 = forecast(ArchKind::G1, fx, fx.panel.values);
  const Vector ba = forecast(ArchKind::BA, fx, fx.panel.values);
  EXPECT_LT(max_abs(ens - 0.5 * (g1 + ba)), 1e-12);
}

TEST(Architecture, ZeroLocalResidualsM2MatchesS1) {
  auto fx = heterogeneous(46);
  // block A actors follow the pooled AR(1) map exactly: constant at their mean
  Matrix y = fx.panel.values;
  for (Index i = 0; i < 10; ++i) y.row(i).setConstant(0.1 * static_cast<double>(i));
  const Vector m2 = forecast(ArchKind::M2, fx, y);
  const Vector s1 = forecast(ArchKind::S1, fx, y);
  for (Index i = 0; i < 10; ++i) EXPECT_NEAR(m2(i), s1(i), 1e-12);
}

TEST(Architecture, M2MatchesHandAssembledMixture) {
  std::mt19937_64 rng(47);
  const Matrix y = hptest::simulate_ar1(12, 30, 0.5, rng);
  const auto panel = hptest::make_panel(y);
  const auto part = partition_from_blocks(panel, {{"L", {"a1", "a3", "a5", "a7", "a9", "a11"}}});
  const auto rows = block_rows(panel, part);
  const auto fit = fit_architecture(spec_of(ArchKind::M2, part), y, rows);
  const Vector got = forecast_architecture(fit, y.col(29), y.col(28));

  const auto pooled = fit_pooled_ar1_fe(y);
  const Vector means = pooled.actor_means;
  Matrix resid(12, 29);
  for (Index t = 1; t < 30; ++t) resid.col(t - 1) = y.col(t) - means - pooled.rho * (y.col(t - 1) - means);
  const Vector r_last = y.col(29) - means - pooled.rho * (y.col(28) - means);
  const auto global = fit_residual_model(resid, EngineOptions{});
  const std::vector<Index> local_rows{1, 3, 5, 7, 9, 11};
  EngineOptions lo;
  lo.rank = 2;
  const auto local = fit_residual_model(select_rows(resid, local_rows), lo);
  Vector want = means + pooled.rho * (y.col(29) - means);
  const Vector g = forecast_residual(global, r_last);
  const Vector l = forecast_residual(local, select_rows(r_last, local_rows));
  for (Index i = 0; i < 12; ++i) {
    if (i % 2 == 0) want(i) += g(i);
  }
  for (std::size_t k = 0; k < local_rows.size(); ++k) want(local_rows[k]) += l(static_cast<Index>(k));
  EXPECT_LT(max_abs(got - want), 1e-12);
}

TEST(Architecture, LocalRoutingIsBlockDiagonal) {
  const auto fx = heterogeneous(48);
  const auto spec = spec_of(ArchKind::M2, fx.partition);
  const Matrix r1 = stage1_residuals(actor_params(fit_pooled_ar1_fe(fx.panel.values)), fx.panel.values);
  Matrix r2 = r1;
  std::mt19937_64 rng(49);
  r2.bottomRows(10) += hptest::gaussian(10, r1.cols(), rng);
  std::vector<std::string> w;
  const auto l1 = detail::fit_local(r1, fx.rows.at("A"), "A", spec, false, w);
  const auto l2 = detail::fit_local(r2, fx.rows.at("A"), "A", spec, false, w);
  const Vector last = select_rows(Vector(r1.col(r1.cols() - 1)), fx.rows.at("A"));
  EXPECT_TRUE((forecast_residual(l1.model, last).array() == forecast_residual(l2.model, last).array()).all());
}

TEST(Architecture, UnderdeterminedLocalBlockWarnsAndClamps) {
  std::mt19937_64 rng(50);
  const Matrix y = hptest::simulate_ar1(30, 8, 0.5, rng);
  const auto panel = hptest::make_panel(y);
  std::vector<std::string> ids;
  for (Index i = 0; i < 25; ++i) ids.push_back("a" + std::to_string(i));
  const auto part = partition_from_blocks(panel, {{"big", ids}});
  const auto fit = fit_architecture(spec_of(ArchKind::M2, part), y, block_rows(panel, part));
  ASSERT_FALSE(fit.warnings.empty());
  EXPECT_LE(fit.local_stage2.at("big").rank, 6);
  EXPECT_TRUE(forecast_architecture(fit, y.col(7), y.col(6)).allFinite());
}

TEST(BlockDummyRidge, OneBlockCollapsesToPlainRidge) {
  std::mt19937_64 rng(51);
  const Matrix y = hptest::simulate_ar1(8, 20, 0.6, rng);
  const auto model = single_stage_block_dummy_ridge(y, std::vector<Index>(8, 0), {1.0});
  const double alpha = 8.0;
  // duplicated slope columns split the coefficient; effective penalty alpha/2
  Vector x(8 * 19), z(8 * 19);
  Index r = 0;
  for (Index t = 0; t < 19; ++t)
    for (Index i = 0; i < 8; ++i, ++r) {
      x(r) = y(i, t);
      z(r) = y(i, t + 1);
    }
  const double xm = x.mean(), zm = z.mean();
  const double slope = (x.array() - xm).matrix().dot((z.array() - zm).matrix()) /
                       ((x.array() - xm).matrix().squaredNorm() + alpha / 2.0);
  EXPECT_NEAR(model.coeffs(0) + model.coeffs(1), slope, 1e-12);
  EXPECT_NEAR(model.coeffs(0), model.coeffs(1), 1e-12);
  EXPECT_NEAR(model.coeffs(2), 0.0, 1e-12);
  EXPECT_NEAR(model.intercept, zm - slope * xm, 1e-12);
}

TEST(BlockDummyRidge, DummiesAreBlockIndicators) {
  BlockDummyRidge m;
  m.n_blocks = 3;
  const Vector f = m.features(2.5, 1);
  EXPECT_EQ(f.size(), 7);
  EXPECT_EQ(f(0), 2.5);
  EXPECT_EQ(f(2), 2.5);
  EXPECT_EQ(f(1), 0.0);
  EXPECT_EQ(f(5), 1.0);
  EXPECT_EQ(f(4) + f(6), 0.0);
}

TEST(BlockDummyRidge, InteractionsShrinkWithPenalty) {
  std::mt19937_64 rng(52);
  const Matrix y = hptest::simulate_ar1(12, 24, 0.6, rng);
  std::vector<Index> block_of(12);
  for (Index i = 0; i < 12; ++i) block_of[static_cast<std::size_t>(i)] = i % 3;
  const auto small = single_stage_block_dummy_ridge(y, block_of, {0.01});
  const auto large = single_stage_block_dummy_ridge(y, block_of, {1e6});
  EXPECT_LT(large.coeffs.segment(1, 3).norm(), small.coeffs.segment(1, 3).norm());
  EXPECT_LT(large.coeffs.segment(1, 3).norm(), 1e-3);
}
