#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace hetpanel;

namespace {

Matrix basis_from(const std::vector<Vector>& cols) {
  Matrix u(cols.front().size(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) u.col(static_cast<Index>(k)) = cols[k];
  return u;
}

Vector e(Index n, Index i) { return Vector::Unit(n, i); }

Matrix planted(Index n, double phi_deg) {
  const double phi = phi_deg * std::numbers::pi / 180.0;
  return basis_from({std::cos(phi) * e(n, 0) + std::sin(phi) * e(n, 2), e(n, 1)});
}

}  // namespace

TEST(Angles, IdenticalAndOrthogonal) {
  std::mt19937_64 rng(81);
  const Matrix u = random_subspace(9, 3, rng);
  for (double a : principal_angles(u, u)) EXPECT_NEAR(a, 0.0, 1e-6);
  const auto o = principal_angles(basis_from({e(2, 0)}), basis_from({e(2, 1)}));
  EXPECT_NEAR(o[0], 90.0, 1e-12);
}

TEST(Angles, PlantedRotation) {
  const Matrix u1 = basis_from({e(5, 0), e(5, 1)});
  for (double phi : {1e-6, 0.5, 17.0, 45.0, 63.0, 89.9}) {
    const auto a = principal_angles(u1, planted(5, phi));
    EXPECT_NEAR(a[0], 0.0, 1e-9);
    EXPECT_NEAR(a[1], phi, 1e-9 * std::max(1.0, phi)) << phi;
  }
}

TEST(Angles, SymmetryAndRightRotationInvariance) {
  std::mt19937_64 rng(82);
  const Matrix a = random_subspace(12, 4, rng);
  const Matrix b = random_subspace(12, 4, rng);
  const auto ab = principal_angles(a, b);
  const auto ba = principal_angles(b, a);
  const auto rot = principal_angles(a * hptest::random_orthogonal(4, rng), b * hptest::random_orthogonal(4, rng));
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(ab[k], ba[k], 1e-9);
    EXPECT_NEAR(ab[k], rot[k], 1e-9);
  }
  EXPECT_TRUE(std::is_sorted(ab.begin(), ab.end()));
}

TEST(Angles, RejectsNonOrthonormal) {
  const Matrix bad = 2.0 * basis_from({e(3, 0)});
  try {
    (void)principal_angles(bad, basis_from({e(3, 1)}));
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::non_orthonormal);
  }
}

TEST(Geodesic, Values) {
  const double total = geodesic_distance({45.8, 18.0});
  EXPECT_NEAR(total, 49.2, 0.05);
  EXPECT_NEAR(45.8 / total, 0.93, 0.005);
  EXPECT_EQ(geodesic_distance({0.0, 0.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(geodesic_distance({33.0}), 33.0);
  EXPECT_DOUBLE_EQ(geodesic_distance({3.0, 4.0}, GeodesicNorm::l1), 7.0);
  EXPECT_DOUBLE_EQ(geodesic_distance({3.0, 4.0}, GeodesicNorm::max), 4.0);
}

TEST(Geodesic, TriangleInequality) {
  std::mt19937_64 rng(83);
  for (int k = 0; k < 50; ++k) {
    const Matrix a = random_subspace(8, 3, rng);
    const Matrix b = random_subspace(8, 3, rng);
    const Matrix c = random_subspace(8, 3, rng);
    EXPECT_LE(subspace_distance(a, c), subspace_distance(a, b) + subspace_distance(b, c) + 1e-9);
  }
}

TEST(Rotation, IdenticalBasesAreDegenerate) {
  std::mt19937_64 rng(84);
  const Matrix u = random_subspace(6, 2, rng);
  const auto r = rotation_series({u, u, u, u});
  for (double s : r.steps) EXPECT_NEAR(s, 0.0, 1e-6);
  EXPECT_TRUE(r.degenerate);
}

TEST(Rotation, ConstantSpeedIsDegenerate) {
  std::vector<Matrix> bases;
  for (int t = 0; t < 6; ++t) bases.push_back(planted(4, 5.0 * t));
  const auto r = rotation_series(bases);
  for (double s : r.steps) EXPECT_NEAR(s, 5.0, 1e-9);
  EXPECT_TRUE(r.degenerate);
  EXPECT_TRUE(std::isnan(r.acf1));
  EXPECT_THROW((void)rotation_series({bases[0], bases[1]}), Error);
}

TEST(Rotation, IidBasesMatchRandomBaseline) {
  std::mt19937_64 rng(85);
  std::vector<Matrix> bases;
  for (int t = 0; t < 400; ++t) bases.push_back(random_subspace(10, 2, rng));
  const auto r = rotation_series(bases);
  const auto base = random_baseline(10, 2, 2000, 7);
  EXPECT_NEAR(r.mean_step / base.mean, 1.0, 0.03);
}

TEST(RandomBaseline, ClosedForms) {
  const auto r = random_baseline(2, 1, 4000, 11);
  EXPECT_NEAR(r.mean, 45.0, 1.5);
  const auto full = random_baseline(5, 5, 10, 11);
  EXPECT_EQ(full.mean, 0.0);
  const auto again = random_baseline(2, 1, 4000, 11);
  EXPECT_EQ(r.distances, again.distances);
}

TEST(SubpanelControl, FullPanelGivesOne) {
  std::mt19937_64 rng(86);
  const auto windows = rolling_residual_windows(hptest::simulate_ar1(12, 30, 0.5, rng), 16);
  std::vector<Index> all(12);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(matched_subpanel_control(windows, all, 2, 10, 3).p, 1.0);
}

TEST(SubpanelControl, PlantedBlockIsStable) {
  const auto cfg = default_heterogeneous_config(20240101);
  const auto panel = generate_heterogeneous_panel(cfg);
  const auto windows = rolling_residual_windows(panel.values, 20);
  std::vector<Index> block;
  for (Index i = 7; i < 30; ++i) block.push_back(i);
  const auto c = matched_subpanel_control(windows, block, 3, 40, 5);
  EXPECT_LE(c.p, 0.1);
}

TEST(SubpanelControl, NullIsRoughlyUniform) {
  double total = 0.0;
  const int seeds = 12;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(1000 + s);
    const auto windows = rolling_residual_windows(hptest::simulate_ar1(20, 36, 0.5, rng), 16);
    std::vector<Index> block{0, 1, 2, 3, 4, 5, 6, 7};
    total += matched_subpanel_control(windows, block, 2, 30, 900 + s).p;
  }
  const double mean_p = total / seeds;
  EXPECT_GE(mean_p, 0.3);
  EXPECT_LE(mean_p, 0.7);
}
