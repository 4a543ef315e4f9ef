#pragma once

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "hetpanel/engines.hpp"
#include "hetpanel/inference.hpp"
#include "hetpanel/rng.hpp"
#include "hetpanel/stage1.hpp"

namespace hetpanel {

inline constexpr double kOrthonormalInputTol = 1e-8;

[[nodiscard]] inline double to_degrees(double radians) noexcept { return radians * 180.0 / std::numbers::pi; }

/// Principal angles in degrees, ascending. Cosines come from the SVD of
/// U1^T U2; angles below 45 degrees are recomputed from the sines, i.e. the
/// singular values of (I - U1 U1^T) U2, which keeps them accurate near zero.
[[nodiscard]] inline std::vector<double> principal_angles(const Matrix& u1, const Matrix& u2) {
  require(u1.rows() == u2.rows() && u1.cols() == u2.cols(), ErrorCode::precondition, "bases differ in shape");
  require(orthonormality_error(u1) <= kOrthonormalInputTol, ErrorCode::non_orthonormal, "first basis");
  require(orthonormality_error(u2) <= kOrthonormalInputTol, ErrorCode::non_orthonormal, "second basis");
  const Index k = u1.cols();
  const Vector cosines = Eigen::JacobiSVD<Matrix>(u1.transpose() * u2).singularValues();  // descending
  const Matrix residual = u2 - u1 * (u1.transpose() * u2);
  Vector sines = Eigen::JacobiSVD<Matrix>(residual).singularValues();                   // descending
  std::vector<double> angles(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) {
    const double c = std::clamp(cosines(j), 0.0, 1.0);
    const double s = std::clamp(sines(k - 1 - j), 0.0, 1.0);
    angles[static_cast<std::size_t>(j)] = to_degrees(c * c >= 0.5 ? std::asin(s) : std::acos(c));
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

enum class GeodesicNorm { l2, l1, max };

[[nodiscard]] inline GeodesicNorm parse_geodesic_norm(std::string_view s) {
  if (s == "l2") return GeodesicNorm::l2;
  if (s == "l1") return GeodesicNorm::l1;
  if (s == "max") return GeodesicNorm::max;
  throw Error(ErrorCode::invalid_config, "unknown geodesic norm '" + std::string(s) + "'");
}

[[nodiscard]] inline double geodesic_distance(const std::vector<double>& angles, GeodesicNorm norm = GeodesicNorm::l2) {
  double out = 0.0;
  for (const double a : angles) {
    switch (norm) {
      case GeodesicNorm::l2: out += a * a; break;
      case GeodesicNorm::l1: out += std::abs(a); break;
      case GeodesicNorm::max: out = std::max(out, std::abs(a)); break;
    }
  }
  return norm == GeodesicNorm::l2 ? std::sqrt(out) : out;
}

[[nodiscard]] inline double subspace_distance(const Matrix& u1, const Matrix& u2, GeodesicNorm norm = GeodesicNorm::l2) {
  return geodesic_distance(principal_angles(u1, u2), norm);
}

// ---------------------------------------------------------------------------

/// Stage-1 residual windows ending at successive quarters: entry j holds the
/// N x (train_len - 1) residuals of a pooled fit on quarters
/// [first + j - train_len + 1, first + j], first = train_len - 1.
[[nodiscard]] inline std::vector<Matrix> rolling_residual_windows(const Matrix& values, Index train_len,
                                                                  double rho_clip = kRhoClip) {
  require(train_len >= 3, ErrorCode::precondition, "training window needs >= 3 quarters");
  require(values.cols() >= train_len, ErrorCode::precondition, "panel shorter than the training window");
  std::vector<Matrix> out;
  for (Index end = train_len - 1; end < values.cols(); ++end) {
    const Matrix train = values.middleCols(end - train_len + 1, train_len);
    const auto params = actor_params(fit_pooled_ar1_fe_or_mean(train, rho_clip));
    out.push_back(stage1_residuals(params, train));
  }
  return out;
}

/// EWM-weighted PCA basis of each residual window (optionally restricted to
/// `rows`).
[[nodiscard]] inline std::vector<Matrix> residual_basis_series(const std::vector<Matrix>& windows, Index K,
                                                               double half_life = kDefaultHalfLife,
                                                               const std::vector<Index>& rows = {}) {
  std::vector<Matrix> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    const Matrix sub = rows.empty() ? w : select_rows(w, rows);
    const auto [demeaned, demeaner] = ewm_demean(sub, half_life);
    out.push_back(fit_pca_basis(demeaned, K, demeaner.weights).U);
  }
  return out;
}

struct RotationSeries {
  std::vector<double> steps;  // geodesic distance between consecutive bases
  double mean_step = 0.0;
  double acf1 = std::numeric_limits<double>::quiet_NaN();
  double ljung_box_q = std::numeric_limits<double>::quiet_NaN();
  double ljung_box_p = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;  // constant step series; ACF and Ljung-Box undefined
};

[[nodiscard]] inline RotationSeries rotation_series(const std::vector<Matrix>& bases, GeodesicNorm norm = GeodesicNorm::l2) {
  require(bases.size() >= 3, ErrorCode::precondition, "rotation series needs >= 3 bases");
  RotationSeries r;
  for (std::size_t t = 1; t < bases.size(); ++t) r.steps.push_back(subspace_distance(bases[t - 1], bases[t], norm));
  r.mean_step = detail::mean(r.steps);
  double ss = 0.0;
  for (const double s : r.steps) ss += (s - r.mean_step) * (s - r.mean_step);
  const double scale = std::max(1.0, std::abs(r.mean_step));
  r.degenerate = !(ss > 1e-20 * scale * scale * static_cast<double>(r.steps.size()));
  if (!r.degenerate) {
    r.acf1 = lag1_autocorrelation(r.steps);
    if (r.steps.size() > 2) {
      const auto lb = ljung_box(r.steps, 1);
      r.ljung_box_q = lb.q;
      r.ljung_box_p = lb.p;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

/// Haar-uniform K-dimensional subspace of R^N: thin Q of an N x K gaussian.
template <class Engine>
[[nodiscard]] Matrix random_subspace(Index n, Index k, Engine& engine) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, k);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < n; ++i) g(i, j) = normal(engine);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(n, k);
}

struct RandomBaseline {
  double mean = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  std::vector<double> distances;
};

/// Monte Carlo distance between independent uniform subspaces; draw d uses
/// the stream derive_seed(seed, d).
[[nodiscard]] inline RandomBaseline random_baseline(Index n, Index k, std::size_t draws, std::uint64_t seed,
                                                    GeodesicNorm norm = GeodesicNorm::l2) {
  require(k >= 1 && k <= n, ErrorCode::precondition, "need 1 <= K <= N");
  require(draws >= 1, ErrorCode::precondition, "need >= 1 draw");
  RandomBaseline r;
  for (std::size_t d = 0; d < draws; ++d) {
    std::mt19937_64 engine(derive_seed(seed, d));
    const Matrix a = random_subspace(n, k, engine);
    const Matrix b = random_subspace(n, k, engine);
    r.distances.push_back(k == n ? 0.0 : subspace_distance(a, b, norm));
  }
  r.mean = detail::mean(r.distances);
  r.q05 = quantile(r.distances, 0.05);
  r.q50 = quantile(r.distances, 0.50);
  r.q95 = quantile(r.distances, 0.95);
  return r;
}

struct SubpanelControl {
  double block_rotation = 0.0;           // mean consecutive-quarter step of the block's own basis
  std::vector<double> random_rotation;  // same statistic on random same-size row sets
  double p = 1.0;                        // share of random sets rotating no more than the block
};

/// Compares a block's within-rotation to random sub-panels of the same size.
/// Draw d samples rows with the stream derive_seed(seed, d).
[[nodiscard]] inline SubpanelControl matched_subpanel_control(const std::vector<Matrix>& windows,
                                                              const std::vector<Index>& block, Index K,
                                                              std::size_t draws, std::uint64_t seed,
                                                              double half_life = kDefaultHalfLife) {
  require(!windows.empty(), ErrorCode::precondition, "no residual windows");
  const Index n = windows.front().rows();
  require(!block.empty() && static_cast<Index>(block.size()) <= n, ErrorCode::precondition, "block size must be in [1, N]");
  require(draws >= 1, ErrorCode::precondition, "need >= 1 draw");
  SubpanelControl c;
  c.block_rotation = rotation_series(residual_basis_series(windows, K, half_life, block)).mean_step;
  std::vector<Index> all(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  std::size_t at_most = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    SplitMix64 engine(derive_seed(seed, d));
    std::vector<Index> rows = all;
    fisher_yates(rows.begin(), rows.end(), engine);
    rows.resize(block.size());
    std::sort(rows.begin(), rows.end());
    const double stat = rotation_series(residual_basis_series(windows, K, half_life, rows)).mean_step;
    c.random_rotation.push_back(stat);
    if (stat <= c.block_rotation) ++at_most;
  }
  c.p = static_cast<double>(at_most) / static_cast<double>(draws);
  return c;
}

}  // namespace hetpanel
