#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hetpanel/panel.hpp"

namespace hetpanel {

inline constexpr double kRhoClip = 0.995;

/// Pooled AR(1) with actor fixed effects:
///   yhat_{i,t+1} = ybar_i + rho * (y_{i,t} - ybar_i)
struct PooledAR1Fit {
  double rho = 0.0;
  Vector actor_means;
  std::string support_first;  // first training quarter label
  std::string support_last;   // last training quarter label (forecast origin)
  bool degenerate = false;    // true when rho fell back to 0
};

struct BlockAR1Fit {
  std::map<std::string, PooledAR1Fit> per_block;
  std::map<std::string, std::vector<Index>> rows;  // panel rows of each block
};

namespace detail {

struct WithinMoments {
  double sxy = 0.0;
  double sxx = 0.0;
};

/// Demeaned cross products of y_t on y_{t-1}, stacked over rows.
[[nodiscard]] inline WithinMoments within_moments(const Matrix& y, const Vector& means) {
  WithinMoments m;
  const Index t_count = y.cols();
  for (Index i = 0; i < y.rows(); ++i) {
    for (Index t = 1; t < t_count; ++t) {
      const double x = y(i, t - 1) - means(i);
      const double z = y(i, t) - means(i);
      m.sxy += x * z;
      m.sxx += x * x;
    }
  }
  return m;
}

[[nodiscard]] inline bool moments_degenerate(const WithinMoments& m, const Matrix& y) {
  const double scale = y.size() > 0 ? std::max(1.0, y.cwiseAbs().maxCoeff()) : 1.0;
  return !(m.sxx > 1e-24 * scale * scale * static_cast<double>(y.size()));
}

[[nodiscard]] inline PooledAR1Fit fit_pooled_impl(const Matrix& y, double rho_clip, bool lenient) {
  require(y.cols() >= 3, ErrorCode::precondition, "pooled AR(1) needs >= 3 training quarters");
  require(y.rows() >= 1, ErrorCode::precondition, "pooled AR(1) needs >= 1 actor");
  PooledAR1Fit fit;
  fit.actor_means = y.rowwise().mean();
  const auto m = within_moments(y, fit.actor_means);
  if (moments_degenerate(m, y)) {
    if (!lenient) throw Error(ErrorCode::degenerate_regression, "zero demeaned variance");
    fit.rho = 0.0;
    fit.degenerate = true;
    return fit;
  }
  fit.rho = std::clamp(m.sxy / m.sxx, -rho_clip, rho_clip);
  return fit;
}

}  // namespace detail

/// Within-transformation OLS on a raw N x T training matrix. Throws
/// "degenerate regression" when every actor is constant.
[[nodiscard]] inline PooledAR1Fit fit_pooled_ar1_fe(const Matrix& train, double rho_clip = kRhoClip) {
  return detail::fit_pooled_impl(train, rho_clip, false);
}

[[nodiscard]] inline PooledAR1Fit fit_pooled_ar1_fe(const Panel& train, double rho_clip = kRhoClip) {
  auto fit = fit_pooled_ar1_fe(train.values, rho_clip);
  fit.support_first = train.quarters.front();
  fit.support_last = train.quarters.back();
  return fit;
}

/// Same estimator, but a degenerate regression yields rho = 0 (forecast =
/// actor means) and sets `degenerate` instead of throwing.
[[nodiscard]] inline PooledAR1Fit fit_pooled_ar1_fe_or_mean(const Matrix& train, double rho_clip = kRhoClip) {
  return detail::fit_pooled_impl(train, rho_clip, true);
}

[[nodiscard]] inline Vector forecast_pooled(const PooledAR1Fit& fit, const Eigen::Ref<const Vector>& last_obs) {
  require(last_obs.size() == fit.actor_means.size(), ErrorCode::alignment_error,
          "last_obs has " + std::to_string(last_obs.size()) + " entries, fit has " +
              std::to_string(fit.actor_means.size()));
  return fit.actor_means + fit.rho * (last_obs - fit.actor_means);
}

/// In-sample one-step residuals r_{i,t} = y_{i,t} - yhat^pool_{i,t},
/// t = 1..T-1 (N x (T-1)).
[[nodiscard]] inline Matrix pooled_residuals(const PooledAR1Fit& fit, const Matrix& y) {
  const Index t_count = y.cols();
  Matrix r(y.rows(), t_count - 1);
  for (Index t = 1; t < t_count; ++t) {
    r.col(t - 1) = y.col(t) - (fit.actor_means + fit.rho * (y.col(t - 1) - fit.actor_means));
  }
  return r;
}

[[nodiscard]] inline Matrix select_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
  return out;
}

[[nodiscard]] inline Vector select_rows(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Index>(k)) = v(rows[k]);
  return out;
}

/// One pooled fit per block, each on its own actors. Degenerate blocks fall
/// back to rho_b = 0 and are flagged.
[[nodiscard]] inline BlockAR1Fit fit_block_ar1_fe(const Matrix& train,
                                                  const std::map<std::string, std::vector<Index>>& rows,
                                                  double rho_clip = kRhoClip) {
  BlockAR1Fit fit;
  fit.rows = rows;
  Index covered = 0;
  for (const auto& [block, idx] : rows) {
    require(!idx.empty(), ErrorCode::invalid_partition, "empty block " + block);
    require(idx.size() >= 2 || train.cols() >= 6, ErrorCode::precondition,
            "block " + block + " needs >= 2 actors or >= 6 training quarters");
    fit.per_block.emplace(block, detail::fit_pooled_impl(select_rows(train, idx), rho_clip, true));
    covered += static_cast<Index>(idx.size());
  }
  require(covered == train.rows(), ErrorCode::invalid_partition, "blocks do not cover the panel");
  return fit;
}

[[nodiscard]] inline BlockAR1Fit fit_block_ar1_fe(const Panel& train, const BlockPartition& partition,
                                                  double rho_clip = kRhoClip) {
  auto fit = fit_block_ar1_fe(train.values, block_rows(train, partition), rho_clip);
  for (auto& [block, f] : fit.per_block) {
    f.support_first = train.quarters.front();
    f.support_last = train.quarters.back();
  }
  return fit;
}

/// Expand a block fit to per-actor (rho_i, ybar_i) vectors in panel order.
struct ActorAR1Params {
  Vector rho;
  Vector means;
};

[[nodiscard]] inline ActorAR1Params actor_params(const BlockAR1Fit& fit, Index n_actors) {
  ActorAR1Params p{Vector::Zero(n_actors), Vector::Zero(n_actors)};
  for (const auto& [block, idx] : fit.rows) {
    const auto& f = fit.per_block.at(block);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      p.rho(idx[k]) = f.rho;
      p.means(idx[k]) = f.actor_means(static_cast<Index>(k));
    }
  }
  return p;
}

[[nodiscard]] inline ActorAR1Params actor_params(const PooledAR1Fit& fit) {
  return {Vector::Constant(fit.actor_means.size(), fit.rho), fit.actor_means};
}

[[nodiscard]] inline Vector forecast_stage1(const ActorAR1Params& p, const Eigen::Ref<const Vector>& last_obs) {
  require(last_obs.size() == p.means.size(), ErrorCode::alignment_error, "last_obs length mismatch");
  return p.means + p.rho.cwiseProduct(last_obs - p.means);
}

[[nodiscard]] inline Matrix stage1_residuals(const ActorAR1Params& p, const Matrix& y) {
  const Index t_count = y.cols();
  Matrix r(y.rows(), t_count - 1);
  for (Index t = 1; t < t_count; ++t) {
    r.col(t - 1) = y.col(t) - (p.means + p.rho.cwiseProduct(y.col(t - 1) - p.means));
  }
  return r;
}

[[nodiscard]] inline Vector forecast_block(const BlockAR1Fit& fit, const Eigen::Ref<const Vector>& last_obs) {
  return forecast_stage1(actor_params(fit, last_obs.size()), last_obs);
}

}  // namespace hetpanel
