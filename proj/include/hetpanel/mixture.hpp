#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetpanel/engines.hpp"
#include "hetpanel/panel.hpp"
#include "hetpanel/stage1.hpp"

namespace hetpanel {

/// The eight architectures, plus two reference baselines (per-actor AR(1)
/// and the single-stage block-dummy ridge) that run through the same
/// evaluation path.
enum class ArchKind { G0, G1, S1, BA, BA_M2, M1, M2, ENS, AR1, SSR };

[[nodiscard]] inline std::string_view to_string(ArchKind kind) noexcept {
  switch (kind) {
    case ArchKind::G0: return "G0";
    case ArchKind::G1: return "G1";
    case ArchKind::S1: return "S1";
    case ArchKind::BA: return "BA";
    case ArchKind::BA_M2: return "BA_M2";
    case ArchKind::M1: return "M1";
    case ArchKind::M2: return "M2";
    case ArchKind::ENS: return "ENS";
    case ArchKind::AR1: return "AR1";
    case ArchKind::SSR: return "SSR";
  }
  return "G1";
}

/// Case-insensitive: g0 g1 s1 ba ba_m2 m1 m2 ens ar1 ssr.
[[nodiscard]] inline ArchKind parse_arch(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const auto k : {ArchKind::G0, ArchKind::G1, ArchKind::S1, ArchKind::BA, ArchKind::BA_M2, ArchKind::M1,
                       ArchKind::M2, ArchKind::ENS, ArchKind::AR1, ArchKind::SSR}) {
    std::string name(to_string(k));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    if (name == lower) return k;
  }
  throw Error(ErrorCode::invalid_config, "unknown architecture '" + std::string(s) + "'");
}

[[nodiscard]] constexpr bool needs_partition(ArchKind kind) noexcept {
  return kind == ArchKind::S1 || kind == ArchKind::BA || kind == ArchKind::BA_M2 || kind == ArchKind::M1 ||
         kind == ArchKind::M2 || kind == ArchKind::ENS || kind == ArchKind::SSR;
}

/// K_b = min(4, max(2, floor(N_b / 5))).
[[nodiscard]] constexpr Index local_rank_rule(Index block_size) noexcept {
  return std::min<Index>(4, std::max<Index>(2, block_size / 5));
}

struct ArchitectureSpec {
  ArchKind kind = ArchKind::M2;
  BlockPartition partition;
  EngineOptions global_engine{};  // pca_ridge, K = 8, lambda = 1
  EngineOptions local_engine{};   // M2 / BA_M2 local engine; rank from the rule unless overridden
  std::optional<Index> local_rank_override;
  std::vector<double> local_ridge_alphas{0.1, 1.0, 10.0};  // M1 grid, multiplied by N_b
  double rho_clip = kRhoClip;
};

enum class Route { none, global, local };

struct LocalModel {
  std::vector<Index> rows;
  Index rank = 0;
  ResidualModel model;
};

struct MixtureFit {
  ArchKind kind = ArchKind::G0;
  std::optional<PooledAR1Fit> pooled;
  std::optional<BlockAR1Fit> block;
  ActorAR1Params stage1;
  std::optional<ResidualModel> global_stage2;
  std::map<std::string, LocalModel> local_stage2;
  std::vector<Route> routes;          // per actor
  std::vector<MixtureFit> components;  // ENS: {G1, BA}
  Index train_quarters = 0;
  std::vector<std::string> actor_ids;
  std::vector<std::string> warnings;
  // SSR only
  Vector ssr_coeffs;
  double ssr_intercept = 0.0;
  std::vector<Index> ssr_block_of;  // block ordinal per actor
  double ssr_alpha = 0.0;
};

// ---------------------------------------------------------------------------
// Single-stage ridge with block-dummy interactions:
//   y_{i,t+1} ~ [y_{i,t}, y_{i,t} d_1 .. y_{i,t} d_B, d_1 .. d_B] + intercept

struct BlockDummyRidge {
  Vector coeffs;  // 1 + 2B
  double intercept = 0.0;
  double alpha = 0.0;
  std::vector<Index> block_of;  // block ordinal per actor
  Index n_blocks = 0;
  std::vector<double> cv_errors;

  [[nodiscard]] Vector features(double y, Index block) const {
    Vector x = Vector::Zero(1 + 2 * n_blocks);
    x(0) = y;
    x(1 + block) = y;
    x(1 + n_blocks + block) = 1.0;
    return x;
  }

  [[nodiscard]] Vector predict(const Eigen::Ref<const Vector>& last_obs) const {
    require(last_obs.size() == static_cast<Index>(block_of.size()), ErrorCode::alignment_error,
            "last_obs length mismatch");
    Vector out(last_obs.size());
    for (Index i = 0; i < last_obs.size(); ++i) {
      out(i) = intercept + coeffs.dot(features(last_obs(i), block_of[static_cast<std::size_t>(i)]));
    }
    return out;
  }
};

namespace detail {

struct RidgeSolution {
  Vector beta;
  double intercept = 0.0;
};

/// Ridge with an unpenalized intercept (columns centered).
[[nodiscard]] inline RidgeSolution centered_ridge(const Matrix& x, const Vector& y, double alpha) {
  const Vector x_mean = x.colwise().mean().transpose();
  const double y_mean = y.mean();
  const Matrix xc = x.rowwise() - x_mean.transpose();
  const Vector yc = y.array() - y_mean;
  const Matrix gram = xc.transpose() * xc + alpha * Matrix::Identity(x.cols(), x.cols());
  RidgeSolution s;
  s.beta = gram.ldlt().solve(xc.transpose() * yc);
  s.intercept = y_mean - x_mean.dot(s.beta);
  return s;
}

}  // namespace detail

/// Penalty chosen on the last two training transitions (ties to the larger
/// penalty) from `alphas` x N, then refit on every transition.
[[nodiscard]] inline BlockDummyRidge single_stage_block_dummy_ridge(const Matrix& train,
                                                                    const std::vector<Index>& block_of,
                                                                    const std::vector<double>& alphas = {0.1, 1.0,
                                                                                                         10.0}) {
  const Index n = train.rows();
  const Index t_count = train.cols();
  require(t_count >= 5, ErrorCode::precondition, "block-dummy ridge needs >= 5 training quarters");
  require(static_cast<Index>(block_of.size()) == n, ErrorCode::alignment_error, "block map length mismatch");
  BlockDummyRidge model;
  model.block_of = block_of;
  model.n_blocks = block_of.empty() ? 0 : *std::max_element(block_of.begin(), block_of.end()) + 1;
  const Index p = 1 + 2 * model.n_blocks;

  auto build = [&](Index t_first, Index t_last) {  // transitions t -> t+1 for t in [t_first, t_last]
    const Index rows = n * (t_last - t_first + 1);
    Matrix x(rows, p);
    Vector y(rows);
    Index r = 0;
    for (Index t = t_first; t <= t_last; ++t) {
      for (Index i = 0; i < n; ++i, ++r) {
        x.row(r) = model.features(train(i, t), block_of[static_cast<std::size_t>(i)]).transpose();
        y(r) = train(i, t + 1);
      }
    }
    return std::pair{x, y};
  };

  const Index last_transition = t_count - 2;
  const auto [x_fit, y_fit] = build(0, last_transition - 2);
  const auto [x_hold, y_hold] = build(last_transition - 1, last_transition);
  double best_err = std::numeric_limits<double>::infinity();
  double best_alpha = 0.0;
  for (const double a : scaled_alphas(alphas, static_cast<double>(n))) {
    const auto s = detail::centered_ridge(x_fit, y_fit, a);
    const double err = ((x_hold * s.beta).array() + s.intercept - y_hold.array()).matrix().squaredNorm();
    model.cv_errors.push_back(err);
    const bool first = !std::isfinite(best_err);
    const double tol = first ? 0.0 : 1e-12 * std::max(err, best_err);
    if (first || err < best_err - tol || (std::abs(err - best_err) <= tol && a > best_alpha)) {
      best_err = err;
      best_alpha = a;
    }
  }
  const auto [x_all, y_all] = build(0, last_transition);
  const auto s = detail::centered_ridge(x_all, y_all, best_alpha);
  model.coeffs = s.beta;
  model.intercept = s.intercept;
  model.alpha = best_alpha;
  return model;
}

[[nodiscard]] inline BlockDummyRidge single_stage_block_dummy_ridge(const Panel& train,
                                                                    const BlockPartition& partition,
                                                                    const std::vector<double>& alphas = {0.1, 1.0,
                                                                                                         10.0}) {
  const auto rows = block_rows(train, partition);
  std::vector<Index> block_of(static_cast<std::size_t>(train.n_actors()), 0);
  Index b = 0;
  for (const auto& [block, idx] : rows) {
    for (const Index i : idx) block_of[static_cast<std::size_t>(i)] = b;
    ++b;
  }
  return single_stage_block_dummy_ridge(train.values, block_of, alphas);
}

// ---------------------------------------------------------------------------

namespace detail {

/// Largest usable rank for a subspace engine on an N x T_r residual matrix.
[[nodiscard]] inline Index clamp_rank(Index requested, Index n, Index t_resid, const std::string& scope,
                                      std::vector<std::string>& warnings) {
  const Index cap = std::max<Index>(1, std::min<Index>(n, t_resid - 1));
  const Index transitions = t_resid - 1;
  if (transitions < 2 * requested + 1) {
    warnings.push_back(std::string(scope == "global" ? "underdetermined global model" : "underdetermined local block") +
                       ": " + scope + " has " + std::to_string(transitions) +
                       " training transitions for rank " + std::to_string(requested));
  }
  if (requested > cap) {
    warnings.push_back(scope + ": rank reduced from " + std::to_string(requested) + " to " + std::to_string(cap));
    return cap;
  }
  return requested;
}

[[nodiscard]] inline ResidualModel fit_global(const Matrix& residuals, const EngineOptions& opt,
                                              std::vector<std::string>& warnings) {
  EngineOptions o = opt;
  if (uses_subspace(o.kind)) o.rank = clamp_rank(o.rank, residuals.rows(), residuals.cols(), "global", warnings);
  return fit_residual_model(residuals, o);
}

[[nodiscard]] inline LocalModel fit_local(const Matrix& residuals, const std::vector<Index>& rows,
                                          const std::string& block, const ArchitectureSpec& spec, bool ridge,
                                          std::vector<std::string>& warnings) {
  LocalModel local;
  local.rows = rows;
  const Matrix sub = select_rows(residuals, rows);
  EngineOptions o = spec.local_engine;
  if (ridge) {
    o.kind = EngineKind::ridge_full;
    o.ridge_alphas = spec.local_ridge_alphas;
  } else {
    const Index n_b = static_cast<Index>(rows.size());
    const Index requested = spec.local_rank_override.value_or(local_rank_rule(n_b));
    o.rank = clamp_rank(requested, n_b, sub.cols(), "block " + block, warnings);
    local.rank = o.rank;
  }
  local.model = fit_residual_model(sub, o);
  return local;
}

}  // namespace detail

/// Fits on a raw N x T training matrix. `rows` gives each block's panel
/// rows (ignored by G0/G1/AR1).
[[nodiscard]] inline MixtureFit fit_architecture(const ArchitectureSpec& spec, const Matrix& train,
                                                 const std::map<std::string, std::vector<Index>>& rows) {
  const Index n = train.rows();
  MixtureFit fit;
  fit.kind = spec.kind;
  fit.train_quarters = train.cols();
  fit.routes.assign(static_cast<std::size_t>(n), Route::none);

  auto local_blocks = [&] {
    std::vector<std::pair<std::string, const std::vector<Index>*>> out;
    for (const auto& [block, idx] : rows) {
      if (spec.partition.is_local_block(block)) out.emplace_back(block, &idx);
    }
    return out;
  };

  switch (spec.kind) {
    case ArchKind::ENS: {
      ArchitectureSpec g1 = spec;
      g1.kind = ArchKind::G1;
      ArchitectureSpec ba = spec;
      ba.kind = ArchKind::BA;
      fit.components.push_back(fit_architecture(g1, train, rows));
      fit.components.push_back(fit_architecture(ba, train, rows));
      for (const auto& c : fit.components) fit.warnings.insert(fit.warnings.end(), c.warnings.begin(), c.warnings.end());
      return fit;
    }
    case ArchKind::SSR: {
      std::vector<Index> block_of(static_cast<std::size_t>(n), 0);
      Index b = 0;
      for (const auto& [block, idx] : rows) {
        for (const Index i : idx) block_of[static_cast<std::size_t>(i)] = b;
        ++b;
      }
      const auto model = single_stage_block_dummy_ridge(train, block_of);
      fit.ssr_coeffs = model.coeffs;
      fit.ssr_intercept = model.intercept;
      fit.ssr_block_of = model.block_of;
      fit.ssr_alpha = model.alpha;
      return fit;
    }
    case ArchKind::AR1: {
      std::map<std::string, std::vector<Index>> singles;
      for (Index i = 0; i < n; ++i) singles["actor" + std::to_string(i)] = {i};
      fit.block = fit_block_ar1_fe(train, singles, spec.rho_clip);
      fit.stage1 = actor_params(*fit.block, n);
      return fit;
    }
    case ArchKind::BA:
    case ArchKind::BA_M2:
      fit.block = fit_block_ar1_fe(train, rows, spec.rho_clip);
      fit.stage1 = actor_params(*fit.block, n);
      break;
    default:
      fit.pooled = fit_pooled_ar1_fe_or_mean(train, spec.rho_clip);
      if (fit.pooled->degenerate) fit.warnings.emplace_back("pooled Stage 1 degenerate; forecasting actor means");
      fit.stage1 = actor_params(*fit.pooled);
      break;
  }
  if (spec.kind == ArchKind::G0 || spec.kind == ArchKind::BA) return fit;

  const Matrix residuals = stage1_residuals(fit.stage1, train);
  const bool has_remainder_route = spec.kind != ArchKind::G1;
  bool global_needed = spec.kind == ArchKind::G1;
  if (has_remainder_route) {
    for (Index i = 0; i < n; ++i) fit.routes[static_cast<std::size_t>(i)] = Route::global;
    for (const auto& [block, idx] : local_blocks()) {
      for (const Index i : *idx) fit.routes[static_cast<std::size_t>(i)] = spec.kind == ArchKind::S1 ? Route::none : Route::local;
    }
    global_needed = std::any_of(fit.routes.begin(), fit.routes.end(), [](Route r) { return r == Route::global; });
  } else {
    std::fill(fit.routes.begin(), fit.routes.end(), Route::global);
  }
  if (global_needed) fit.global_stage2 = detail::fit_global(residuals, spec.global_engine, fit.warnings);

  if (spec.kind == ArchKind::M1 || spec.kind == ArchKind::M2 || spec.kind == ArchKind::BA_M2) {
    for (const auto& [block, idx] : local_blocks()) {
      fit.local_stage2.emplace(block, detail::fit_local(residuals, *idx, block, spec, spec.kind == ArchKind::M1,
                                                        fit.warnings));
    }
  }
  return fit;
}

[[nodiscard]] inline MixtureFit fit_architecture(const ArchitectureSpec& spec, const Panel& train) {
  if (needs_partition(spec.kind)) validate(spec.partition, train);
  std::map<std::string, std::vector<Index>> rows;
  if (needs_partition(spec.kind)) rows = block_rows(train, spec.partition);
  auto fit = fit_architecture(spec, train.values, rows);
  fit.actor_ids = train.actor_ids();
  for (auto& c : fit.components) c.actor_ids = fit.actor_ids;
  return fit;
}

/// Stage-1 forecast plus the routed Stage-2 residual forecast, from the
/// last two observed quarters (origin and origin - 1).
[[nodiscard]] inline Vector forecast_architecture(const MixtureFit& fit, const Eigen::Ref<const Vector>& y_origin,
                                                  const Eigen::Ref<const Vector>& y_prev) {
  require(y_origin.size() == y_prev.size(), ErrorCode::alignment_error, "origin vectors differ in length");
  if (fit.kind == ArchKind::ENS) {
    const Vector a = forecast_architecture(fit.components[0], y_origin, y_prev);
    const Vector b = forecast_architecture(fit.components[1], y_origin, y_prev);
    return 0.5 * (a + b);
  }
  if (fit.kind == ArchKind::SSR) {
    BlockDummyRidge m;
    m.coeffs = fit.ssr_coeffs;
    m.intercept = fit.ssr_intercept;
    m.block_of = fit.ssr_block_of;
    m.n_blocks = (fit.ssr_coeffs.size() - 1) / 2;
    return m.predict(y_origin);
  }
  require(y_origin.size() == fit.stage1.means.size(), ErrorCode::alignment_error, "actor set mismatch with fit");
  Vector out = forecast_stage1(fit.stage1, y_origin);
  if (fit.kind == ArchKind::G0 || fit.kind == ArchKind::BA || fit.kind == ArchKind::AR1) return out;

  const Vector r_last = y_origin - (fit.stage1.means + fit.stage1.rho.cwiseProduct(y_prev - fit.stage1.means));
  if (fit.global_stage2) {
    const Vector g = forecast_residual(*fit.global_stage2, r_last);
    for (Index i = 0; i < out.size(); ++i) {
      if (fit.routes[static_cast<std::size_t>(i)] == Route::global) out(i) += g(i);
    }
  }
  for (const auto& [block, local] : fit.local_stage2) {
    const Vector l = forecast_residual(local.model, select_rows(r_last, local.rows));
    for (std::size_t k = 0; k < local.rows.size(); ++k) out(local.rows[k]) += l(static_cast<Index>(k));
  }
  return out;
}

/// `panel_upto_origin` ends at the forecast origin.
[[nodiscard]] inline Vector forecast_architecture(const MixtureFit& fit, const Panel& panel_upto_origin) {
  require(panel_upto_origin.n_quarters() >= 2, ErrorCode::precondition, "need two quarters up to the origin");
  if (!fit.actor_ids.empty()) {
    require(panel_upto_origin.actor_ids() == fit.actor_ids, ErrorCode::alignment_error, "actor set mismatch with fit");
  }
  const Index t = panel_upto_origin.n_quarters();
  return forecast_architecture(fit, panel_upto_origin.values.col(t - 1), panel_upto_origin.values.col(t - 2));
}

/// Zero all Stage-2 operators (global and local); the fit then forecasts
/// exactly its Stage-1 part.
inline void zero_stage2(MixtureFit& fit) {
  if (fit.global_stage2) zero_out(*fit.global_stage2);
  for (auto& [block, local] : fit.local_stage2) zero_out(local.model);
  for (auto& c : fit.components) zero_stage2(c);
}

}  // namespace hetpanel
