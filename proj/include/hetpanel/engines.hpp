#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hetpanel/error.hpp"
#include "hetpanel/panel.hpp"

namespace hetpanel {

using ComplexVector = Eigen::VectorXcd;

inline constexpr double kDefaultHalfLife = 12.0;
inline constexpr double kSpectralCap = 0.99;
inline constexpr double kOrthonormalTol = 1e-10;

// ---------------------------------------------------------------------------
// Exponentially weighted demeaning

struct EwmDemeaner {
  double half_life = kDefaultHalfLife;
  Vector weights;  // over training quarters, sums to 1, newest largest
  Vector mean;     // rbar, one entry per actor
};

/// w_t proportional to lambda^(T-1-t), lambda = 0.5^(1/half_life).
[[nodiscard]] inline Vector ewm_weights(Index t_count, double half_life) {
  require(t_count >= 1, ErrorCode::precondition, "EWM weights need >= 1 quarter");
  require(half_life > 0.0, ErrorCode::precondition, "half_life must be > 0");
  const double decay = std::pow(0.5, 1.0 / half_life);
  Vector w(t_count);
  for (Index t = 0; t < t_count; ++t) w(t) = std::pow(decay, static_cast<double>(t_count - 1 - t));
  return w / w.sum();
}

[[nodiscard]] inline std::pair<Matrix, EwmDemeaner> ewm_demean(const Matrix& residuals, double half_life) {
  require(residuals.cols() >= 2, ErrorCode::precondition, "EWM demeaning needs >= 2 quarters");
  EwmDemeaner d;
  d.half_life = half_life;
  d.weights = ewm_weights(residuals.cols(), half_life);
  d.mean = residuals * d.weights;
  Matrix demeaned = residuals.colwise() - d.mean;
  return {std::move(demeaned), std::move(d)};
}

// ---------------------------------------------------------------------------
// Subspace bases

struct SubspaceBasis {
  Matrix U;          // N x K, orthonormal columns
  Matrix A_reduced;  // K x K propagator (identity until a transition is fitted)
  Index K = 0;
  ComplexVector eigvals;  // eigenvalues of A_reduced
};

[[nodiscard]] inline ComplexVector eigenvalues(const Matrix& a) {
  if (a.size() == 0) return ComplexVector();
  Eigen::EigenSolver<Matrix> solver(a, false);
  return solver.eigenvalues();
}

[[nodiscard]] inline double spectral_radius(const Matrix& a) {
  const auto ev = eigenvalues(a);
  return ev.size() == 0 ? 0.0 : ev.cwiseAbs().maxCoeff();
}

/// Uniform rescale A * min(1, cap / max|lambda|). Eigenvectors are untouched.
[[nodiscard]] inline Matrix spectral_radius_clip(const Matrix& a, double cap = kSpectralCap) {
  require(a.allFinite(), ErrorCode::precondition, "spectral_radius_clip needs a finite matrix");
  const double radius = spectral_radius(a);
  if (radius <= cap) return a;
  return a * (cap / radius);
}

/// Flip each column so its largest-magnitude entry is positive.
inline void fix_column_signs(Matrix& u) {
  for (Index k = 0; k < u.cols(); ++k) {
    Index arg = 0;
    u.col(k).cwiseAbs().maxCoeff(&arg);
    if (u(arg, k) < 0.0) u.col(k) *= -1.0;
  }
}

[[nodiscard]] inline double orthonormality_error(const Matrix& u) {
  if (u.cols() == 0) return 0.0;
  return (u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
}

/// Top-K eigenvectors of the weighted covariance sum_t w_t r_t r_t^T of the
/// (already demeaned) residual columns.
[[nodiscard]] inline SubspaceBasis fit_pca_basis(const Matrix& demeaned, Index K, const Vector& weights) {
  require(K >= 1, ErrorCode::precondition, "rank must be >= 1");
  require(weights.size() == demeaned.cols(), ErrorCode::alignment_error, "weights do not match quarters");
  require(K <= std::min<Index>(demeaned.rows(), demeaned.cols() - 1), ErrorCode::rank_overflow,
          "K=" + std::to_string(K) + " exceeds min(N, T-1)=" +
              std::to_string(std::min<Index>(demeaned.rows(), demeaned.cols() - 1)));
  const Matrix scaled = demeaned * weights.cwiseSqrt().asDiagonal();
  Eigen::JacobiSVD<Matrix> svd(scaled, Eigen::ComputeThinU);
  SubspaceBasis basis;
  basis.K = K;
  basis.U = svd.matrixU().leftCols(K);
  fix_column_signs(basis.U);
  basis.A_reduced = Matrix::Identity(K, K);
  basis.eigvals = ComplexVector::Ones(K);
  return basis;
}

/// Exact DMD on demeaned snapshots: X = cols 0..T-2, Y = cols 1..T-1,
/// X ~ U S V^T truncated at K, A = U^T Y V S^-1, then spectral-radius clipped.
[[nodiscard]] inline SubspaceBasis exact_dmd(const Matrix& demeaned, Index K, double cap = kSpectralCap) {
  require(K >= 1, ErrorCode::precondition, "rank must be >= 1");
  require(demeaned.cols() >= K + 1, ErrorCode::precondition, "DMD needs T >= K+1 snapshots");
  const Index t_count = demeaned.cols();
  require(K <= std::min<Index>(demeaned.rows(), t_count - 1), ErrorCode::rank_overflow,
          "K exceeds min(N, T-1)");
  const Matrix x = demeaned.leftCols(t_count - 1);
  const Matrix y = demeaned.rightCols(t_count - 1);
  Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  require(sigma(K - 1) >= 1e-12, ErrorCode::rank_deficient,
          "singular value " + std::to_string(K) + " is below 1e-12");
  SubspaceBasis basis;
  basis.K = K;
  basis.U = svd.matrixU().leftCols(K);
  const Matrix v = svd.matrixV().leftCols(K);
  const Vector inv_sigma = sigma.head(K).cwiseInverse();
  const Matrix a = basis.U.transpose() * y * v * inv_sigma.asDiagonal();
  basis.A_reduced = spectral_radius_clip(a, cap);
  basis.eigvals = eigenvalues(basis.A_reduced);
  return basis;
}

// ---------------------------------------------------------------------------
// Factor transitions

/// Per-row no-intercept AR(1) OLS, clipped to +-rho_clip; zero-variance rows
/// get 0. Returns the diagonal K x K transition.
[[nodiscard]] inline Matrix fit_diag_ar(const Matrix& factors, double rho_clip = 0.995) {
  require(factors.cols() >= 3, ErrorCode::precondition, "diag AR needs >= 3 quarters");
  const Index k_count = factors.rows();
  const Index t_count = factors.cols();
  Matrix out = Matrix::Zero(k_count, k_count);
  for (Index k = 0; k < k_count; ++k) {
    const auto lagged = factors.row(k).head(t_count - 1);
    const auto current = factors.row(k).tail(t_count - 1);
    const double sxx = lagged.squaredNorm();
    if (!(sxx > 0.0)) continue;
    out(k, k) = std::clamp(lagged.dot(current) / sxx, -rho_clip, rho_clip);
  }
  return out;
}

struct RidgeVarFit {
  Matrix coeffs;
  double lambda = 1.0;
};

/// argmin_A sum_t ||f_{t+1} - A f_t||^2 + lambda ||A||_F^2
///   = F+ F-^T (F- F-^T + lambda I)^-1
[[nodiscard]] inline RidgeVarFit fit_ridge_var(const Matrix& factors, double lambda) {
  require(factors.cols() >= 3, ErrorCode::precondition, "ridge VAR needs >= 3 quarters");
  require(lambda >= 0.0, ErrorCode::precondition, "lambda must be >= 0");
  const Index t_count = factors.cols();
  const Matrix prev = factors.leftCols(t_count - 1);
  const Matrix next = factors.rightCols(t_count - 1);
  const Matrix gram = prev * prev.transpose() + lambda * Matrix::Identity(factors.rows(), factors.rows());
  const Matrix cross = next * prev.transpose();
  RidgeVarFit fit;
  fit.lambda = lambda;
  // A gram = cross  <=>  gram^T A^T = cross^T (gram symmetric)
  if (lambda > 0.0) {
    fit.coeffs = gram.ldlt().solve(cross.transpose()).transpose();
  } else {
    fit.coeffs = gram.completeOrthogonalDecomposition().solve(cross.transpose()).transpose();
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Full N-dimensional ridge on residual transitions

struct RidgeFullFit {
  Matrix coeffs;  // N x N map r_t -> r_{t+1}
  double alpha = 0.0;
  std::vector<double> cv_errors;  // hold-out SSE per candidate, same order as input
};

namespace detail {

/// C = next prev^T (prev prev^T + alpha I)^-1, solved in whichever of the
/// primal (N x N) or dual (T x T) forms is smaller.
[[nodiscard]] inline Matrix ridge_map(const Matrix& prev, const Matrix& next, double alpha) {
  const Index n = prev.rows();
  const Index m = prev.cols();
  if (alpha > 0.0 && m < n) {
    const Matrix gram = prev.transpose() * prev + alpha * Matrix::Identity(m, m);
    return next * gram.ldlt().solve(prev.transpose());
  }
  const Matrix gram = prev * prev.transpose() + alpha * Matrix::Identity(n, n);
  const Matrix cross = next * prev.transpose();
  if (alpha > 0.0) return gram.ldlt().solve(cross.transpose()).transpose();
  return gram.completeOrthogonalDecomposition().solve(cross.transpose()).transpose();
}

}  // namespace detail

/// Penalty chosen by minimum squared error on the last two training
/// transitions (ties go to the larger penalty), then refit on all
/// transitions.
[[nodiscard]] inline RidgeFullFit fit_ridge_full(const Matrix& demeaned, const std::vector<double>& alphas) {
  require(demeaned.cols() >= 5, ErrorCode::precondition, "ridge-full needs >= 5 training quarters");
  require(!alphas.empty(), ErrorCode::precondition, "empty penalty list");
  const Index t_count = demeaned.cols();
  const Index n_trans = t_count - 1;
  const Index n_fit = n_trans - 2;
  const Matrix fit_prev = demeaned.leftCols(n_fit);
  const Matrix fit_next = demeaned.middleCols(1, n_fit);
  const Matrix hold_prev = demeaned.middleCols(n_fit, 2);
  const Matrix hold_next = demeaned.middleCols(n_fit + 1, 2);

  RidgeFullFit fit;
  double best_err = std::numeric_limits<double>::infinity();
  double best_alpha = alphas.front();
  for (const double alpha : alphas) {
    require(alpha >= 0.0, ErrorCode::precondition, "penalty must be >= 0");
    const Matrix c = detail::ridge_map(fit_prev, fit_next, alpha);
    const double err = (hold_next - c * hold_prev).squaredNorm();
    fit.cv_errors.push_back(err);
    const bool first = !std::isfinite(best_err);
    const double tol = first ? 0.0 : 1e-12 * std::max(err, best_err);
    if (first || err < best_err - tol || (std::abs(err - best_err) <= tol && alpha > best_alpha)) {
      best_err = err;
      best_alpha = alpha;
    }
  }
  fit.alpha = best_alpha;
  fit.coeffs = detail::ridge_map(demeaned.leftCols(n_trans), demeaned.rightCols(n_trans), best_alpha);
  return fit;
}

[[nodiscard]] inline std::vector<double> scaled_alphas(const std::vector<double>& grid, double scale) {
  std::vector<double> out;
  out.reserve(grid.size());
  for (const double a : grid) out.push_back(a * scale);
  return out;
}

// ---------------------------------------------------------------------------
// Kalman filter in K-dimensional modal coordinates with spherical
// observation noise sigma2 * I_N.

struct KalmanOptions {
  double q0 = 0.5;
  double lambda_q = 0.3;
  double q_floor = 1e-6;
  double sigma2_floor = 1e-12;
  bool direct_inverse = false;  // N x N inversion of S_t instead of Woodbury
};

struct KalmanState {
  Vector alpha;  // filtered modal state alpha_{T|T}
  Matrix P;
  Matrix Q;
  double sigma2_perp = 0.0;
};

/// Mean squared residual of the columns after projection onto span(U).
[[nodiscard]] inline double projection_noise(const Matrix& u, const Matrix& demeaned) {
  if (demeaned.size() == 0) return 0.0;
  const Matrix resid = demeaned - u * (u.transpose() * demeaned);
  return resid.squaredNorm() / static_cast<double>(demeaned.size());
}

/// S^-1 = s^-2 (I - U (s^-2 I + P^-1)^-1 U^T s^-2), valid when U^T U = I.
/// Only K x K systems are inverted.
[[nodiscard]] inline Matrix woodbury_innovation_inverse(const Matrix& p, const Matrix& u, double sigma2) {
  const Index k = p.rows();
  const double inv_s2 = 1.0 / sigma2;
  const Matrix inner = inv_s2 * Matrix::Identity(k, k) + p.inverse();
  const Matrix middle = inner.inverse();
  return inv_s2 * (Matrix::Identity(u.rows(), u.rows()) - inv_s2 * (u * middle * u.transpose()));
}

/// Gain P U^T S^-1 after the Woodbury reduction: P (P + s^2 I)^-1 U^T.
[[nodiscard]] inline Matrix kalman_gain_woodbury(const Matrix& p, const Matrix& u, double sigma2) {
  const Index k = p.rows();
  const Matrix shifted = p + sigma2 * Matrix::Identity(k, k);
  // P (P + s2 I)^-1 = ((P + s2 I)^-1 P)^T since both are symmetric.
  const Matrix left = shifted.ldlt().solve(p).transpose();
  return left * u.transpose();
}

/// Gain with an explicit N x N innovation covariance S = U P U^T + s^2 I.
[[nodiscard]] inline Matrix kalman_gain_direct(const Matrix& p, const Matrix& u, double sigma2) {
  const Index n = u.rows();
  const Matrix s = u * p * u.transpose() + sigma2 * Matrix::Identity(n, n);
  // G = P U^T S^-1  <=>  G^T = S^-1 U P
  return s.ldlt().solve(u * p).transpose();
}

/// Step-by-step filter; kalman_run drives it over a residual matrix.
class KalmanFilter {
 public:
  KalmanFilter(Matrix u, Matrix transition, double sigma2, KalmanOptions options = {})
      : u_(std::move(u)), f_(std::move(transition)), options_(options) {
    const Index k = u_.cols();
    require(f_.rows() == k && f_.cols() == k, ErrorCode::alignment_error, "transition must be K x K");
    state_.alpha = Vector::Zero(k);
    state_.P = Matrix::Identity(k, k);
    state_.Q = options_.q0 * Matrix::Identity(k, k);
    state_.sigma2_perp = std::max(sigma2, options_.sigma2_floor);
  }

  /// Predict from the current state, then update on the demeaned
  /// observation. Returns the predicted modal state alpha_{t|t-1}.
  Vector step(const Eigen::Ref<const Vector>& observed, Index quarter = -1) {
    const Index k = u_.cols();
    const Vector alpha_pred = f_ * state_.alpha;
    const Matrix p_pred = f_ * state_.P * f_.transpose() + state_.Q;
    const Vector innovation = observed - u_ * alpha_pred;
    if (!innovation.allFinite()) {
      throw Error(ErrorCode::filter_divergence, "non-finite innovation at quarter " + std::to_string(quarter));
    }
    const double s2 = state_.sigma2_perp;
    last_gain_ = options_.direct_inverse ? kalman_gain_direct(p_pred, u_, s2) : kalman_gain_woodbury(p_pred, u_, s2);
    const Vector alpha_upd = alpha_pred + last_gain_ * innovation;
    const Matrix ikh = Matrix::Identity(k, k) - last_gain_ * u_;
    // Joseph form
    state_.P = ikh * p_pred * ikh.transpose() + s2 * (last_gain_ * last_gain_.transpose());
    const Vector nu = alpha_upd - alpha_pred;
    Matrix q = (1.0 - options_.lambda_q) * state_.Q + options_.lambda_q * (nu * nu.transpose());
    state_.Q = 0.5 * (q + q.transpose()) + options_.q_floor * Matrix::Identity(k, k);
    state_.alpha = alpha_upd;
    if (!state_.alpha.allFinite() || !state_.P.allFinite()) {
      throw Error(ErrorCode::filter_divergence, "non-finite state at quarter " + std::to_string(quarter));
    }
    return alpha_pred;
  }

  [[nodiscard]] const KalmanState& state() const noexcept { return state_; }
  [[nodiscard]] const Matrix& last_gain() const noexcept { return last_gain_; }
  [[nodiscard]] const Matrix& basis() const noexcept { return u_; }
  [[nodiscard]] const Matrix& transition() const noexcept { return f_; }

 private:
  Matrix u_;
  Matrix f_;
  KalmanOptions options_;
  KalmanState state_;
  Matrix last_gain_;
};

enum class TransitionMode { diag, full };

struct KalmanRun {
  Matrix forecasts;  // column t: U alpha_{t|t-1} + rbar, made before observing r_t
  KalmanState state;
  Matrix transition;  // F actually used
  Vector next_forecast;  // U F alpha_{T|T} + rbar
};

/// Runs the filter from (alpha0 = 0, P0 = I, Q0 = q0 I) through every
/// residual column. F is diag(A) or A, spectral-radius clipped.
[[nodiscard]] inline KalmanRun kalman_run(const SubspaceBasis& basis, const EwmDemeaner& demeaner,
                                          const Matrix& residuals, TransitionMode mode, KalmanOptions options = {},
                                          double cap = kSpectralCap) {
  require(basis.K <= basis.U.rows(), ErrorCode::precondition, "basis rank exceeds N");
  require(residuals.rows() == basis.U.rows() && demeaner.mean.size() == residuals.rows(), ErrorCode::alignment_error,
          "residuals, basis and demeaner must share N");
  const Matrix raw_f = mode == TransitionMode::diag ? Matrix(basis.A_reduced.diagonal().asDiagonal())
                                                    : basis.A_reduced;
  const Matrix f = spectral_radius_clip(raw_f, cap);
  const Matrix demeaned = residuals.colwise() - demeaner.mean;
  KalmanFilter filter(basis.U, f, projection_noise(basis.U, demeaned), options);
  KalmanRun run;
  run.transition = f;
  run.forecasts.resize(residuals.rows(), residuals.cols());
  for (Index t = 0; t < residuals.cols(); ++t) {
    const Vector predicted = filter.step(demeaned.col(t), t);
    run.forecasts.col(t) = basis.U * predicted + demeaner.mean;
  }
  run.state = filter.state();
  run.next_forecast = basis.U * (f * run.state.alpha) + demeaner.mean;
  return run;
}

// ---------------------------------------------------------------------------
// Fitted Stage-2 engines behind one interface

enum class EngineKind {
  pca_diag,         // PCA + per-component AR(1)
  pca_ridge,        // PCA + ridge VAR
  pca_var,          // PCA + unrestricted VAR
  dmd_diag,         // DMD basis, diag(A) transition
  dmd_full,         // DMD basis, full reduced propagator
  pca_diag_kalman,  // PCA + diag AR inside the Kalman filter
  dmd_diag_kalman,
  dmd_full_kalman,
  ridge_full,  // N x N ridge on residual transitions
};

[[nodiscard]] inline std::string_view to_string(EngineKind kind) noexcept {
  switch (kind) {
    case EngineKind::pca_diag: return "pca_diag";
    case EngineKind::pca_ridge: return "pca_ridge";
    case EngineKind::pca_var: return "pca_var";
    case EngineKind::dmd_diag: return "dmd_diag";
    case EngineKind::dmd_full: return "dmd_full";
    case EngineKind::pca_diag_kalman: return "pca_diag_kalman";
    case EngineKind::dmd_diag_kalman: return "dmd_diag_kalman";
    case EngineKind::dmd_full_kalman: return "dmd_full_kalman";
    case EngineKind::ridge_full: return "ridge_full";
  }
  return "pca_ridge";
}

[[nodiscard]] inline EngineKind parse_engine(std::string_view s) {
  for (const auto k : {EngineKind::pca_diag, EngineKind::pca_ridge, EngineKind::pca_var, EngineKind::dmd_diag,
                       EngineKind::dmd_full, EngineKind::pca_diag_kalman, EngineKind::dmd_diag_kalman,
                       EngineKind::dmd_full_kalman, EngineKind::ridge_full}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::invalid_config, "unknown engine '" + std::string(s) + "'");
}

[[nodiscard]] constexpr bool uses_subspace(EngineKind kind) noexcept { return kind != EngineKind::ridge_full; }

struct EngineOptions {
  EngineKind kind = EngineKind::pca_ridge;
  Index rank = 8;
  double ridge_lambda = 1.0;                        // ridge VAR penalty
  std::vector<double> ridge_alphas{0.1, 1.0, 10.0};  // ridge-full grid, multiplied by N of the fitted scope
  double half_life = kDefaultHalfLife;
  double spectral_cap = kSpectralCap;
  double rho_clip = 0.995;
  KalmanOptions kalman;
};

/// One fitted Stage-2 model over some actor scope (N rows).
struct ResidualModel {
  EngineKind kind = EngineKind::pca_ridge;
  EwmDemeaner demeaner;
  Matrix U;           // N x K (subspace engines)
  Matrix transition;  // K x K
  Matrix coeffs;      // N x N (ridge_full)
  double alpha = 0.0;
  bool kalman = false;
  Vector kalman_forecast;  // U F alpha_{T|T} + rbar
  KalmanState kalman_state;
};

[[nodiscard]] constexpr bool is_kalman(EngineKind kind) noexcept {
  return kind == EngineKind::pca_diag_kalman || kind == EngineKind::dmd_diag_kalman ||
         kind == EngineKind::dmd_full_kalman;
}

/// Fits the configured engine on raw Stage-1 residuals (N x T_r); EWM
/// demeaning happens here.
[[nodiscard]] inline ResidualModel fit_residual_model(const Matrix& residuals, const EngineOptions& opt) {
  auto [demeaned, demeaner] = ewm_demean(residuals, opt.half_life);
  ResidualModel model;
  model.kind = opt.kind;
  model.demeaner = std::move(demeaner);
  const Index n = residuals.rows();

  if (opt.kind == EngineKind::ridge_full) {
    auto fit = fit_ridge_full(demeaned, scaled_alphas(opt.ridge_alphas, static_cast<double>(n)));
    model.coeffs = std::move(fit.coeffs);
    model.alpha = fit.alpha;
    return model;
  }

  const bool dmd = opt.kind == EngineKind::dmd_diag || opt.kind == EngineKind::dmd_full ||
                   opt.kind == EngineKind::dmd_diag_kalman || opt.kind == EngineKind::dmd_full_kalman;
  SubspaceBasis basis = dmd ? exact_dmd(demeaned, opt.rank, opt.spectral_cap)
                            : fit_pca_basis(demeaned, opt.rank, model.demeaner.weights);
  model.U = basis.U;
  switch (opt.kind) {
    case EngineKind::pca_diag:
    case EngineKind::pca_diag_kalman:
      model.transition = fit_diag_ar(basis.U.transpose() * demeaned, opt.rho_clip);
      break;
    case EngineKind::pca_ridge:
      model.transition = fit_ridge_var(basis.U.transpose() * demeaned, opt.ridge_lambda).coeffs;
      break;
    case EngineKind::pca_var:
      model.transition = fit_ridge_var(basis.U.transpose() * demeaned, 0.0).coeffs;
      break;
    case EngineKind::dmd_diag:
    case EngineKind::dmd_diag_kalman:
      model.transition = spectral_radius_clip(Matrix(basis.A_reduced.diagonal().asDiagonal()), opt.spectral_cap);
      break;
    case EngineKind::dmd_full:
    case EngineKind::dmd_full_kalman:
      model.transition = basis.A_reduced;
      break;
    case EngineKind::ridge_full:
      break;
  }
  if (is_kalman(opt.kind)) {
    basis.A_reduced = model.transition;
    const auto run = kalman_run(basis, model.demeaner, residuals,
                                opt.kind == EngineKind::dmd_full_kalman ? TransitionMode::full : TransitionMode::diag,
                                opt.kalman, opt.spectral_cap);
    model.kalman = true;
    model.transition = run.transition;
    model.kalman_forecast = run.next_forecast;
    model.kalman_state = run.state;
  }
  return model;
}

/// One-step residual forecast. Subspace engines: U F U^T (r_last - rbar) +
/// rbar; ridge-full: C (r_last - rbar) + rbar; Kalman engines use the filtered
/// state at the last training residual, which is r_last.
[[nodiscard]] inline Vector forecast_residual(const ResidualModel& model, const Eigen::Ref<const Vector>& r_last) {
  require(r_last.size() == model.demeaner.mean.size(), ErrorCode::alignment_error,
          "r_last has " + std::to_string(r_last.size()) + " entries, model has " +
              std::to_string(model.demeaner.mean.size()));
  if (model.kalman) return model.kalman_forecast;
  const Vector centered = r_last - model.demeaner.mean;
  if (model.kind == EngineKind::ridge_full) return model.coeffs * centered + model.demeaner.mean;
  return model.U * (model.transition * (model.U.transpose() * centered)) + model.demeaner.mean;
}

/// Zero every Stage-2 operator, including the EWM intercept, so the model
/// contributes exactly nothing.
inline void zero_out(ResidualModel& model) {
  model.U.setZero();
  model.transition.setZero();
  model.coeffs.setZero();
  model.demeaner.mean.setZero();
  if (model.kalman) model.kalman_forecast.setZero();
}

}  // namespace hetpanel
