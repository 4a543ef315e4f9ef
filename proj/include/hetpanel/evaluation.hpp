#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hetpanel/mixture.hpp"
#include "hetpanel/panel.hpp"

namespace hetpanel {

/// Forecasts and actuals for the four quarters of one test year.
struct WindowResult {
  int test_year = 0;
  std::vector<std::string> quarters;  // the four forecast targets
  Matrix forecasts;                   // N x 4
  Matrix actuals;                     // N x 4
  Vector per_actor_test_means;
  Vector train_means;                // over the trailing train_years*4 quarters before the test year
  std::vector<Index> train_sizes;    // training quarters behind each of the four forecasts
  std::vector<std::string> warnings;
};

/// Column layout of one test year inside a panel.
struct WindowPlan {
  int test_year = 0;
  Index first_test_col = 0;  // column of <year>Q1
  Index first_train_col = 0;
  Index base_train_len = 0;  // train_years * 4
};

/// Resolves the calendar against the panel's quarter labels. Training and
/// test quarters must be present and consecutive.
[[nodiscard]] inline std::vector<WindowPlan> plan_windows(const Panel& panel, const RollingWindowSpec& cal) {
  require(cal.train_years >= 1, ErrorCode::infeasible_calendar, "train_years must be >= 1");
  require(!cal.test_years.empty(), ErrorCode::infeasible_calendar, "no test years");
  std::vector<WindowPlan> plans;
  for (const int year : cal.test_years) {
    const auto col = panel.quarter_index(Quarter{year, 1}.label());
    require(col.has_value(), ErrorCode::infeasible_calendar, std::to_string(year) + "Q1 not in panel");
    WindowPlan w;
    w.test_year = year;
    w.first_test_col = *col;
    w.base_train_len = 4 * cal.train_years;
    w.first_train_col = *col - w.base_train_len;
    require(w.first_train_col >= 0, ErrorCode::infeasible_calendar,
            "test year " + std::to_string(year) + " lacks " + std::to_string(w.base_train_len) + " training quarters");
    require(*col + 3 < panel.n_quarters(), ErrorCode::infeasible_calendar,
            "test year " + std::to_string(year) + " is incomplete");
    const int first_ord = parse_quarter(panel.quarters[static_cast<std::size_t>(w.first_train_col)])->ordinal();
    for (Index c = w.first_train_col; c <= *col + 3; ++c) {
      const auto q = parse_quarter(panel.quarters[static_cast<std::size_t>(c)]);
      require(q && q->ordinal() == first_ord + static_cast<int>(c - w.first_train_col), ErrorCode::infeasible_calendar,
              "quarters around test year " + std::to_string(year) + " are not consecutive");
    }
    plans.push_back(w);
  }
  return plans;
}

/// Quarterly expanding refit: the forecast for quarter q (0..3) of the test
/// year is made from a fit on train_years*4 + q quarters ending at the
/// quarter before it (20..23 at five training years).
[[nodiscard]] inline std::vector<WindowResult> rolling_oos_evaluate(const Panel& panel, const ArchitectureSpec& spec,
                                                                    const RollingWindowSpec& cal) {
  if (needs_partition(spec.kind)) validate(spec.partition, panel);
  std::map<std::string, std::vector<Index>> rows;
  if (needs_partition(spec.kind)) rows = block_rows(panel, spec.partition);
  std::vector<WindowResult> results;
  for (const auto& plan : plan_windows(panel, cal)) {
    WindowResult w;
    w.test_year = plan.test_year;
    w.forecasts.resize(panel.n_actors(), 4);
    w.actuals = panel.values.middleCols(plan.first_test_col, 4);
    w.per_actor_test_means = w.actuals.rowwise().mean();
    w.train_means = panel.values.middleCols(plan.first_train_col, plan.base_train_len).rowwise().mean();
    for (Index q = 0; q < 4; ++q) {
      const Index origin = plan.first_test_col + q - 1;
      const Index len = plan.base_train_len + q;
      const Matrix train = panel.values.middleCols(plan.first_train_col, len);
      const auto fit = fit_architecture(spec, train, rows);
      w.forecasts.col(q) = forecast_architecture(fit, panel.values.col(origin), panel.values.col(origin - 1));
      w.quarters.push_back(panel.quarters[static_cast<std::size_t>(plan.first_test_col + q)]);
      w.train_sizes.push_back(len);
      w.warnings.insert(w.warnings.end(), fit.warnings.begin(), fit.warnings.end());
    }
    results.push_back(std::move(w));
  }
  return results;
}

// ---------------------------------------------------------------------------
// Accuracy metrics

enum class R2Convention { test_mean, train_mean };

/// 1 - sum (y - yhat)^2 / sum (y - ybar_ref)^2 over the selected actors and
/// the four quarters. `rows` empty means all actors.
[[nodiscard]] inline double oos_r2(const WindowResult& w, R2Convention convention,
                                   const std::vector<Index>& rows = {}) {
  const Vector& ref = convention == R2Convention::test_mean ? w.per_actor_test_means : w.train_means;
  double sse = 0.0;
  double sst = 0.0;
  auto accumulate = [&](Index i) {
    for (Index q = 0; q < w.actuals.cols(); ++q) {
      const double e = w.actuals(i, q) - w.forecasts(i, q);
      const double d = w.actuals(i, q) - ref(i);
      sse += e * e;
      sst += d * d;
    }
  };
  if (rows.empty()) {
    for (Index i = 0; i < w.actuals.rows(); ++i) accumulate(i);
  } else {
    for (const Index i : rows) accumulate(i);
  }
  require(sst > 0.0, ErrorCode::degenerate_window, "zero denominator in test year " + std::to_string(w.test_year));
  return 1.0 - sse / sst;
}

[[nodiscard]] inline std::vector<double> window_r2(const std::vector<WindowResult>& results, R2Convention convention,
                                                   const std::vector<Index>& rows = {}) {
  std::vector<double> out;
  out.reserve(results.size());
  for (const auto& w : results) out.push_back(oos_r2(w, convention, rows));
  return out;
}

[[nodiscard]] inline double mean_of(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (const double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Mean of the per-window R^2 values.
[[nodiscard]] inline double mean_r2(const std::vector<WindowResult>& results, R2Convention convention,
                                    const std::vector<Index>& rows = {}) {
  return mean_of(window_r2(results, convention, rows));
}

[[nodiscard]] inline double mae(const WindowResult& w) {
  return (w.actuals - w.forecasts).cwiseAbs().mean();
}

[[nodiscard]] inline double mae(const std::vector<WindowResult>& results) {
  double total = 0.0;
  Index cells = 0;
  for (const auto& w : results) {
    total += (w.actuals - w.forecasts).cwiseAbs().sum();
    cells += w.actuals.size();
  }
  return cells == 0 ? 0.0 : total / static_cast<double>(cells);
}

[[nodiscard]] inline std::optional<double> pearson(const Vector& a, const Vector& b) {
  const Vector ac = a.array() - a.mean();
  const Vector bc = b.array() - b.mean();
  const double den = std::sqrt(ac.squaredNorm() * bc.squaredNorm());
  if (!(den > 0.0)) return std::nullopt;
  return ac.dot(bc) / den;
}

/// Cross-sectional Spearman correlation between forecasts and actuals, one
/// value per quarter; constant cross-sections give no value.
[[nodiscard]] inline std::vector<std::optional<double>> spearman_ic(const WindowResult& w) {
  require(w.actuals.rows() >= 3, ErrorCode::precondition, "IC needs N >= 3");
  std::vector<std::optional<double>> out;
  for (Index q = 0; q < w.actuals.cols(); ++q) {
    out.push_back(pearson(midranks(w.forecasts.col(q)), midranks(w.actuals.col(q))));
  }
  return out;
}

[[nodiscard]] inline std::vector<std::optional<double>> spearman_ic(const std::vector<WindowResult>& results) {
  std::vector<std::optional<double>> out;
  for (const auto& w : results) {
    const auto ic = spearman_ic(w);
    out.insert(out.end(), ic.begin(), ic.end());
  }
  return out;
}

/// Correlation of pooled forecast errors between two runs of the same
/// windows (the method-equivalence diagnostic).
[[nodiscard]] inline std::optional<double> forecast_error_correlation(const std::vector<WindowResult>& a,
                                                                      const std::vector<WindowResult>& b) {
  require(a.size() == b.size(), ErrorCode::alignment_error, "result sets differ in window count");
  std::vector<double> ea;
  std::vector<double> eb;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const Matrix da = a[k].actuals - a[k].forecasts;
    const Matrix db = b[k].actuals - b[k].forecasts;
    require(da.rows() == db.rows() && da.cols() == db.cols(), ErrorCode::alignment_error, "window shapes differ");
    ea.insert(ea.end(), da.data(), da.data() + da.size());
    eb.insert(eb.end(), db.data(), db.data() + db.size());
  }
  return pearson(Eigen::Map<Vector>(ea.data(), static_cast<Index>(ea.size())),
                 Eigen::Map<Vector>(eb.data(), static_cast<Index>(eb.size())));
}

enum class LossKind { window_r2, squared_error };

/// Loss differentials, positive when `a` is better. window_r2: one value per
/// window (R2_a - R2_b). squared_error: one value per forecast quarter
/// (cross-sectional MSE_b - MSE_a), in time order.
[[nodiscard]] inline std::vector<double> loss_differentials(const std::vector<WindowResult>& a,
                                                            const std::vector<WindowResult>& b, LossKind kind,
                                                            R2Convention convention = R2Convention::test_mean) {
  require(a.size() == b.size(), ErrorCode::alignment_error, "result sets differ in window count");
  std::vector<double> d;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (kind == LossKind::window_r2) {
      d.push_back(oos_r2(a[k], convention) - oos_r2(b[k], convention));
    } else {
      for (Index q = 0; q < a[k].actuals.cols(); ++q) {
        const double mse_a = (a[k].actuals.col(q) - a[k].forecasts.col(q)).squaredNorm();
        const double mse_b = (b[k].actuals.col(q) - b[k].forecasts.col(q)).squaredNorm();
        d.push_back((mse_b - mse_a) / static_cast<double>(a[k].actuals.rows()));
      }
    }
  }
  return d;
}


/// Mean over windows of R2_a - R2_b restricted to each block's rows.
[[nodiscard]] inline std::map<std::string, double> per_block_decomposition(
    const std::vector<WindowResult>& a, const std::vector<WindowResult>& b,
    const std::map<std::string, std::vector<Index>>& rows, R2Convention convention = R2Convention::test_mean) {
  require(a.size() == b.size(), ErrorCode::alignment_error, "result sets differ in window count");
  std::map<std::string, double> out;
  for (const auto& [block, idx] : rows) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += oos_r2(a[k], convention, idx) - oos_r2(b[k], convention, idx);
    out[block] = a.empty() ? 0.0 : s / static_cast<double>(a.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partition-independent pieces of the pooled-Stage-1 architectures (G1, S1,
// M1, M2), computed once per forecast and reused across partitions.

struct PreparedStep {
  Vector stage1_forecast;
  Vector r_last;
  Matrix residuals;  // Stage-1 residuals of the training window
  std::optional<Vector> global_forecast;
  std::vector<std::string> warnings;
};

struct PreparedWindow {
  WindowResult frame;  // forecasts left empty
  std::vector<PreparedStep> steps;
};

struct PreparedEvaluation {
  std::vector<PreparedWindow> windows;
  ArchitectureSpec spec;  // engine settings shared by all partitions
};

[[nodiscard]] inline PreparedEvaluation prepare_evaluation(const Panel& panel, const ArchitectureSpec& spec,
                                                           const RollingWindowSpec& cal) {
  PreparedEvaluation prep;
  prep.spec = spec;
  for (const auto& plan : plan_windows(panel, cal)) {
    PreparedWindow pw;
    pw.frame.test_year = plan.test_year;
    pw.frame.actuals = panel.values.middleCols(plan.first_test_col, 4);
    pw.frame.per_actor_test_means = pw.frame.actuals.rowwise().mean();
    pw.frame.train_means = panel.values.middleCols(plan.first_train_col, plan.base_train_len).rowwise().mean();
    for (Index q = 0; q < 4; ++q) {
      const Index origin = plan.first_test_col + q - 1;
      const Index len = plan.base_train_len + q;
      const Matrix train = panel.values.middleCols(plan.first_train_col, len);
      PreparedStep step;
      const auto pooled = fit_pooled_ar1_fe_or_mean(train, spec.rho_clip);
      if (pooled.degenerate) step.warnings.emplace_back("pooled Stage 1 degenerate; forecasting actor means");
      const auto params = actor_params(pooled);
      const Vector y_origin = panel.values.col(origin);
      const Vector y_prev = panel.values.col(origin - 1);
      step.stage1_forecast = forecast_stage1(params, y_origin);
      step.r_last = y_origin - (params.means + params.rho.cwiseProduct(y_prev - params.means));
      step.residuals = stage1_residuals(params, train);
      const auto global = detail::fit_global(step.residuals, spec.global_engine, step.warnings);
      step.global_forecast = forecast_residual(global, step.r_last);
      pw.frame.quarters.push_back(panel.quarters[static_cast<std::size_t>(plan.first_test_col + q)]);
      pw.frame.train_sizes.push_back(len);
      pw.steps.push_back(std::move(step));
    }
    prep.windows.push_back(std::move(pw));
  }
  return prep;
}

[[nodiscard]] constexpr bool supports_cached(ArchKind kind) noexcept {
  return kind == ArchKind::G1 || kind == ArchKind::S1 || kind == ArchKind::M1 || kind == ArchKind::M2;
}

/// One window of `kind` under the given partition, from the prepared pieces.
/// Same arithmetic as fit_architecture + forecast_architecture.
[[nodiscard]] inline WindowResult evaluate_prepared_window(const PreparedWindow& pw, const ArchitectureSpec& base,
                                                           ArchKind kind, const BlockPartition& partition,
                                                           const std::map<std::string, std::vector<Index>>& rows) {
  require(supports_cached(kind), ErrorCode::precondition,
          "no cached path for " + std::string(to_string(kind)));
  ArchitectureSpec spec = base;
  spec.kind = kind;
  spec.partition = partition;
  WindowResult w = pw.frame;
  const Index n = w.actuals.rows();
  w.forecasts.resize(n, static_cast<Index>(pw.steps.size()));
  for (std::size_t q = 0; q < pw.steps.size(); ++q) {
    const auto& step = pw.steps[q];
    w.warnings.insert(w.warnings.end(), step.warnings.begin(), step.warnings.end());
    std::vector<Route> routes(static_cast<std::size_t>(n), Route::global);
    std::vector<std::pair<std::string, const std::vector<Index>*>> local;
    if (kind != ArchKind::G1) {
      for (const auto& [block, idx] : rows) {
        if (!partition.is_local_block(block)) continue;
        local.emplace_back(block, &idx);
        for (const Index i : idx) routes[static_cast<std::size_t>(i)] = kind == ArchKind::S1 ? Route::none : Route::local;
      }
    }
    Vector out = step.stage1_forecast;
    for (Index i = 0; i < n; ++i) {
      if (routes[static_cast<std::size_t>(i)] == Route::global) out(i) += (*step.global_forecast)(i);
    }
    if (kind == ArchKind::M1 || kind == ArchKind::M2) {
      for (const auto& [block, idx] : local) {
        const auto lm = detail::fit_local(step.residuals, *idx, block, spec, kind == ArchKind::M1, w.warnings);
        const Vector l = forecast_residual(lm.model, select_rows(step.r_last, lm.rows));
        for (std::size_t k = 0; k < lm.rows.size(); ++k) out(lm.rows[k]) += l(static_cast<Index>(k));
      }
    }
    w.forecasts.col(static_cast<Index>(q)) = out;
  }
  return w;
}

[[nodiscard]] inline std::vector<WindowResult> evaluate_prepared(const PreparedEvaluation& prep, ArchKind kind,
                                                                 const BlockPartition& partition,
                                                                 const std::map<std::string, std::vector<Index>>& rows) {
  std::vector<WindowResult> out;
  out.reserve(prep.windows.size());
  for (const auto& pw : prep.windows) out.push_back(evaluate_prepared_window(pw, prep.spec, kind, partition, rows));
  return out;
}

}  // namespace hetpanel
