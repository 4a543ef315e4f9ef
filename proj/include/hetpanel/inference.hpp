#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "hetpanel/error.hpp"
#include "hetpanel/rng.hpp"

namespace hetpanel {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] bool contains(double x) const noexcept { return lo <= x && x <= hi; }
};

namespace detail {

[[nodiscard]] inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (const double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

/// Sample autocovariance at lag j with divisor n.
[[nodiscard]] inline double autocovariance(std::span<const double> x, std::size_t lag, double mu) {
  const std::size_t n = x.size();
  double s = 0.0;
  for (std::size_t t = lag; t < n; ++t) s += (x[t] - mu) * (x[t - lag] - mu);
  return s / static_cast<double>(n);
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
[[nodiscard]] inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.size() == 1) return sorted.front();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

[[nodiscard]] inline double quantile(std::vector<double> x, double p) {
  require(!x.empty(), ErrorCode::precondition, "quantile of empty data");
  std::sort(x.begin(), x.end());
  return detail::quantile_sorted(x, p);
}

[[nodiscard]] inline double student_t_two_sided_p(double t, double df) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

[[nodiscard]] inline double student_t_one_sided_p(double t, double df) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const boost::math::students_t dist(df);
  return boost::math::cdf(boost::math::complement(dist, t));
}

// ---------------------------------------------------------------------------
// Diebold-Mariano with the Harvey-Leybourne-Newbold correction

struct DmResult {
  double t = 0.0;
  double p = 1.0;
  double hln_factor = 1.0;
  double mean = 0.0;
  std::size_t n = 0;
};

/// sqrt((n + 1 - 2h + h(h-1)/n) / n)
[[nodiscard]] inline double hln_factor(std::size_t n, std::size_t h) {
  const double nn = static_cast<double>(n);
  const double hh = static_cast<double>(h);
  return std::sqrt((nn + 1.0 - 2.0 * hh + hh * (hh - 1.0) / nn) / nn);
}

/// DM statistic on loss differentials: mean / sqrt(V/n), V = gamma_0 + 2
/// sum_{j<h} gamma_j, times the HLN factor when `apply_hln`. p from t(n-1),
/// two-sided.
[[nodiscard]] inline DmResult dm_test(std::span<const double> deltas, std::size_t horizon = 1, bool apply_hln = true) {
  require(deltas.size() >= 2, ErrorCode::precondition, "DM test needs n >= 2");
  require(horizon >= 1, ErrorCode::precondition, "horizon must be >= 1");
  DmResult r;
  r.n = deltas.size();
  r.mean = detail::mean(deltas);
  double v = detail::autocovariance(deltas, 0, r.mean);
  for (std::size_t j = 1; j < horizon && j < deltas.size(); ++j) v += 2.0 * detail::autocovariance(deltas, j, r.mean);
  const double scale = std::max(1.0, std::abs(r.mean));
  require(v > 1e-30 * scale * scale, ErrorCode::degenerate_dm, "zero-variance loss differentials");
  r.hln_factor = apply_hln ? hln_factor(r.n, horizon) : 1.0;
  r.t = r.hln_factor * r.mean / std::sqrt(v / static_cast<double>(r.n));
  r.p = student_t_two_sided_p(r.t, static_cast<double>(r.n - 1));
  return r;
}

/// Newey-West HAC variance with Bartlett weights 1 - j/(bw+1).
[[nodiscard]] inline double nw_hac_variance(std::span<const double> deltas, std::size_t bandwidth) {
  require(bandwidth < deltas.size(), ErrorCode::precondition, "bandwidth must be < n");
  const double mu = detail::mean(deltas);
  double v = detail::autocovariance(deltas, 0, mu);
  for (std::size_t j = 1; j <= bandwidth; ++j) {
    const double w = 1.0 - static_cast<double>(j) / static_cast<double>(bandwidth + 1);
    v += 2.0 * w * detail::autocovariance(deltas, j, mu);
  }
  return v;
}

[[nodiscard]] inline double nw_hac_t(std::span<const double> deltas, std::size_t bandwidth) {
  const double v = nw_hac_variance(deltas, bandwidth);
  const double mu = detail::mean(deltas);
  if (!(v > 0.0)) return mu == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mu);
  return mu / std::sqrt(v / static_cast<double>(deltas.size()));
}

// ---------------------------------------------------------------------------
// Bootstraps. Resample b draws from its own stream seeded by
// derive_seed(seed, b), so results do not depend on scheduling.

struct BootstrapResult {
  Interval ci;
  std::uint64_t seed = 0;
  std::size_t resamples = 0;
  std::size_t block_len = 1;
};

/// Overlapping blocks of length L with uniform starts in [0, n-L],
/// concatenated and truncated to n; percentile CI of the resample means.
[[nodiscard]] inline BootstrapResult moving_block_bootstrap_ci(std::span<const double> deltas, std::size_t block_len,
                                                               std::size_t resamples = 10000, double level = 0.95,
                                                               std::uint64_t seed = 20240101) {
  const std::size_t n = deltas.size();
  require(n >= 2, ErrorCode::precondition, "bootstrap needs n >= 2");
  require(block_len >= 1 && block_len <= n, ErrorCode::precondition, "block length must be in [1, n]");
  require(resamples >= 1, ErrorCode::precondition, "resamples must be >= 1");
  require(level > 0.0 && level < 1.0, ErrorCode::precondition, "level must be in (0, 1)");
  const std::size_t starts = n - block_len + 1;
  std::vector<double> means(resamples);
  for (std::size_t b = 0; b < resamples; ++b) {
    SplitMix64 engine(derive_seed(seed, b));
    double s = 0.0;
    std::size_t filled = 0;
    while (filled < n) {
      const std::size_t start = uniform_index(engine, starts);
      for (std::size_t k = 0; k < block_len && filled < n; ++k, ++filled) s += deltas[start + k];
    }
    means[b] = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double tail = 0.5 * (1.0 - level);
  BootstrapResult r;
  r.ci = {detail::quantile_sorted(means, tail), detail::quantile_sorted(means, 1.0 - tail)};
  r.seed = seed;
  r.resamples = resamples;
  r.block_len = block_len;
  return r;
}

/// Paired-window percentile bootstrap (iid resampling of windows).
[[nodiscard]] inline BootstrapResult paired_bootstrap_ci(std::span<const double> deltas, std::size_t resamples = 10000,
                                                         double level = 0.95, std::uint64_t seed = 20240101) {
  return moving_block_bootstrap_ci(deltas, 1, resamples, level, seed);
}

// ---------------------------------------------------------------------------

/// One-sided exact binomial tail P(X >= wins | total, 1/2).
[[nodiscard]] inline double sign_test(std::size_t wins, std::size_t total) {
  require(wins <= total, ErrorCode::precondition, "wins must be <= total");
  // log C(n, k) via lgamma keeps large totals finite.
  const double n = static_cast<double>(total);
  double p = 0.0;
  for (std::size_t k = wins; k <= total; ++k) {
    const double kk = static_cast<double>(k);
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(n - kk + 1.0) - n * std::log(2.0));
  }
  return std::min(1.0, p);
}

[[nodiscard]] inline double lag1_autocorrelation(std::span<const double> x) {
  const double mu = detail::mean(x);
  const double g0 = detail::autocovariance(x, 0, mu);
  if (!(g0 > 0.0)) return 0.0;
  return detail::autocovariance(x, 1, mu) / g0;
}

[[nodiscard]] inline double effective_sample_size(double n, double rho) { return n * (1.0 - rho) / (1.0 + rho); }

/// n (1 - rho_d) / (1 + rho_d) with rho_d the lag-1 autocorrelation; zero
/// variance gives n.
[[nodiscard]] inline double effective_sample_size(std::span<const double> deltas) {
  require(deltas.size() >= 3, ErrorCode::precondition, "n_eff needs n >= 3");
  const double mu = detail::mean(deltas);
  if (!(detail::autocovariance(deltas, 0, mu) > 0.0)) return static_cast<double>(deltas.size());
  return effective_sample_size(static_cast<double>(deltas.size()), lag1_autocorrelation(deltas));
}

/// Holm step-down at `alpha`: sort ascending, reject while p_(k) <=
/// alpha / (m - k + 1). Decisions returned in input order.
[[nodiscard]] inline std::vector<bool> holm_bonferroni(std::span<const double> pvals, double alpha = 0.05) {
  require(!pvals.empty(), ErrorCode::precondition, "Holm needs at least one p-value");
  const std::size_t m = pvals.size();
  std::vector<std::size_t> order(m);
  for (std::size_t k = 0; k < m; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
  std::vector<bool> reject(m, false);
  for (std::size_t k = 0; k < m; ++k) {
    if (pvals[order[k]] <= alpha / static_cast<double>(m - k)) {
      reject[order[k]] = true;
    } else {
      break;
    }
  }
  return reject;
}

/// Ljung-Box Q at the given lag and its chi-square p-value.
struct LjungBox {
  double q = 0.0;
  double p = 1.0;
};

[[nodiscard]] inline LjungBox ljung_box(std::span<const double> x, std::size_t lags = 1) {
  const std::size_t n = x.size();
  require(n > lags + 1, ErrorCode::precondition, "Ljung-Box needs n > lags + 1");
  const double mu = detail::mean(x);
  const double g0 = detail::autocovariance(x, 0, mu);
  LjungBox r;
  if (!(g0 > 0.0)) return r;
  for (std::size_t k = 1; k <= lags; ++k) {
    const double rho = detail::autocovariance(x, k, mu) / g0;
    r.q += rho * rho / static_cast<double>(n - k);
  }
  r.q *= static_cast<double>(n) * static_cast<double>(n + 2);
  const boost::math::chi_squared dist(static_cast<double>(lags));
  r.p = boost::math::cdf(boost::math::complement(dist, r.q));
  return r;
}

// ---------------------------------------------------------------------------

struct ComparisonOptions {
  std::size_t resamples = 10000;
  double level = 0.95;
  std::uint64_t seed = 20240101;
  std::vector<std::size_t> hac_bandwidths{1, 2, 3};
  std::vector<std::size_t> block_lengths{2, 3};
};

/// The full comparison battery on one set of loss differentials.
struct ComparisonReport {
  double delta_mean = 0.0;
  Interval bootstrap_ci;
  double dm_t = std::numeric_limits<double>::quiet_NaN();
  double dm_p = std::numeric_limits<double>::quiet_NaN();
  double hln = 1.0;
  bool dm_degenerate = false;
  std::map<std::size_t, double> hac_t;
  std::map<std::size_t, Interval> block_ci;
  std::size_t sign_wins = 0;
  std::size_t sign_total = 0;
  double sign_p = 1.0;
  double n_eff = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> deltas;
};

[[nodiscard]] inline ComparisonReport compare_deltas(std::span<const double> deltas, const ComparisonOptions& opt = {}) {
  require(deltas.size() >= 2, ErrorCode::precondition, "comparison needs >= 2 differentials");
  ComparisonReport r;
  r.deltas.assign(deltas.begin(), deltas.end());
  r.delta_mean = detail::mean(deltas);
  r.seed = opt.seed;
  r.bootstrap_ci = paired_bootstrap_ci(deltas, opt.resamples, opt.level, opt.seed).ci;
  try {
    const auto dm = dm_test(deltas, 1, true);
    r.dm_t = dm.t;
    r.dm_p = dm.p;
    r.hln = dm.hln_factor;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::degenerate_dm) throw;
    r.dm_degenerate = true;
    r.hln = hln_factor(deltas.size(), 1);
  }
  for (const auto bw : opt.hac_bandwidths) {
    if (bw < deltas.size()) r.hac_t[bw] = nw_hac_t(deltas, bw);
  }
  for (const auto len : opt.block_lengths) {
    if (len <= deltas.size()) {
      r.block_ci[len] = moving_block_bootstrap_ci(deltas, len, opt.resamples, opt.level, opt.seed).ci;
    }
  }
  r.sign_total = deltas.size();
  r.sign_wins = static_cast<std::size_t>(std::count_if(deltas.begin(), deltas.end(), [](double d) { return d > 0.0; }));
  r.sign_p = sign_test(r.sign_wins, r.sign_total);
  r.n_eff = deltas.size() >= 3 ? effective_sample_size(deltas) : static_cast<double>(deltas.size());
  return r;
}

}  // namespace hetpanel
