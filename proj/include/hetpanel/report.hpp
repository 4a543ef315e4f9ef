#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hetpanel/evaluation.hpp"
#include "hetpanel/geometry.hpp"
#include "hetpanel/inference.hpp"
#include "hetpanel/panel_io.hpp"
#include "hetpanel/validation.hpp"

namespace hetpanel {

/// Fixed-precision number for markdown; NaN prints as "n/a".
[[nodiscard]] inline std::string fixed(double x, int digits = 4) {
  if (std::isnan(x)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

[[nodiscard]] inline std::string csv_number(double x) { return std::isnan(x) ? std::string("nan") : format_double(x); }

[[nodiscard]] inline std::string format_interval(const Interval& ci, int digits = 4) {
  return "[" + fixed(ci.lo, digits) + ", " + fixed(ci.hi, digits) + "]";
}

// ---------------------------------------------------------------------------
// Per-window evaluation

/// arch,test_year,r2,mae,ic,min_train,max_train,warnings; ic is the mean
/// Spearman IC over the quarters where it is defined.
inline void write_window_csv(std::ostream& out, const std::string& arch, const std::vector<WindowResult>& windows,
                             R2Convention conv) {
  out << "arch,test_year,r2,mae,ic,min_train,max_train,warnings\n";
  for (const auto& w : windows) {
    double r2 = std::numeric_limits<double>::quiet_NaN();
    try {
      r2 = oos_r2(w, conv);
    } catch (const Error&) {
    }
    double ic_sum = 0.0;
    int ic_n = 0;
    if (w.actuals.rows() >= 3) {
      for (const auto& q : spearman_ic(w)) {
        if (q) {
          ic_sum += *q;
          ++ic_n;
        }
      }
    }
    const double ic = ic_n ? ic_sum / ic_n : std::numeric_limits<double>::quiet_NaN();
    const auto [lo, hi] = std::minmax_element(w.train_sizes.begin(), w.train_sizes.end());
    out << arch << ',' << w.test_year << ',' << csv_number(r2) << ',' << csv_number(mae(w)) << ','
        << csv_number(ic) << ','
        << (w.train_sizes.empty() ? 0 : *lo) << ',' << (w.train_sizes.empty() ? 0 : *hi) << ','
        << w.warnings.size() << '\n';
  }
}

/// test_year,quarter,actor_id,forecast,actual
inline void write_forecast_csv(std::ostream& out, const Panel& panel, const std::vector<WindowResult>& windows) {
  out << "test_year,quarter,actor_id,forecast,actual\n";
  for (const auto& w : windows) {
    for (Index q = 0; q < w.forecasts.cols(); ++q) {
      for (Index i = 0; i < w.forecasts.rows(); ++i) {
        out << w.test_year << ',' << w.quarters[static_cast<std::size_t>(q)] << ','
            << detail::csv_escape(panel.registry[static_cast<std::size_t>(i)].actor_id) << ','
            << format_double(w.forecasts(i, q)) << ',' << format_double(w.actuals(i, q)) << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Comparisons

inline void write_comparison_md(std::ostream& out, const std::string& a, const std::string& b,
                                const ComparisonReport& r, double level = 0.95) {
  const int pct = static_cast<int>(std::lround(level * 100.0));
  out << "## " << a << " vs " << b << "\n\n";
  out << "| statistic | value |\n|---|---|\n";
  out << "| mean delta | " << fixed(r.delta_mean) << " |\n";
  out << "| paired bootstrap " << pct << "% CI | " << format_interval(r.bootstrap_ci) << " |\n";
  if (r.dm_degenerate) {
    out << "| DM t (HLN) | degenerate |\n| DM p | n/a |\n";
  } else {
    out << "| DM t (HLN) | " << fixed(r.dm_t, 3) << " |\n";
    out << "| DM p | " << fixed(r.dm_p) << " |\n";
    out << "| HLN factor | " << fixed(r.hln) << " |\n";
  }
  for (const auto& [bw, t] : r.hac_t) out << "| NW-HAC t, bandwidth " << bw << " | " << fixed(t, 3) << " |\n";
  for (const auto& [len, ci] : r.block_ci) out << "| block bootstrap CI, L=" << len << " | " << format_interval(ci) << " |\n";
  out << "| sign test | " << r.sign_wins << "/" << r.sign_total << ", p = " << fixed(r.sign_p) << " |\n";
  out << "| effective n | " << fixed(r.n_eff, 2) << " |\n";
  out << "| seed | " << r.seed << " |\n\n";
}

/// test_year,delta
inline void write_deltas_csv(std::ostream& out, const std::vector<int>& test_years, const std::vector<double>& deltas) {
  out << "test_year,delta\n";
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    out << (k < test_years.size() ? test_years[k] : static_cast<int>(k)) << ',' << format_double(deltas[k]) << '\n';
  }
}

struct ArchitectureRow {
  std::string name;
  double mean_r2 = 0.0;
  std::optional<ComparisonReport> vs_baseline;  // absent for the baseline row itself
};

/// One row per architecture: mean R2, delta vs the baseline, DM t and p,
/// bootstrap CI and window wins.
inline void write_architecture_table_md(std::ostream& out, const std::vector<ArchitectureRow>& rows,
                                        const std::string& baseline) {
  out << "| arch | mean R2 | delta vs " << baseline << " | t | p | CI | W |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    out << "| " << row.name << " | " << fixed(row.mean_r2) << " | ";
    if (!row.vs_baseline) {
      out << "- | - | - | - | - |\n";
      continue;
    }
    const auto& r = *row.vs_baseline;
    out << (r.delta_mean >= 0 ? "+" : "") << fixed(r.delta_mean) << " | "
        << (r.dm_degenerate ? "n/a" : fixed(r.dm_t, 2)) << " | " << (r.dm_degenerate ? "n/a" : fixed(r.dm_p, 4))
        << " | " << format_interval(r.bootstrap_ci) << " | " << r.sign_wins << "/" << r.sign_total << " |\n";
  }
}

inline void write_architecture_table_csv(std::ostream& out, const std::vector<ArchitectureRow>& rows) {
  out << "arch,mean_r2,delta,dm_t,dm_p,ci_lo,ci_hi,wins,total\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& row : rows) {
    out << row.name << ',' << csv_number(row.mean_r2);
    if (row.vs_baseline) {
      const auto& r = *row.vs_baseline;
      out << ',' << csv_number(r.delta_mean) << ',' << csv_number(r.dm_degenerate ? nan : r.dm_t) << ','
          << csv_number(r.dm_degenerate ? nan : r.dm_p) << ',' << csv_number(r.bootstrap_ci.lo) << ','
          << csv_number(r.bootstrap_ci.hi) << ',' << r.sign_wins << ',' << r.sign_total << '\n';
    } else {
      out << ",,,,,,,\n";
    }
  }
}

/// block,delta
inline void write_block_decomposition_csv(std::ostream& out, const std::map<std::string, double>& per_block) {
  out << "block,delta\n";
  for (const auto& [block, d] : per_block) out << detail::csv_escape(block) << ',' << format_double(d) << '\n';
}

// ---------------------------------------------------------------------------
// Validation harness

/// perm,delta
inline void write_placebo_csv(std::ostream& out, const PlaceboResult& r) {
  out << "perm,delta\n";
  for (std::size_t k = 0; k < r.perm_deltas.size(); ++k) out << k << ',' << format_double(r.perm_deltas[k]) << '\n';
}

[[nodiscard]] inline nlohmann::json placebo_summary_json(const PlaceboResult& r) {
  return {{"real_delta", r.real_delta}, {"real_wins", r.real_wins}, {"n_perms", r.perm_deltas.size()},
          {"perm_mean", r.perm_mean},   {"perm_sd", r.perm_sd},     {"band_lo", r.band_lo},
          {"band_hi", r.band_hi},       {"z", r.z},                 {"p", r.p},
          {"seed", r.seed}};
}

inline void write_placebo_md(std::ostream& out, const PlaceboResult& r) {
  out << "| real delta | wins | perms | perm mean | perm sd | 95% band | z | p |\n";
  out << "|---|---|---|---|---|---|---|---|\n";
  out << "| " << fixed(r.real_delta) << " | " << r.real_wins << " | " << r.perm_deltas.size() << " | "
      << fixed(r.perm_mean) << " | " << fixed(r.perm_sd) << " | [" << fixed(r.band_lo) << ", " << fixed(r.band_hi)
      << "] | " << fixed(r.z, 2) << " | " << fixed(r.p) << " |\n";
}

/// name,size,delta,wins,windows
inline void write_candidate_scores_csv(std::ostream& out, const std::vector<CandidateScore>& scores) {
  out << "name,size,delta,wins,windows\n";
  for (const auto& s : scores) {
    out << detail::csv_escape(s.name) << ',' << s.size << ',' << format_double(s.summary.delta) << ','
        << s.summary.wins << ',' << s.summary.per_window.size() << '\n';
  }
}

/// test_year,selected,clean_delta,contaminated_delta
inline void write_lowo_csv(std::ostream& out, const LowoResult& r) {
  out << "test_year,selected,clean_delta,contaminated_delta\n";
  for (std::size_t w = 0; w < r.test_years.size(); ++w) {
    std::string sel;
    for (const auto& s : r.selected[w]) sel += (sel.empty() ? "" : ";") + s;
    out << r.test_years[w] << ',' << detail::csv_escape(sel) << ',' << format_double(r.clean_per_window[w]) << ','
        << format_double(r.contaminated_per_window[w]) << '\n';
  }
}

/// name,n_actors,delta,wins,windows
inline void write_perturbation_csv(std::ostream& out, const std::vector<PerturbationOutcome>& outcomes) {
  out << "name,n_actors,delta,wins,windows\n";
  for (const auto& o : outcomes) {
    out << detail::csv_escape(o.name) << ',' << o.n_actors << ',' << format_double(o.summary.delta) << ','
        << o.summary.wins << ',' << o.summary.per_window.size() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sensitivity sweep

/// train_years,local_rank,feasible,delta,wins,windows,error
inline void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << "train_years,local_rank,feasible,delta,wins,windows,error\n";
  for (const auto& c : cells) {
    out << c.train_years << ',' << c.local_rank << ',' << (c.feasible ? 1 : 0) << ',';
    if (c.feasible) {
      out << format_double(c.summary.delta) << ',' << c.summary.wins << ',' << c.summary.per_window.size();
    } else {
      out << ",,";
    }
    out << ',' << detail::csv_escape(c.error) << '\n';
  }
}

/// Rows are training lengths, columns local ranks; cells read
/// "delta (wins/windows)" or "infeasible".
inline void write_sweep_md(std::ostream& out, const std::vector<SweepCell>& cells) {
  std::vector<int> ts;
  std::vector<Index> ks;
  for (const auto& c : cells) {
    if (std::find(ts.begin(), ts.end(), c.train_years) == ts.end()) ts.push_back(c.train_years);
    if (std::find(ks.begin(), ks.end(), c.local_rank) == ks.end()) ks.push_back(c.local_rank);
  }
  out << "| T (years) |";
  for (const auto k : ks) out << " K_b=" << k << " |";
  out << "\n|---|";
  for (std::size_t k = 0; k < ks.size(); ++k) out << "---|";
  out << '\n';
  for (const int t : ts) {
    out << "| " << t << " |";
    for (const auto k : ks) {
      const auto it = std::find_if(cells.begin(), cells.end(),
                                   [&](const SweepCell& c) { return c.train_years == t && c.local_rank == k; });
      if (it == cells.end()) {
        out << " - |";
      } else if (!it->feasible) {
        out << " infeasible |";
      } else {
        out << ' ' << (it->summary.delta >= 0 ? "+" : "") << fixed(it->summary.delta, 3) << " ("
            << it->summary.wins << '/' << it->summary.per_window.size() << ") |";
      }
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Geometry

/// quarter,distance
inline void write_rotation_csv(std::ostream& out, const std::vector<std::string>& labels, const RotationSeries& r) {
  out << "quarter,distance\n";
  for (std::size_t k = 0; k < r.steps.size(); ++k) {
    out << (k + 1 < labels.size() ? labels[k + 1] : std::to_string(k + 1)) << ',' << format_double(r.steps[k]) << '\n';
  }
}

[[nodiscard]] inline nlohmann::json rotation_summary_json(const RotationSeries& r) {
  auto num = [](double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
  return {{"steps", r.steps.size()},        {"mean_step", r.mean_step}, {"acf1", num(r.acf1)},
          {"ljung_box_q", num(r.ljung_box_q)}, {"ljung_box_p", num(r.ljung_box_p)}, {"degenerate", r.degenerate}};
}

}  // namespace hetpanel
