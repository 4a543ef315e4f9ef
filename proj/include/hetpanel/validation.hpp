#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hetpanel/evaluation.hpp"
#include "hetpanel/inference.hpp"
#include "hetpanel/rng.hpp"

namespace hetpanel {

/// Per-window R2 of `a` minus `b` and the summary used throughout the
/// harness: mean delta and number of windows where a wins.
struct DeltaSummary {
  std::vector<double> per_window;
  double delta = 0.0;
  std::size_t wins = 0;
};

[[nodiscard]] inline DeltaSummary summarize_delta(const std::vector<WindowResult>& a, const std::vector<WindowResult>& b,
                                                  R2Convention convention = R2Convention::test_mean) {
  DeltaSummary s;
  s.per_window = loss_differentials(a, b, LossKind::window_r2, convention);
  s.delta = mean_of(s.per_window);
  s.wins = static_cast<std::size_t>(std::count_if(s.per_window.begin(), s.per_window.end(), [](double d) { return d > 0.0; }));
  return s;
}

// ---------------------------------------------------------------------------
// Placebo

struct PlaceboOptions {
  std::size_t n_perms = 1000;
  std::uint64_t seed = 20240101;
  std::optional<std::set<std::string>> fixed_actors;  // stratified mode
  R2Convention convention = R2Convention::test_mean;
  bool keep_partitions = false;
};

struct PlaceboResult {
  double real_delta = 0.0;
  std::size_t real_wins = 0;
  std::vector<double> perm_deltas;
  double perm_mean = 0.0;
  double perm_sd = 0.0;
  double band_lo = 0.0;  // 2.5% quantile of perm_deltas
  double band_hi = 0.0;  // 97.5%
  double z = 0.0;
  double p = 1.0;
  std::uint64_t seed = 0;
  std::vector<BlockPartition> partitions;
};

/// Actor ids of the given blocks.
[[nodiscard]] inline std::set<std::string> actors_of_blocks(const BlockPartition& partition,
                                                            const std::set<std::string>& blocks) {
  std::set<std::string> out;
  for (const auto& [actor, block] : partition.assignment) {
    if (blocks.count(block)) out.insert(actor);
  }
  return out;
}

/// Random partition with the block sizes of `base`: shuffle the permutable
/// actors (panel row order) with Fisher-Yates, then cut into the sizes of
/// the non-fixed blocks in ascending block-id order. Local/remainder roles
/// stay with the block ids.
template <class Engine>
[[nodiscard]] BlockPartition draw_placebo_partition(const Panel& panel, const BlockPartition& base,
                                                    const std::set<std::string>& fixed_actors, Engine& engine) {
  const auto rows = block_rows(panel, base);
  std::vector<std::string> pool;
  for (const auto& a : panel.registry) {
    if (!fixed_actors.count(a.actor_id)) pool.push_back(a.actor_id);
  }
  fisher_yates(pool.begin(), pool.end(), engine);
  BlockPartition out = base;
  std::size_t cursor = 0;
  for (const auto& [block, idx] : rows) {
    const auto& first = panel.registry[static_cast<std::size_t>(idx.front())].actor_id;
    if (fixed_actors.count(first)) continue;
    for (std::size_t k = 0; k < idx.size(); ++k) out.assignment[pool[cursor++]] = block;
  }
  return out;
}

inline void check_stratification(const Panel& panel, const BlockPartition& base, const std::set<std::string>& fixed) {
  const auto rows = block_rows(panel, base);
  std::set<std::string> known;
  for (const auto& a : panel.registry) known.insert(a.actor_id);
  for (const auto& id : fixed) {
    require(known.count(id) > 0, ErrorCode::stratification_error, "unknown fixed actor " + id);
  }
  for (const auto& [block, idx] : rows) {
    std::size_t inside = 0;
    for (const Index i : idx) inside += fixed.count(panel.registry[static_cast<std::size_t>(i)].actor_id);
    require(inside == 0 || inside == idx.size(), ErrorCode::stratification_error,
            "fixed set splits block '" + block + "'");
  }
}

namespace detail {

inline void finish_placebo(PlaceboResult& r) {
  const auto n = r.perm_deltas.size();
  r.perm_mean = mean_of(r.perm_deltas);
  double ss = 0.0;
  for (const double d : r.perm_deltas) ss += (d - r.perm_mean) * (d - r.perm_mean);
  r.perm_sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  const double diff = r.real_delta - r.perm_mean;
  if (r.perm_sd > 0.0) {
    r.z = diff / r.perm_sd;
  } else {
    r.z = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  const auto exceed = std::count_if(r.perm_deltas.begin(), r.perm_deltas.end(), [&](double d) { return d >= r.real_delta; });
  r.p = (static_cast<double>(exceed) + 1.0) / (static_cast<double>(n) + 1.0);
  r.band_lo = quantile(r.perm_deltas, 0.025);
  r.band_hi = quantile(r.perm_deltas, 0.975);
}

}  // namespace detail

/// M2 vs G1 under the real partition and under `n_perms` size-preserving
/// random partitions. Permutation k uses the stream derive_seed(seed, k).
[[nodiscard]] inline PlaceboResult placebo_test(const Panel& panel, const ArchitectureSpec& spec,
                                                const RollingWindowSpec& cal, const PlaceboOptions& opt = {}) {
  require(opt.n_perms > 0, ErrorCode::empty_permutation_set, "n_perms = 0");
  validate(spec.partition, panel);
  const std::set<std::string> fixed = opt.fixed_actors.value_or(std::set<std::string>{});
  if (opt.fixed_actors) check_stratification(panel, spec.partition, fixed);

  const auto prep = prepare_evaluation(panel, spec, cal);
  const auto g1 = evaluate_prepared(prep, ArchKind::G1, spec.partition, {});
  PlaceboResult r;
  r.seed = opt.seed;
  {
    const auto rows = block_rows(panel, spec.partition);
    const auto real = summarize_delta(evaluate_prepared(prep, ArchKind::M2, spec.partition, rows), g1, opt.convention);
    r.real_delta = real.delta;
    r.real_wins = real.wins;
  }
  r.perm_deltas.reserve(opt.n_perms);
  for (std::size_t k = 0; k < opt.n_perms; ++k) {
    SplitMix64 engine(derive_seed(opt.seed, k));
    const auto partition = draw_placebo_partition(panel, spec.partition, fixed, engine);
    const auto rows = block_rows(panel, partition);
    const auto m2 = evaluate_prepared(prep, ArchKind::M2, partition, rows);
    r.perm_deltas.push_back(summarize_delta(m2, g1, opt.convention).delta);
    if (opt.keep_partitions) r.partitions.push_back(partition);
  }
  detail::finish_placebo(r);
  return r;
}

// ---------------------------------------------------------------------------
// Candidate blocks, scans and selection rules

struct Candidate {
  std::string name;
  std::vector<std::string> actors;
};

struct CandidateScore {
  std::string name;
  std::size_t size = 0;
  DeltaSummary summary;
};

/// Single-block mixture: `actors` local, everything else remainder.
[[nodiscard]] inline BlockPartition candidate_partition(const Panel& panel, const std::vector<Candidate>& local) {
  std::map<std::string, std::vector<std::string>> blocks;
  for (const auto& c : local) blocks[c.name] = c.actors;
  return partition_from_blocks(panel, blocks, "remainder");
}

namespace detail {

[[nodiscard]] inline CandidateScore score_candidate(const Panel& panel, const PreparedEvaluation& prep,
                                                    const std::vector<WindowResult>& g1, const Candidate& c,
                                                    R2Convention convention) {
  const auto partition = candidate_partition(panel, {c});
  validate(partition, panel);
  CandidateScore s;
  s.name = c.name;
  s.size = c.actors.size();
  s.summary = summarize_delta(evaluate_prepared(prep, ArchKind::M2, partition, block_rows(panel, partition)), g1, convention);
  return s;
}

}  // namespace detail

/// For each candidate, M2 with only that block local vs G1.
[[nodiscard]] inline std::vector<CandidateScore> candidate_scan(const Panel& panel, const std::vector<Candidate>& candidates,
                                                                const ArchitectureSpec& spec, const RollingWindowSpec& cal,
                                                                R2Convention convention = R2Convention::test_mean) {
  const auto prep = prepare_evaluation(panel, spec, cal);
  const auto g1 = evaluate_prepared(prep, ArchKind::G1, BlockPartition{}, {});
  std::vector<CandidateScore> out;
  for (const auto& c : candidates) out.push_back(detail::score_candidate(panel, prep, g1, c, convention));
  return out;
}

/// Delta > 0 and wins >= ceil(fraction * windows).
[[nodiscard]] inline bool selection_rule(const DeltaSummary& s, double win_fraction) {
  const auto n = static_cast<double>(s.per_window.size());
  const auto needed = static_cast<std::size_t>(std::ceil(win_fraction * n - 1e-12));
  return s.delta > 0.0 && s.wins >= needed;
}

[[nodiscard]] inline std::size_t wins_threshold(std::size_t n_windows, double win_fraction) {
  return static_cast<std::size_t>(std::ceil(win_fraction * static_cast<double>(n_windows) - 1e-12));
}

// ---------------------------------------------------------------------------
// Leave-one-window-out selection

struct LowoResult {
  std::vector<int> test_years;
  std::vector<std::vector<std::string>> selected;  // per window
  std::vector<CandidateScore> scores;              // full-sample candidate scan
  std::vector<double> clean_per_window;            // R2(M2 | LOWO selection) - R2(G1)
  std::vector<double> contaminated_per_window;     // R2(M2 | full-sample selection) - R2(G1)
  std::vector<std::string> contaminated_selection;
  double clean_delta = 0.0;
  double contaminated_delta = 0.0;
  std::size_t clean_wins = 0;
};

/// For window w, keep candidates whose mean single-block delta over the other
/// windows is positive, and evaluate w under that selection. Selected
/// candidates must be disjoint.
[[nodiscard]] inline LowoResult lowo_block_selection(const Panel& panel, const std::vector<Candidate>& candidates,
                                                     const ArchitectureSpec& spec, const RollingWindowSpec& cal,
                                                     R2Convention convention = R2Convention::test_mean) {
  const auto prep = prepare_evaluation(panel, spec, cal);
  const auto g1 = evaluate_prepared(prep, ArchKind::G1, BlockPartition{}, {});
  LowoResult r;
  for (const auto& c : candidates) r.scores.push_back(detail::score_candidate(panel, prep, g1, c, convention));
  const std::size_t n_w = prep.windows.size();

  auto evaluate_selection = [&](const std::vector<std::string>& names, std::size_t w) {
    std::vector<Candidate> chosen;
    for (const auto& c : candidates) {
      if (std::find(names.begin(), names.end(), c.name) != names.end()) chosen.push_back(c);
    }
    const auto partition = candidate_partition(panel, chosen);
    validate(partition, panel);
    const auto m2 = evaluate_prepared_window(prep.windows[w], prep.spec, ArchKind::M2, partition,
                                             block_rows(panel, partition));
    return oos_r2(m2, convention) - oos_r2(g1[w], convention);
  };

  for (const auto& s : r.scores) {
    if (s.summary.delta > 0.0) r.contaminated_selection.push_back(s.name);
  }
  for (std::size_t w = 0; w < n_w; ++w) {
    r.test_years.push_back(prep.windows[w].frame.test_year);
    std::vector<std::string> pick;
    for (const auto& s : r.scores) {
      if (n_w < 2) break;
      double other = 0.0;
      for (std::size_t v = 0; v < n_w; ++v) {
        if (v != w) other += s.summary.per_window[v];
      }
      if (other / static_cast<double>(n_w - 1) > 0.0) pick.push_back(s.name);
    }
    r.clean_per_window.push_back(evaluate_selection(pick, w));
    r.contaminated_per_window.push_back(evaluate_selection(r.contaminated_selection, w));
    r.selected.push_back(std::move(pick));
  }
  r.clean_delta = mean_of(r.clean_per_window);
  r.contaminated_delta = mean_of(r.contaminated_per_window);
  r.clean_wins = static_cast<std::size_t>(
      std::count_if(r.clean_per_window.begin(), r.clean_per_window.end(), [](double d) { return d > 0.0; }));
  return r;
}

// ---------------------------------------------------------------------------
// Held-out freeze

struct FreezeResult {
  std::vector<CandidateScore> phase_a_scores;
  std::vector<std::string> frozen;
  std::size_t wins_needed = 0;
  BlockPartition partition;
  DeltaSummary phase_b;
  std::optional<ComparisonReport> phase_b_report;
};

/// Candidate scan on phase A only; the selected blocks are frozen and
/// evaluated unmodified on phase B.
[[nodiscard]] inline FreezeResult held_out_freeze(const Panel& panel, const std::vector<Candidate>& candidates,
                                                  const ArchitectureSpec& spec, const std::vector<int>& phase_a,
                                                  const std::vector<int>& phase_b, int train_years,
                                                  double win_fraction = 0.8, const ComparisonOptions& copt = {}) {
  require(!phase_a.empty() && !phase_b.empty(), ErrorCode::overlapping_phases, "both phases need windows");
  require(*std::max_element(phase_a.begin(), phase_a.end()) < *std::min_element(phase_b.begin(), phase_b.end()),
          ErrorCode::overlapping_phases, "phase A must end before phase B starts");
  RollingWindowSpec cal_a;
  cal_a.test_years = phase_a;
  cal_a.train_years = train_years;
  RollingWindowSpec cal_b = cal_a;
  cal_b.test_years = phase_b;

  FreezeResult r;
  r.phase_a_scores = candidate_scan(panel, candidates, spec, cal_a);
  r.wins_needed = wins_threshold(phase_a.size(), win_fraction);
  std::vector<Candidate> chosen;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (selection_rule(r.phase_a_scores[k].summary, win_fraction)) {
      r.frozen.push_back(candidates[k].name);
      chosen.push_back(candidates[k]);
    }
  }
  r.partition = candidate_partition(panel, chosen);
  validate(r.partition, panel);
  const auto prep = prepare_evaluation(panel, spec, cal_b);
  const auto g1 = evaluate_prepared(prep, ArchKind::G1, BlockPartition{}, {});
  const auto m2 = evaluate_prepared(prep, ArchKind::M2, r.partition, block_rows(panel, r.partition));
  r.phase_b = summarize_delta(m2, g1);
  if (r.phase_b.per_window.size() >= 2) r.phase_b_report = compare_deltas(r.phase_b.per_window, copt);
  return r;
}

// ---------------------------------------------------------------------------
// Partition perturbations

struct Move {
  std::string actor_id;
  std::string to_block;
};

struct Perturbation {
  std::string name;
  std::vector<Move> moves;
  std::set<std::string> unlocal_blocks;  // keep actors, drop the local flag
  std::set<std::string> drop_blocks;     // remove the blocks' actors from the panel
  bool remainder_local = false;          // give the remainder its own local model
};

struct PerturbationOutcome {
  std::string name;
  std::size_t n_actors = 0;
  DeltaSummary summary;
};

/// Applies a perturbation; returns the (possibly reduced) panel and partition.
[[nodiscard]] inline std::pair<Panel, BlockPartition> apply_perturbation(const Panel& panel, const BlockPartition& base,
                                                                         const Perturbation& p) {
  BlockPartition part = base;
  const auto blocks = base.blocks();
  for (const auto& m : p.moves) {
    auto it = part.assignment.find(m.actor_id);
    require(it != part.assignment.end(), ErrorCode::invalid_reassignment, "unknown actor " + m.actor_id);
    require(blocks.count(m.to_block) > 0, ErrorCode::invalid_reassignment, "unknown block " + m.to_block);
    it->second = m.to_block;
  }
  for (const auto& b : p.unlocal_blocks) {
    require(blocks.count(b) > 0, ErrorCode::invalid_reassignment, "unknown block " + b);
    part.local_blocks.erase(b);
  }
  Panel reduced = panel;
  if (!p.drop_blocks.empty()) {
    std::vector<Index> keep;
    for (const auto& b : p.drop_blocks) {
      require(blocks.count(b) > 0, ErrorCode::invalid_reassignment, "unknown block " + b);
    }
    for (Index i = 0; i < panel.n_actors(); ++i) {
      const auto& id = panel.registry[static_cast<std::size_t>(i)].actor_id;
      if (!p.drop_blocks.count(part.assignment.at(id))) keep.push_back(i);
    }
    require(keep.size() >= 2, ErrorCode::invalid_reassignment, "dropping leaves fewer than 2 actors");
    reduced = select_actors(panel, keep);
    for (const auto& b : p.drop_blocks) {
      part.local_blocks.erase(b);
      for (auto it = part.assignment.begin(); it != part.assignment.end();) {
        it = it->second == b ? part.assignment.erase(it) : std::next(it);
      }
    }
  }
  if (p.remainder_local) {
    const std::string name = base.remainder_block + "_local";
    for (auto& [actor, block] : part.assignment) {
      if (block == base.remainder_block) block = name;
    }
    part.local_blocks.insert(name);
  }
  try {
    validate(part, reduced);
  } catch (const Error& e) {
    throw Error(ErrorCode::invalid_reassignment, e.what());
  }
  return {std::move(reduced), std::move(part)};
}

/// The standard variants: drop each local block, un-local each block, and
/// the remainder-local variant.
[[nodiscard]] inline std::vector<Perturbation> default_perturbations(const BlockPartition& base) {
  std::vector<Perturbation> out;
  for (const auto& b : base.local_blocks) out.push_back({"drop_" + b, {}, {}, {b}, false});
  for (const auto& b : base.local_blocks) out.push_back({"unlocal_" + b, {}, {b}, {}, false});
  out.push_back({"remainder_local", {}, {}, {}, true});
  return out;
}

/// Baseline first, then one outcome per perturbation, each re-estimated from
/// scratch on its own panel.
[[nodiscard]] inline std::vector<PerturbationOutcome> perturbation_suite(const Panel& panel, const ArchitectureSpec& spec,
                                                                         const RollingWindowSpec& cal,
                                                                         const std::vector<Perturbation>& variants) {
  std::vector<PerturbationOutcome> out;
  auto run = [&](const std::string& name, const Panel& p, const BlockPartition& part) {
    const auto prep = prepare_evaluation(p, spec, cal);
    const auto g1 = evaluate_prepared(prep, ArchKind::G1, part, {});
    const auto m2 = evaluate_prepared(prep, ArchKind::M2, part, block_rows(p, part));
    out.push_back({name, static_cast<std::size_t>(p.n_actors()), summarize_delta(m2, g1)});
  };
  validate(spec.partition, panel);
  run("baseline", panel, spec.partition);
  for (const auto& v : variants) {
    const auto [p, part] = apply_perturbation(panel, spec.partition, v);
    run(v.name, p, part);
  }
  return out;
}

// ---------------------------------------------------------------------------
// T x K_b sensitivity grid

struct SweepCell {
  int train_years = 0;
  Index local_rank = 0;
  bool feasible = true;
  std::string error;
  DeltaSummary summary;
};

/// One M2-vs-G1 delta per (train_years, K_b) cell on the given test years.
/// Infeasible cells are marked, not fatal.
[[nodiscard]] inline std::vector<SweepCell> sweep_grid(const Panel& panel, const ArchitectureSpec& spec,
                                                       const std::vector<int>& test_years,
                                                       const std::vector<int>& train_years,
                                                       const std::vector<Index>& local_ranks) {
  std::vector<SweepCell> out;
  validate(spec.partition, panel);
  const auto rows = block_rows(panel, spec.partition);
  for (const int ty : train_years) {
    RollingWindowSpec cal;
    cal.test_years = test_years;
    cal.train_years = ty;
    std::optional<PreparedEvaluation> prep;
    std::vector<WindowResult> g1;
    std::string prep_error;
    try {
      prep = prepare_evaluation(panel, spec, cal);
      g1 = evaluate_prepared(*prep, ArchKind::G1, spec.partition, {});
    } catch (const Error& e) {
      prep_error = e.what();
    }
    for (const Index k : local_ranks) {
      SweepCell cell;
      cell.train_years = ty;
      cell.local_rank = k;
      if (!prep) {
        cell.feasible = false;
        cell.error = prep_error;
      } else {
        try {
          prep->spec.local_rank_override = k;
          cell.summary = summarize_delta(evaluate_prepared(*prep, ArchKind::M2, spec.partition, rows), g1);
        } catch (const Error& e) {
          cell.feasible = false;
          cell.error = e.what();
        }
      }
      out.push_back(std::move(cell));
    }
  }
  return out;
}

}  // namespace hetpanel
