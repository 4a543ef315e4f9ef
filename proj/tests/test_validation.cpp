#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace hetpanel;

namespace {

struct Planted {
  SynthConfig cfg;
  Panel panel;
  BlockPartition partition;
  ArchitectureSpec spec;
  RollingWindowSpec cal;
};

const Planted& planted() {
  static const Planted p = [] {
    Planted x;
    x.cfg = default_heterogeneous_config(20240101);
    x.panel = generate_heterogeneous_panel(x.cfg);
    x.partition = planted_partition(x.cfg, x.panel);
    x.spec.kind = ArchKind::M2;
    x.spec.partition = x.partition;
    x.cal.test_years = {2018, 2020, 2022, 2024};
    return x;
  }();
  return p;
}

std::vector<Candidate> planted_candidates() {
  const auto& p = planted();
  std::vector<Candidate> out;
  for (const auto& b : p.cfg.blocks) {
    Candidate c{b.name, {}};
    for (Index i = b.first; i < b.first + b.count; ++i) c.actors.push_back(p.panel.registry[static_cast<std::size_t>(i)].actor_id);
    out.push_back(c);
  }
  return out;
}

std::multiset<std::size_t> sizes_of(const Panel& panel, const BlockPartition& part) {
  std::multiset<std::size_t> s;
  for (const auto& [b, idx] : block_rows(panel, part)) s.insert(idx.size());
  return s;
}

}  // namespace

TEST(Placebo, TemplateSizesPreserved) {
  const auto& p = planted();
  EXPECT_EQ(sizes_of(p.panel, p.partition), (std::multiset<std::size_t>{11, 23, 25, 34}));
  PlaceboOptions opt;
  opt.n_perms = 25;
  opt.keep_partitions = true;
  const auto r = placebo_test(p.panel, p.spec, p.cal, opt);
  ASSERT_EQ(r.partitions.size(), 25U);
  for (const auto& part : r.partitions) {
    EXPECT_EQ(sizes_of(p.panel, part), sizes_of(p.panel, p.partition));
    EXPECT_EQ(part.local_blocks, p.partition.local_blocks);
  }
  EXPECT_GE(r.p, 1.0 / 26.0);
  EXPECT_EQ(r.perm_deltas.size(), 25U);
}

TEST(Placebo, StratifiedNeverMovesFixedActors) {
  const auto& p = planted();
  PlaceboOptions opt;
  opt.n_perms = 15;
  opt.keep_partitions = true;
  opt.fixed_actors = actors_of_blocks(p.partition, {"A", "remainder"});
  const auto r = placebo_test(p.panel, p.spec, p.cal, opt);
  for (const auto& part : r.partitions) {
    for (const auto& id : *opt.fixed_actors) EXPECT_EQ(part.assignment.at(id), p.partition.assignment.at(id));
  }
}

TEST(Placebo, SeedScheduleIndependence) {
  const auto& p = planted();
  PlaceboOptions opt;
  opt.n_perms = 6;
  opt.keep_partitions = true;
  const auto r = placebo_test(p.panel, p.spec, p.cal, opt);
  SplitMix64 e(derive_seed(opt.seed, 4));
  EXPECT_EQ(draw_placebo_partition(p.panel, p.partition, {}, e), r.partitions[4]);
}

TEST(Placebo, Errors) {
  const auto& p = planted();
  PlaceboOptions opt;
  opt.n_perms = 0;
  try {
    (void)placebo_test(p.panel, p.spec, p.cal, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_permutation_set);
  }
  opt.n_perms = 3;
  opt.fixed_actors = std::set<std::string>{p.panel.registry[10].actor_id};
  try {
    (void)placebo_test(p.panel, p.spec, p.cal, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::stratification_error);
  }
}

TEST(Placebo, MonteCarloPAddOne) {
  PlaceboResult r;
  r.real_delta = 1.0;
  r.perm_deltas = {0.1, 0.2, 1.0, 0.3};
  detail::finish_placebo(r);
  EXPECT_DOUBLE_EQ(r.p, 2.0 / 5.0);
  EXPECT_NEAR(r.perm_sd, std::sqrt(((0.1 - 0.4) * (0.1 - 0.4) + 0.04 + 0.36 + 0.01) / 3.0), 1e-15);
}

TEST(Scan, PlantedBlockRanksFirstAndOrderIndependent) {
  const auto& p = planted();
  auto cands = planted_candidates();
  std::vector<std::string> inert;
  for (const auto& a : p.panel.registry) {
    if (p.partition.assignment.at(a.actor_id) == "remainder") inert.push_back(a.actor_id);
  }
  cands.push_back({"inert", std::vector<std::string>(inert.begin(), inert.begin() + 12)});
  const auto s = candidate_scan(p.panel, cands, p.spec, p.cal);
  std::reverse(cands.begin(), cands.end());
  const auto rev = candidate_scan(p.panel, cands, p.spec, p.cal);
  for (std::size_t k = 0; k < s.size(); ++k) EXPECT_EQ(s[k].summary.delta, rev[s.size() - 1 - k].summary.delta);
  double best_planted = -1e9;
  for (std::size_t k = 0; k < 3; ++k) best_planted = std::max(best_planted, s[k].summary.delta);
  EXPECT_GT(best_planted, s[3].summary.delta);
  EXPECT_LT(std::abs(s[3].summary.delta), std::abs(best_planted));
}

TEST(Selection, RuleAndThreshold) {
  EXPECT_EQ(wins_threshold(5, 0.8), 4U);
  EXPECT_EQ(wins_threshold(10, 0.7), 7U);
  DeltaSummary s;
  s.per_window = {0.1, 0.1, 0.1, 0.1, 0.1};
  s.wins = 5;
  s.delta = -0.01;
  EXPECT_FALSE(selection_rule(s, 0.8));
  s.delta = 0.01;
  EXPECT_TRUE(selection_rule(s, 0.8));
  s.wins = 3;
  EXPECT_FALSE(selection_rule(s, 0.8));
}

TEST(Lowo, AllPositiveCandidatesReproduceFixedPartition) {
  const auto& p = planted();
  std::vector<Candidate> positive;
  {
    const auto all = planted_candidates();
    const auto first = lowo_block_selection(p.panel, all, p.spec, p.cal);
    for (std::size_t k = 0; k < all.size(); ++k) {
      const auto& pw = first.scores[k].summary.per_window;
      if (std::all_of(pw.begin(), pw.end(), [](double d) { return d > 0.0; })) positive.push_back(all[k]);
    }
  }
  ASSERT_FALSE(positive.empty());
  const auto r = lowo_block_selection(p.panel, positive, p.spec, p.cal);
  const auto part = candidate_partition(p.panel, positive);
  const auto prep = prepare_evaluation(p.panel, p.spec, p.cal);
  const auto g1 = evaluate_prepared(prep, ArchKind::G1, BlockPartition{}, {});
  const auto m2 = evaluate_prepared(prep, ArchKind::M2, part, block_rows(p.panel, part));
  const auto fixed = summarize_delta(m2, g1);
  for (std::size_t w = 0; w < r.selected.size(); ++w) {
    EXPECT_EQ(r.selected[w].size(), positive.size());
    EXPECT_EQ(r.clean_per_window[w], fixed.per_window[w]);
  }
}

TEST(Lowo, SelectionUsesOtherWindowsOnly) {
  const auto& p = planted();
  auto cands = planted_candidates();
  const auto r = lowo_block_selection(p.panel, cands, p.spec, p.cal);
  for (std::size_t w = 0; w < r.selected.size(); ++w) {
    for (const auto& s : r.scores) {
      double other = 0.0;
      for (std::size_t v = 0; v < s.summary.per_window.size(); ++v)
        if (v != w) other += s.summary.per_window[v];
      const bool picked = std::find(r.selected[w].begin(), r.selected[w].end(), s.name) != r.selected[w].end();
      EXPECT_EQ(picked, other > 0.0);
    }
  }
}

TEST(Lowo, NoCandidatesReducesToG1) {
  const auto& p = planted();
  const auto r = lowo_block_selection(p.panel, {}, p.spec, p.cal);
  for (double d : r.clean_per_window) EXPECT_EQ(d, 0.0);
}

TEST(Freeze, PhasesAndRule) {
  const auto& p = planted();
  try {
    (void)held_out_freeze(p.panel, planted_candidates(), p.spec, {2018, 2020}, {2020, 2021}, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::overlapping_phases);
  }
  const auto r = held_out_freeze(p.panel, planted_candidates(), p.spec, {2015, 2016, 2017, 2018, 2019},
                                 {2022, 2023, 2024}, 5);
  EXPECT_EQ(r.wins_needed, 4U);
  for (std::size_t k = 0; k < r.phase_a_scores.size(); ++k) {
    const bool frozen = std::find(r.frozen.begin(), r.frozen.end(), r.phase_a_scores[k].name) != r.frozen.end();
    EXPECT_EQ(frozen, selection_rule(r.phase_a_scores[k].summary, 0.8));
  }
  EXPECT_EQ(r.phase_b.per_window.size(), 3U);
}

TEST(Perturb, BaselineAndDropAll) {
  const auto& p = planted();
  Perturbation unlocal_all{"unlocal_all", {}, {"A", "B", "C"}, {}, false};
  Perturbation noop{"noop", {}, {}, {}, false};
  const auto out = perturbation_suite(p.panel, p.spec, p.cal, {noop, unlocal_all});
  ASSERT_EQ(out.size(), 3U);
  EXPECT_EQ(out[0].summary.per_window, out[1].summary.per_window);
  for (double d : out[2].summary.per_window) EXPECT_EQ(d, 0.0);
}

TEST(Perturb, MovesAndDrops) {
  const auto& p = planted();
  const auto first_a = p.panel.registry[7].actor_id;
  const auto [panel, part] = apply_perturbation(p.panel, p.partition, {"move", {{first_a, "B"}}, {}, {}, false});
  EXPECT_EQ(part.assignment.at(first_a), "B");
  const auto [reduced, rpart] = apply_perturbation(p.panel, p.partition, {"drop_A", {}, {}, {"A"}, false});
  EXPECT_EQ(reduced.n_actors(), 93 - 23);
  EXPECT_NO_THROW(validate(rpart, reduced));
  EXPECT_THROW((void)apply_perturbation(p.panel, p.partition, {"bad", {{"nobody", "B"}}, {}, {}, false}), Error);
  EXPECT_EQ(default_perturbations(p.partition).size(), 7U);
}

TEST(Perturb, DropDeltasAreRoughlyAdditive) {
  const auto& p = planted();
  const auto out = perturbation_suite(p.panel, p.spec, p.cal, default_perturbations(p.partition));
  const double full = out[0].summary.delta;
  for (const auto& o : out) {
    if (o.name.rfind("drop_", 0) == 0) EXPECT_LT(o.summary.delta, full + 0.05) << o.name;
  }
}
