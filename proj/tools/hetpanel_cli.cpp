#include <Eigen/Core>
#include <boost/version.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hetpanel/hetpanel.hpp"

namespace fs = std::filesystem;
using namespace hetpanel;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string config_path;
  std::string out_dir;
  std::string panel;
  std::string partition;
  std::optional<int> train_years;
  std::string test_years;
  std::optional<std::uint64_t> seed;
  std::string convention;
};

/// Records every artifact a run writes so the manifest can list it.
class Run {
 public:
  Run(std::string command, RunConfig config, fs::path out, std::vector<std::string> argv)
      : command_(std::move(command)), config_(std::move(config)), out_(std::move(out)), argv_(std::move(argv)) {
    fs::create_directories(out_);
  }

  const RunConfig& config() const { return config_; }

  std::ofstream open(const std::string& name) {
    const auto path = out_ / name;
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io_error, "cannot write " + path.string());
    outputs_.push_back(name);
    return f;
  }

  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
  void note(const std::string& key, json value) { extra_[key] = std::move(value); }

  void write_manifest() const {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    json m;
    m["command"] = command_;
    m["argv"] = argv_;
    m["version"] = HETPANEL_VERSION;
    m["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"boost", BOOST_LIB_VERSION},
                      {"cli11", CLI11_VERSION}};
    m["config_hash"] = config_hash(config_);
    m["config"] = config_;
    json seeds = {{"master", config_.seed}};
    for (const auto& [k, v] : seeds_) seeds[k] = v;
    m["seeds"] = seeds;
    m["outputs"] = outputs_;
    m["created_utc"] = ts.str();
    if (!extra_.empty()) m["details"] = extra_;
    std::ofstream f(out_ / (command_ + ".manifest.json"), std::ios::binary);
    require(f.good(), ErrorCode::io_error, "cannot write manifest");
    f << m.dump(2) << '\n';
  }

 private:
  std::string command_;
  RunConfig config_;
  fs::path out_;
  std::vector<std::string> argv_;
  std::vector<std::string> outputs_;
  std::map<std::string, std::uint64_t> seeds_;
  json extra_ = json::object();
};

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (!c.panel.empty()) cfg.panel_path = c.panel;
  if (!c.partition.empty()) cfg.partition_path = c.partition;
  if (c.train_years) cfg.train_years = *c.train_years;
  if (!c.test_years.empty()) cfg.test_years = parse_year_list(c.test_years);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.convention.empty()) cfg.r2_convention = parse_r2_convention(c.convention);
  validate(cfg);
  return cfg;
}

fs::path output_dir(const Common& c) {
  if (!c.out_dir.empty()) return c.out_dir;
  if (const char* env = std::getenv("HETPANEL_OUT"); env != nullptr && *env != '\0') return env;
  return ".";
}

Panel require_panel(const RunConfig& cfg) {
  require(cfg.panel_path.has_value(), ErrorCode::invalid_config, "no panel given (--panel or \"panel\" in the config)");
  return load_panel(*cfg.panel_path);
}

BlockPartition require_partition(const RunConfig& cfg, const Panel& panel) {
  require(cfg.partition_path.has_value(), ErrorCode::invalid_config,
          "no partition given (--partition or \"partition\" in the config)");
  auto p = load_partition(*cfg.partition_path);
  validate(p, panel);
  return p;
}

BlockPartition partition_if_needed(const RunConfig& cfg, const Panel& panel, ArchKind kind) {
  if (cfg.partition_path) return require_partition(cfg, panel);
  require(!needs_partition(kind), ErrorCode::invalid_config,
          std::string(to_string(kind)) + " needs a partition (--partition)");
  return {};
}

/// Candidate file `candidate,actor_id`; without one, every sector label
/// other than "remainder" becomes a candidate.
std::vector<Candidate> load_candidates(const std::string& path, const Panel& panel) {
  std::map<std::string, std::vector<std::string>> by_name;
  std::vector<std::string> order;
  auto add = [&](const std::string& name, const std::string& actor) {
    if (!by_name.count(name)) order.push_back(name);
    by_name[name].push_back(actor);
  };
  if (path.empty()) {
    for (const auto& a : panel.registry) {
      if (a.sector != "remainder") add(a.sector, a.actor_id);
    }
  } else {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io_error, "cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      const auto f = detail::split_csv(line);
      if (!header) {
        require(f.size() == 2 && f[0] == "candidate" && f[1] == "actor_id", ErrorCode::invalid_config,
                path + ":" + std::to_string(line_no) + ": header must be candidate,actor_id");
        header = true;
        continue;
      }
      require(f.size() == 2, ErrorCode::invalid_config, path + ":" + std::to_string(line_no) + ": needs 2 fields");
      add(f[0], f[1]);
    }
  }
  std::vector<Candidate> out;
  for (const auto& name : order) out.push_back({name, by_name[name]});
  require(!out.empty(), ErrorCode::invalid_config, "no candidate blocks");
  return out;
}

std::set<std::string> split_set(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(item);
  }
  return out;
}

template <class T>
std::vector<T> split_numbers(const std::string& s) {
  std::vector<T> out;
  for (const auto& piece : split_set(s)) {
    T v{};
    const auto [p, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), v);
    require(ec == std::errc{} && p == piece.data() + piece.size(), ErrorCode::invalid_config, "bad number '" + piece + "'");
    out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : sep) + s;
  return out;
}

void add_common(CLI::App* sub, Common& c, bool with_partition = true) {
  sub->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out_dir, "Output directory (default: $HETPANEL_OUT or .)");
  sub->add_option("--panel", c.panel, "Panel CSV")->check(CLI::ExistingFile);
  if (with_partition) sub->add_option("--partition", c.partition, "Partition CSV")->check(CLI::ExistingFile);
  sub->add_option("--train-years", c.train_years, "Training window in years")->check(CLI::PositiveNumber);
  sub->add_option("--test-years", c.test_years, "Test years, e.g. 2015..2024 or 2015,2016");
  sub->add_option("--seed", c.seed, "Master seed");
  sub->add_option("--convention", c.convention, "R2 convention")->check(CLI::IsMember({"test_mean", "train_mean"}));
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Two-stage heterogeneous-panel forecasting: evaluation, inference, placebo and geometry tools",
               "hetpanel"};
  app.set_version_flag("--version", std::string(HETPANEL_VERSION));
  app.require_subcommand(1);

  Common common;
  std::function<int()> action;
  auto bind = [&](CLI::App* sub, std::function<int(Run&)> body) {
    sub->callback([&, sub, body] {
      action = [&, sub, body] {
        Run run(sub->get_name(), resolve_config(common), output_dir(common), args);
        const int rc = body(run);
        run.write_manifest();
        return rc;
      };
    });
  };

  // eval ---------------------------------------------------------------------
  std::string arch = "m2";
  auto* eval = app.add_subcommand("eval", "Rolling out-of-sample evaluation of one architecture");
  add_common(eval, common);
  eval->add_option("--arch", arch, "g0|g1|s1|ba|ba_m2|m1|m2|ens|ar1|ssr")
      ->check(CLI::IsMember({"g0", "g1", "s1", "ba", "ba_m2", "m1", "m2", "ens", "ar1", "ssr"}, CLI::ignore_case));
  bind(eval, [&](Run& run) {
    const auto& cfg = run.config();
    const auto panel = require_panel(cfg);
    const auto kind = parse_arch(arch);
    const auto spec = architecture_spec(cfg, kind, partition_if_needed(cfg, panel, kind));
    const auto windows = rolling_oos_evaluate(panel, spec, calendar(cfg));
    const std::string name(to_string(kind));
    {
      auto f = run.open("eval_" + name + "_windows.csv");
      write_window_csv(f, name, windows, cfg.r2_convention);
    }
    {
      auto f = run.open("eval_" + name + "_forecasts.csv");
      write_forecast_csv(f, panel, windows);
    }
    auto f = run.open("eval_" + name + "_summary.md");
    std::size_t warnings = 0;
    for (const auto& w : windows) warnings += w.warnings.size();
    f << "| arch | windows | mean R2 (" << to_string(cfg.r2_convention) << ") | MAE | warnings |\n|---|---|---|---|---|\n";
    f << "| " << name << " | " << windows.size() << " | " << fixed(mean_r2(windows, cfg.r2_convention)) << " | "
      << fixed(mae(windows)) << " | " << warnings << " |\n";
    std::cout << name << ": mean R2 " << fixed(mean_r2(windows, cfg.r2_convention)) << " over " << windows.size()
              << " windows\n";
    return kExitOk;
  });

  // compare ------------------------------------------------------------------
  std::string arch_a = "m2";
  std::string arch_b = "g1";
  std::string loss = "r2";
  auto* compare = app.add_subcommand("compare", "Inference battery for architecture A against B");
  add_common(compare, common);
  compare->add_option("--a", arch_a, "Architecture A")->check(CLI::IsMember({"g0", "g1", "s1", "ba", "ba_m2", "m1", "m2", "ens", "ar1", "ssr"}, CLI::ignore_case));
  compare->add_option("--b", arch_b, "Architecture B")->check(CLI::IsMember({"g0", "g1", "s1", "ba", "ba_m2", "m1", "m2", "ens", "ar1", "ssr"}, CLI::ignore_case));
  compare->add_option("--loss", loss, "Per-window R2 or per-cell squared error")->check(CLI::IsMember({"r2", "se"}));
  bind(compare, [&](Run& run) {
    const auto& cfg = run.config();
    const auto panel = require_panel(cfg);
    const auto ka = parse_arch(arch_a);
    const auto kb = parse_arch(arch_b);
    BlockPartition part;
    if (cfg.partition_path || needs_partition(ka) || needs_partition(kb)) part = require_partition(cfg, panel);
    const auto cal = calendar(cfg);
    const auto ra = rolling_oos_evaluate(panel, architecture_spec(cfg, ka, part), cal);
    const auto rb = rolling_oos_evaluate(panel, architecture_spec(cfg, kb, part), cal);
    const auto deltas = loss_differentials(ra, rb, loss == "r2" ? LossKind::window_r2 : LossKind::squared_error,
                                           cfg.r2_convention);
    const auto report = compare_deltas(deltas, comparison_options(cfg));
    run.seed("bootstrap", report.seed);
    const std::string na(to_string(ka));
    const std::string nb(to_string(kb));
    {
      auto f = run.open("compare_" + na + "_" + nb + ".md");
      write_comparison_md(f, na, nb, report, cfg.confidence_level);
    }
    {
      auto f = run.open("compare_" + na + "_" + nb + "_deltas.csv");
      if (loss == "r2") {
        write_deltas_csv(f, cfg.test_years, deltas);
      } else {
        f << "index,delta\n";
        for (std::size_t k = 0; k < deltas.size(); ++k) f << k << ',' << format_double(deltas[k]) << '\n';
      }
    }
    if (!part.assignment.empty() && loss == "r2") {
      auto f = run.open("compare_" + na + "_" + nb + "_blocks.csv");
      write_block_decomposition_csv(f, per_block_decomposition(ra, rb, block_rows(panel, part), cfg.r2_convention));
    }
    std::cout << na << " - " << nb << ": delta " << fixed(report.delta_mean) << ", CI "
              << format_interval(report.bootstrap_ci) << ", wins " << report.sign_wins << "/" << report.sign_total
              << '\n';
    return kExitOk;
  });

  // placebo ------------------------------------------------------------------
  std::optional<std::size_t> perms;
  std::string stratify;
  auto* placebo = app.add_subcommand("placebo", "Size-preserving random-partition placebo for M2 vs G1");
  add_common(placebo, common);
  placebo->add_option("--perms", perms, "Number of permutations (default from config)")->check(CLI::PositiveNumber);
  placebo->add_option("--stratify", stratify, "Comma-separated block ids held fixed");
  bind(placebo, [&](Run& run) {
    const auto& cfg = run.config();
    const auto panel = require_panel(cfg);
    const auto part = require_partition(cfg, panel);
    PlaceboOptions po;
    po.n_perms = perms.value_or(cfg.placebo_permutations);
    po.seed = cfg.seed;
    po.convention = cfg.r2_convention;
    if (!stratify.empty()) po.fixed_actors = actors_of_blocks(part, split_set(stratify));
    const auto r = placebo_test(panel, architecture_spec(cfg, ArchKind::M2, part), calendar(cfg), po);
    run.seed("placebo", po.seed);
    run.note("stratified_blocks", stratify);
    {
      auto f = run.open("placebo_deltas.csv");
      write_placebo_csv(f, r);
    }
    {
      auto f = run.open("placebo_summary.json");
      f << placebo_summary_json(r).dump(2) << '\n';
    }
    auto f = run.open("placebo.md");
    write_placebo_md(f, r);
    std::cout << "placebo: real delta " << fixed(r.real_delta) << ", z " << fixed(r.z, 2) << ", p " << fixed(r.p) << '\n';
    return kExitOk;
  });

  // scan / lowo / freeze -----------------------------------------------------
  std::string candidates_path;
  auto* scan = app.add_subcommand("scan", "Single-block candidate scan with the selection rule");
  add_common(scan, common, false);
  scan->add_option("--candidates", candidates_path, "Candidate CSV (candidate,actor_id); default: sector labels")
      ->check(CLI::ExistingFile);
  bind(scan, [&](Run& run) {
    const auto& cfg = run.config();
    const auto panel = require_panel(cfg);
    const auto cands = load_candidates(candidates_path, panel);
    const auto scores = candidate_scan(panel, cands, architecture_spec(cfg, ArchKind::M2, {}), calendar(cfg),
                                       cfg.r2_convention);
    {
      auto f = run.open("scan.csv");
      write_candidate_scores_csv(f, scores);
    }
    auto f = run.open("scan.md");
    const auto need = wins_threshold(cfg.test_years.size(), cfg.win_fraction);
    f << "| candidate | size | delta | wins | selected |\n|---|---|---|---|---|\n";
    for (const auto& s : scores) {
      f << "| " << s.name << " | " << s.size << " | " << fixed(s.summary.delta) << " | " << s.summary.wins << "/"
        << s.summary.per_window.size() << " | " << (selection_rule(s.summary, cfg.win_fraction) ? "yes" : "no")
        << " |\n";
    }
    f << "\nSelection: delta > 0 and at least " << need << " window wins.\n";
    return kExitOk;
  });

  auto* lowo = app.add_subcommand("lowo", "Leave-one-window-out block selection");
  add_common(lowo, common, false);
  lowo->add_option("--candidates", candidates_path, "Candidate CSV (candidate,actor_id); default: sector labels")
      ->check(CLI::ExistingFile);
  bind(lowo, [&](Run& run) {
    const auto& cfg = run.config();
    const auto panel = require_panel(cfg);
    const auto cands = load_candidates(candidates_path, panel);
    const auto r = lowo_block_selection(panel, cands, architecture_spec(cfg, ArchKind::M2, {}), calendar(cfg),
                                        cfg.r2_convention);
    {
      auto f = run.open("lowo.csv");
      write_lowo_csv(f, r);
    }
    {
      auto f = run.open("lowo_scores.csv");
      write_candidate_scores_csv(f, r.scores);
    }
    auto f = run.open("lowo.md");
    f << "| selection | delta | wins |\n|---|---|---|\n";
    f << "| leave-one-window-out | " << fixed(r.clean_delta) << " | " << r.clean_wins << "/" << r.test_years.size()
      << " |\n";
    f << "| full sample (" << join(r.contaminated_selection, ", ") << ") | " << fixed(r.contaminated_delta)
      << " | - |\n";
    std::cout << "lowo: clean delta " << fixed(r.clean_delta) << ", full-sample delta " << fixed(r.contaminated_delta)
              << '\n';
    return kExitOk;
  });

  std::string phase_a = "2005..2014";
  std::string phase_b = "2015..2024";
  auto* freeze = app.add_subcommand("freeze", "Select blocks on phase A, evaluate them frozen on phase B");
  add_common(freeze, common, false);
  freeze->add_option("--candidates", candidates_path, "Candidate CSV (candidate,actor_id); default: sector labels")
      ->check(CLI::ExistingFile);
  freeze->add_option("--phase-a", phase_a, "Selection years");
  freeze->add_option("--phase-b", phase_b, "Held-out years");
  bind(freeze, [&](Run& run) {
    const auto& cfg = run.config();
    const auto panel = require_panel(cfg);
    const auto cands = load_candidates(candidates_path, panel);
    const auto r = held_out_freeze(panel, cands, architecture_spec(cfg, ArchKind::M2, {}), parse_year_list(phase_a),
                                   parse_year_list(phase_b), cfg.train_years, cfg.win_fraction,
                                   comparison_options(cfg));
    run.note("phase_a", phase_a);
    run.note("phase_b", phase_b);
    {
      auto f = run.open("freeze_phase_a.csv");
      write_candidate_scores_csv(f, r.phase_a_scores);
    }
    {
      auto f = run.open("freeze_partition.csv");
      write_partition(f, r.partition, &panel);
    }
    {
      auto f = run.open("freeze_phase_b_deltas.csv");
      write_deltas_csv(f, parse_year_list(phase_b), r.phase_b.per_window);
    }
    auto f = run.open("freeze.md");
    f << "Frozen blocks: " << (r.frozen.empty() ? std::string("none") : join(r.frozen, ", ")) << " (rule: delta > 0, "
      << r.wins_needed << "+ wins)\n\n";
    f << "Phase B delta " << fixed(r.phase_b.delta) << ", wins " << r.phase_b.wins << "/" << r.phase_b.per_window.size()
      << "\n\n";
    if (r.phase_b_report) write_comparison_md(f, "M2 (frozen)", "G1", *r.phase_b_report, cfg.confidence_level);
    std::cout << "freeze: " << r.frozen.size() << " blocks frozen, phase B delta " << fixed(r.phase_b.delta) << '\n';
    return kExitOk;
  });

  // perturb ------------------------------------------------------------------
  auto* perturb = app.add_subcommand("perturb", "Block drop, un-localize and remainder-local perturbations");
  add_common(perturb, common);
  bind(perturb, [&](Run& run) {
    const auto& cfg = run.config();
    const auto panel = require_panel(cfg);
    const auto part = require_partition(cfg, panel);
    const auto out = perturbation_suite(panel, architecture_spec(cfg, ArchKind::M2, part), calendar(cfg),
                                        default_perturbations(part));
    auto f = run.open("perturb.csv");
    write_perturbation_csv(f, out);
    return kExitOk;
  });

  // geodesic -----------------------------------------------------------------
  std::optional<Index> geo_rank;
  std::optional<Index> train_len;
  std::string norm = "l2";
  std::size_t random_draws = 1000;
  std::string geo_block;
  std::size_t control_draws = 200;
  auto* geodesic = app.add_subcommand("geodesic", "Rotation of the residual subspace between consecutive quarters");
  add_common(geodesic, common);
  geodesic->add_option("--rank", geo_rank, "Subspace rank K (default: global rank)")->check(CLI::PositiveNumber);
  geodesic->add_option("--train-len", train_len, "Residual window in quarters (default: train years x 4)")
      ->check(CLI::Range(3, 100000));
  geodesic->add_option("--norm", norm, "Geodesic norm")->check(CLI::IsMember({"l2", "l1", "max"}));
  geodesic->add_option("--random-draws", random_draws, "Haar baseline draws")->check(CLI::PositiveNumber);
  geodesic->add_option("--block", geo_block, "Block id for the matched sub-panel control");
  geodesic->add_option("--control-draws", control_draws, "Random sub-panels in the control")->check(CLI::PositiveNumber);
  bind(geodesic, [&](Run& run) {
    const auto& cfg = run.config();
    const auto panel = require_panel(cfg);
    const Index len = train_len.value_or(static_cast<Index>(cfg.train_years) * 4);
    const Index k = geo_rank.value_or(cfg.global_rank);
    const auto gnorm = parse_geodesic_norm(norm);
    const auto windows = rolling_residual_windows(panel.values, len, cfg.rho_clip);
    const auto series = rotation_series(residual_basis_series(windows, k, cfg.ewm_half_life), gnorm);
    const auto baseline = random_baseline(panel.n_actors(), k, random_draws, cfg.seed, gnorm);
    run.seed("random_baseline", cfg.seed);
    std::vector<std::string> labels(panel.quarters.begin() + (len - 1), panel.quarters.end());
    {
      auto f = run.open("geodesic_steps.csv");
      write_rotation_csv(f, labels, series);
    }
    json summary = rotation_summary_json(series);
    summary["rank"] = k;
    summary["train_len"] = len;
    summary["norm"] = norm;
    summary["random_baseline"] = {{"draws", random_draws}, {"mean", baseline.mean}, {"q05", baseline.q05},
                                  {"q50", baseline.q50},   {"q95", baseline.q95}};
    if (!geo_block.empty()) {
      const auto part = require_partition(cfg, panel);
      const auto rows = block_rows(panel, part);
      require(rows.count(geo_block) > 0, ErrorCode::invalid_partition, "unknown block '" + geo_block + "'");
      const auto& idx = rows.at(geo_block);
      const Index kb = std::min<Index>(cfg.local_rank.value_or(local_rank_rule(static_cast<Index>(idx.size()))),
                                       static_cast<Index>(idx.size()));
      const auto control = matched_subpanel_control(windows, idx, kb, control_draws, cfg.seed, cfg.ewm_half_life);
      run.seed("subpanel_control", cfg.seed);
      summary["subpanel_control"] = {{"block", geo_block},
                                     {"rank", kb},
                                     {"block_rotation", control.block_rotation},
                                     {"random_mean", mean_of(control.random_rotation)},
                                     {"p", control.p},
                                     {"draws", control_draws}};
    }
    auto f = run.open("geodesic_summary.json");
    f << summary.dump(2) << '\n';
    std::cout << "geodesic: mean step " << fixed(series.mean_step, 2) << " deg vs random " << fixed(baseline.mean, 2)
              << " deg\n";
    return kExitOk;
  });

  // synth --------------------------------------------------------------------
  std::string synth_config;
  bool homogeneous = false;
  Index homo_n = 146;
  double homo_rho = 0.6;
  Index synth_t = 84;
  auto* synth = app.add_subcommand("synth", "Generate a planted synthetic panel and its partition");
  synth->add_option("--out", common.out_dir, "Output directory (default: $HETPANEL_OUT or .)");
  synth->add_option("--seed", common.seed, "Generator seed");
  synth->add_option("--synth-config", synth_config, "Generator JSON (default: the 93-actor planted profile)")
      ->check(CLI::ExistingFile);
  synth->add_flag("--homogeneous", homogeneous, "Uniform-rho panel without block factors");
  synth->add_option("--n", homo_n, "Actors in the homogeneous panel")->check(CLI::PositiveNumber);
  synth->add_option("--rho", homo_rho, "AR(1) coefficient of the homogeneous panel")->check(CLI::Range(-0.999, 0.999));
  synth->add_option("--quarters", synth_t, "Panel length in quarters")->check(CLI::Range(2, 100000));
  bind(synth, [&](Run& run) {
    const std::uint64_t seed = run.config().seed;
    run.seed("generator", seed);
    Panel panel;
    std::optional<BlockPartition> part;
    if (homogeneous) {
      panel = generate_homogeneous_panel(seed, homo_n, homo_rho, synth_t);
      run.note("generator", {{"homogeneous", true}, {"n", homo_n}, {"rho", homo_rho}, {"T", synth_t}});
    } else {
      SynthConfig sc = default_heterogeneous_config(seed);
      if (!synth_config.empty()) {
        std::ifstream in(synth_config);
        try {
          sc = json::parse(in).get<SynthConfig>();
        } catch (const json::exception& e) {
          throw Error(ErrorCode::invalid_config, synth_config + ": " + e.what());
        }
        if (common.seed) sc.seed = seed;
      }
      if (synth_t != 84 || synth_config.empty()) sc.T = synth_t;
      panel = generate_heterogeneous_panel(sc);
      part = planted_partition(sc, panel);
      run.note("generator", sc);
    }
    {
      auto f = run.open("synth_panel.csv");
      write_panel(f, panel);
    }
    if (part) {
      auto f = run.open("synth_partition.csv");
      write_partition(f, *part, &panel);
    }
    std::cout << "synth: " << panel.n_actors() << " actors x " << panel.n_quarters() << " quarters\n";
    return kExitOk;
  });

  // report -------------------------------------------------------------------
  auto* report = app.add_subcommand("report", "All eight architectures against G1");
  add_common(report, common);
  bind(report, [&](Run& run) {
    const auto& cfg = run.config();
    const auto panel = require_panel(cfg);
    const auto part = require_partition(cfg, panel);
    const auto cal = calendar(cfg);
    const auto baseline = rolling_oos_evaluate(panel, architecture_spec(cfg, ArchKind::G1, part), cal);
    std::vector<ArchitectureRow> rows;
    for (const auto kind : {ArchKind::G0, ArchKind::BA, ArchKind::G1, ArchKind::ENS, ArchKind::S1, ArchKind::BA_M2,
                            ArchKind::M1, ArchKind::M2}) {
      ArchitectureRow row;
      row.name = std::string(to_string(kind));
      const auto res = kind == ArchKind::G1 ? baseline : rolling_oos_evaluate(panel, architecture_spec(cfg, kind, part), cal);
      row.mean_r2 = mean_r2(res, cfg.r2_convention);
      if (kind != ArchKind::G1) {
        row.vs_baseline = compare_deltas(loss_differentials(res, baseline, LossKind::window_r2, cfg.r2_convention),
                                         comparison_options(cfg));
      }
      rows.push_back(std::move(row));
    }
    run.seed("bootstrap", cfg.seed);
    {
      auto f = run.open("report.csv");
      write_architecture_table_csv(f, rows);
    }
    auto f = run.open("report.md");
    write_architecture_table_md(f, rows, "G1");
    std::cout << "report: " << rows.size() << " architectures\n";
    return kExitOk;
  });

  // sweep --------------------------------------------------------------------
  std::string train_grid = "2,3,5";
  std::string rank_grid = "2,3,4,6";
  auto* sweep = app.add_subcommand("sweep", "M2 vs G1 over a training-length x local-rank grid");
  add_common(sweep, common);
  sweep->add_option("--train-grid", train_grid, "Training lengths in years, comma-separated");
  sweep->add_option("--rank-grid", rank_grid, "Local ranks K_b, comma-separated");
  bind(sweep, [&](Run& run) {
    const auto& cfg = run.config();
    const auto panel = require_panel(cfg);
    const auto part = require_partition(cfg, panel);
    const auto cells = sweep_grid(panel, architecture_spec(cfg, ArchKind::M2, part), cfg.test_years,
                                  split_numbers<int>(train_grid), split_numbers<Index>(rank_grid));
    run.note("train_grid", train_grid);
    run.note("rank_grid", rank_grid);
    {
      auto f = run.open("sweep.csv");
      write_sweep_csv(f, cells);
    }
    auto f = run.open("sweep.md");
    write_sweep_md(f, cells);
    return kExitOk;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "hetpanel: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const Error& e) {
    std::cerr << "hetpanel: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "hetpanel: " << e.what() << '\n';
    return kExitRuntime;
  }
}
