// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <complex>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "hetpanel/hetpanel.hpp"

using namespace hetpanel;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;
  std::function<Outcome()> run;
};

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

Matrix gaussian(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = z(rng);
  return m;
}

Matrix random_orthogonal(Index n, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(n, n, rng));
  return qr.householderQ() * Matrix::Identity(n, n);
}

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

std::multiset<std::size_t> sizes_of(const Panel& panel, const BlockPartition& part) {
  std::multiset<std::size_t> s;
  for (const auto& [b, idx] : block_rows(panel, part)) s.insert(idx.size());
  return s;
}

// 20 firm actors; two planted local blocks.
SynthConfig small_config(std::uint64_t seed) {
  SynthConfig c;
  c.seed = seed;
  c.T = 40;
  c.start = {2015, 1};
  c.layers = {{Layer::firm, 20, 0.6, 1.0, false}};
  c.blocks = {{"A", 0, 8, 2, 0.8, 1.5, true}, {"B", 8, 6, 2, 0.8, 1.5, true}};
  return c;
}

Outcome g0_recovery() {
  const auto cfg = small_config(11);
  const auto panel = generate_heterogeneous_panel(cfg);
  ArchitectureSpec m2spec;
  m2spec.kind = ArchKind::M2;
  m2spec.partition = planted_partition(cfg, panel);
  ArchitectureSpec g0spec = m2spec;
  g0spec.kind = ArchKind::G0;
  const auto rows = block_rows(panel, m2spec.partition);
  std::size_t origins = 0;
  for (Index t = 24; t <= panel.n_quarters(); ++t) {
    const Matrix y = panel.values.leftCols(t);
    auto m2 = fit_architecture(m2spec, y, rows);
    const auto g0 = fit_architecture(g0spec, y, rows);
    zero_stage2(m2);
    const Vector a = forecast_architecture(m2, y.col(t - 1), y.col(t - 2));
    const Vector b = forecast_architecture(g0, y.col(t - 1), y.col(t - 2));
    if (!(a.array() == b.array()).all()) return {false, "mismatch at origin " + std::to_string(t)};
    ++origins;
  }
  return {true, std::to_string(origins) + " origins bit-identical"};
}

Outcome ens_identity() {
  const auto cfg = default_heterogeneous_config(31);
  const auto panel = generate_heterogeneous_panel(cfg);
  ArchitectureSpec spec;
  spec.partition = planted_partition(cfg, panel);
  RollingWindowSpec cal;
  cal.test_years = {2022, 2023, 2024};
  auto run = [&](ArchKind k) {
    spec.kind = k;
    return rolling_oos_evaluate(panel, spec, cal);
  };
  const auto ens = run(ArchKind::ENS);
  const auto g1 = run(ArchKind::G1);
  const auto ba = run(ArchKind::BA);
  double worst = 0.0;
  for (std::size_t w = 0; w < ens.size(); ++w)
    worst = std::max(worst, max_abs(ens[w].forecasts - 0.5 * (g1[w].forecasts + ba[w].forecasts)));
  return {worst <= 1e-12, "max |ENS - (G1+BA)/2| = " + fmt(worst)};
}

Outcome dmd_oracle() {
  std::mt19937_64 rng(25);
  Matrix a = Matrix::Zero(4, 4);
  const double mod[2] = {0.9, 0.8}, ang[2] = {0.4, 1.1};
  for (int j = 0; j < 2; ++j) {
    a(2 * j, 2 * j) = a(2 * j + 1, 2 * j + 1) = mod[j] * std::cos(ang[j]);
    a(2 * j, 2 * j + 1) = -mod[j] * std::sin(ang[j]);
    a(2 * j + 1, 2 * j) = mod[j] * std::sin(ang[j]);
  }
  const Matrix v = random_orthogonal(30, rng).leftCols(4);
  const Matrix m = v * a * v.transpose();
  Matrix x(30, 60);
  x.col(0) = v * gaussian(4, 1, rng);
  for (Index t = 1; t < 60; ++t) x.col(t) = m * x.col(t - 1);
  const auto b = exact_dmd(x, 4);
  auto sorted = [](const ComplexVector& e) {
    std::vector<std::complex<double>> s(e.data(), e.data() + e.size());
    std::sort(s.begin(), s.end(), [](auto p, auto q) { return p.real() != q.real() ? p.real() < q.real() : p.imag() < q.imag(); });
    return s;
  };
  const auto got = sorted(b.eigvals);
  const auto want = sorted(eigenvalues(a));
  double err = 0.0;
  for (std::size_t k = 0; k < 4; ++k) err = std::max(err, std::abs(got[k] - want[k]));
  const Matrix c = spectral_radius_clip((Matrix(2, 2) << 1.05, 0.0, 0.0, 0.90).finished());
  const bool clip_ok = std::abs(c(1, 1) - 0.8486) < 5e-5;
  return {err <= 1e-8 && clip_ok, "eigenvalue error " + fmt(err) + ", clipped 0.90 -> " + fmt(c(1, 1), 6)};
}

Outcome kalman() {
  std::mt19937_64 rng(35);
  const Matrix u = random_orthogonal(12, rng).leftCols(3);
  KalmanFilter filter(u, spectral_radius_clip(gaussian(3, 3, rng)), 0.5);
  double asym = 0.0, min_eig = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 100; ++t) {
    (void)filter.step(gaussian(12, 1, rng).col(0), t);
    const Matrix& p = filter.state().P;
    asym = std::max(asym, max_abs(p - p.transpose()));
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Matrix>(p).eigenvalues().minCoeff());
  }

  const Matrix u4 = random_orthogonal(12, rng).leftCols(4);
  const Matrix g = gaussian(4, 4, rng);
  const Matrix p = g * g.transpose() + 0.1 * Matrix::Identity(4, 4);
  const Matrix d = kalman_gain_direct(p, u4, 0.3);
  const double gain_err = max_abs(kalman_gain_woodbury(p, u4, 0.3) - d);

  const Index n = 6;
  SubspaceBasis b;
  b.K = n;
  b.U = random_orthogonal(n, rng);
  b.A_reduced = 0.9 * random_orthogonal(n, rng);
  EwmDemeaner dm;
  dm.mean = Vector::Zero(n);
  Matrix r(n, 40);
  r.col(0) = gaussian(n, 1, rng);
  const Matrix m = b.U * b.A_reduced * b.U.transpose();
  for (Index t = 1; t < 40; ++t) r.col(t) = m * r.col(t - 1);
  KalmanOptions opt;
  opt.sigma2_floor = 1e-20;
  const auto run = kalman_run(b, dm, r, TransitionMode::full, opt);
  double fc_err = max_abs(run.next_forecast - m * r.col(39));
  for (Index t = 1; t < 40; ++t) fc_err = std::max(fc_err, max_abs(run.forecasts.col(t) - m * r.col(t - 1)));

  const bool ok = asym <= 1e-12 && min_eig >= -1e-10 && gain_err <= 1e-9 && fc_err <= 1e-6;
  return {ok, "min eig(P) " + fmt(min_eig) + ", |K_wood - K_direct| " + fmt(gain_err) + ", noiseless error " +
                  fmt(fc_err)};
}

Outcome golden() {
  const double hln = hln_factor(10, 1);
  const double sign = sign_test(10, 10);
  const double neff = effective_sample_size(10.0, 0.11);
  std::vector<double> pv(7, 0.9);
  pv[0] = 0.05 / 7.0;
  const bool holm_edge = holm_bonferroni(pv)[0];
  pv[0] = 0.0072;
  const bool holm_over = holm_bonferroni(pv)[0];
  const bool ok = std::abs(hln - std::sqrt(0.9)) <= 1e-12 && sign == std::ldexp(1.0, -10) &&
                  std::abs(neff - 8.0) <= 0.1 && holm_edge && !holm_over && std::abs(0.05 / 7.0 - 0.00714) < 5e-6;
  return {ok, "HLN " + fmt(hln, 15) + ", sign " + fmt(sign, 6) + ", n_eff " + fmt(neff) + ", Holm threshold " +
                  fmt(0.05 / 7.0, 6)};
}

Outcome coverage() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> z(0.0, 1.0);
  const double mu = 0.3;
  int covered = 0;
  const int sets = 1000;
  std::vector<double> x(30);
  for (int s = 0; s < sets; ++s) {
    for (auto& v : x) v = mu + z(rng);
    const auto ci = paired_bootstrap_ci(x, 10000, 0.95, derive_seed(20240101, static_cast<std::uint64_t>(s))).ci;
    covered += (ci.lo <= mu && mu <= ci.hi) ? 1 : 0;
  }
  const double rate = static_cast<double>(covered) / sets;
  return {rate >= 0.93 && rate <= 0.97, "coverage " + fmt(rate)};
}

Outcome scope_condition() {
  const auto cfg = default_heterogeneous_config(20240101);
  const auto het = generate_heterogeneous_panel(cfg);
  ArchitectureSpec spec;
  spec.kind = ArchKind::M2;
  spec.partition = planted_partition(cfg, het);
  RollingWindowSpec cal;
  cal.test_years = year_range(2015, 2024);
  PlaceboOptions po;
  po.n_perms = 200;
  const auto h = placebo_test(het, spec, cal, po);

  auto null_cfg = cfg;
  null_cfg.seed = cfg.seed + 1;
  for (auto& b : null_cfg.blocks) b.loading_scale = 0.0;
  const auto null_panel = generate_heterogeneous_panel(null_cfg);
  spec.partition = planted_partition(null_cfg, null_panel);
  const auto n = placebo_test(null_panel, spec, cal, po);

  const bool het_ok = h.real_delta > 0.0 && h.real_wins >= 8 && h.z > 3.0;
  const bool null_ok = std::abs(n.real_delta) <= n.band_hi && std::abs(n.z) < 3.0;
  return {het_ok && null_ok, "planted delta " + fmt(h.real_delta) + " wins " + std::to_string(h.real_wins) +
                                 "/10 z " + fmt(h.z) + "; null delta " + fmt(n.real_delta) + " band [" +
                                 fmt(n.band_lo) + ", " + fmt(n.band_hi) + "] z " + fmt(n.z)};
}

bool same_results(const std::vector<WindowResult>& a, const std::vector<WindowResult>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!(a[k].forecasts.array() == b[k].forecasts.array()).all()) return false;
    if (!(a[k].actuals.array() == b[k].actuals.array()).all()) return false;
    if (a[k].train_sizes != b[k].train_sizes) return false;
  }
  return true;
}

Outcome causality() {
  const auto cfg = default_heterogeneous_config(808);
  const auto full = generate_heterogeneous_panel(cfg);
  const Index cut = 68;  // through 2020Q4
  const Panel short_panel = slice_quarters(full, 0, cut);
  ArchitectureSpec spec;
  spec.partition = planted_partition(cfg, full);
  RollingWindowSpec cal;
  cal.test_years = {2017, 2018, 2019, 2020};
  std::size_t checks = 0;
  for (auto kind : {ArchKind::G0, ArchKind::G1, ArchKind::S1, ArchKind::BA, ArchKind::BA_M2, ArchKind::M1,
                    ArchKind::M2, ArchKind::ENS, ArchKind::AR1, ArchKind::SSR}) {
    spec.kind = kind;
    if (!same_results(rolling_oos_evaluate(short_panel, spec, cal), rolling_oos_evaluate(full, spec, cal)))
      return {false, "forecasts changed for " + std::string(to_string(kind))};
    ++checks;
  }
  const auto rows = block_rows(full, spec.partition);
  for (Index origin : {Index{40}, Index{52}, Index{cut}}) {
    const auto a = fit_pooled_ar1_fe(short_panel.values.leftCols(origin));
    const auto b = fit_pooled_ar1_fe(full.values.leftCols(origin));
    if (a.rho != b.rho || !(a.actor_means.array() == b.actor_means.array()).all()) return {false, "pooled fit changed"};
    const auto ba = fit_block_ar1_fe(short_panel.values.leftCols(origin), rows);
    const auto bb = fit_block_ar1_fe(full.values.leftCols(origin), rows);
    for (const auto& [name, f] : ba.per_block)
      if (f.rho != bb.per_block.at(name).rho) return {false, "block fit changed"};
    checks += 2;
  }
  const auto na = minmax_normalize(short_panel, MinMaxMode::recursive);
  const auto nb = minmax_normalize(full, MinMaxMode::recursive);
  if (!(na.values.array() == nb.values.leftCols(cut).array()).all()) return {false, "recursive normalization changed"};
  ++checks;
  return {true, std::to_string(checks) + " checks unchanged after appending 16 quarters"};
}

Outcome placebo_mechanics() {
  const auto cfg = default_heterogeneous_config(20240101);
  const auto panel = generate_heterogeneous_panel(cfg);
  ArchitectureSpec spec;
  spec.kind = ArchKind::M2;
  spec.partition = planted_partition(cfg, panel);
  const auto want = sizes_of(panel, spec.partition);
  if (want != std::multiset<std::size_t>{11, 23, 25, 34}) return {false, "template sizes differ"};
  RollingWindowSpec cal;
  cal.test_years = year_range(2015, 2024);
  PlaceboOptions po;
  po.n_perms = 200;
  po.keep_partitions = true;
  const auto free = placebo_test(panel, spec, cal, po);

  std::set<std::string> fixed;
  for (const auto& [id, block] : spec.partition.assignment)
    if (block == "A" || block == spec.partition.remainder_block) fixed.insert(id);
  po.fixed_actors = fixed;
  po.n_perms = 50;
  const auto strat = placebo_test(panel, spec, cal, po);

  for (const auto* r : {&free, &strat}) {
    for (const auto& part : r->partitions)
      if (sizes_of(panel, part) != want) return {false, "size multiset changed"};
    const double floor = 1.0 / static_cast<double>(r->perm_deltas.size() + 1);
    if (r->p < floor) return {false, "p below 1/(n+1)"};
  }
  std::size_t moved = 0;
  for (const auto& part : strat.partitions)
    for (const auto& id : fixed) moved += part.assignment.at(id) != spec.partition.assignment.at(id) ? 1 : 0;
  return {moved == 0, "200 free + 50 stratified permutations, fixed actors moved: " + std::to_string(moved) +
                          ", p = " + fmt(free.p)};
}

Outcome geometry() {
  std::mt19937_64 rng(81);
  const Matrix u = random_subspace(9, 3, rng);
  double same = 0.0;
  for (double x : principal_angles(u, u)) same = std::max(same, std::abs(x));
  const Matrix e1 = Vector::Unit(2, 0), e2 = Vector::Unit(2, 1);
  const double ortho = principal_angles(e1, e2)[0];
  const Matrix a = random_subspace(12, 4, rng), b = random_subspace(12, 4, rng);
  const auto ab = principal_angles(a, b);
  const auto rot = principal_angles(a * random_orthogonal(4, rng), b * random_orthogonal(4, rng));
  double inv = 0.0;
  for (std::size_t k = 0; k < ab.size(); ++k) inv = std::max(inv, std::abs(ab[k] - rot[k]));
  const double total = geodesic_distance({45.8, 18.0});
  const double ratio = 45.8 / total;
  const bool ok = same < 1e-6 && std::abs(ortho - 90.0) < 1e-12 && inv <= 1e-9 && std::abs(ratio - 0.93) < 0.005;
  return {ok, "identical " + fmt(same) + " deg, orthogonal " + fmt(ortho) + " deg, rotation drift " + fmt(inv) +
                  ", theta1/total " + fmt(ratio)};
}

Outcome short_window() {
  double d2 = 0.0, d5 = 0.0;
  for (std::uint64_t s = 1000; s < 1010; ++s) {
    const auto cfg = default_heterogeneous_config(s);
    const auto panel = generate_heterogeneous_panel(cfg);
    ArchitectureSpec spec;
    spec.kind = ArchKind::M2;
    spec.partition = planted_partition(cfg, panel);
    for (int ty : {2, 5}) {
      RollingWindowSpec cal;
      cal.train_years = ty;
      cal.test_years = year_range(2015, 2024);
      const auto prep = prepare_evaluation(panel, spec, cal);
      const auto g1 = evaluate_prepared(prep, ArchKind::G1, spec.partition, {});
      const auto m2 = evaluate_prepared(prep, ArchKind::M2, spec.partition, block_rows(panel, spec.partition));
      (ty == 2 ? d2 : d5) += summarize_delta(m2, g1).delta / 10.0;
    }
  }
  return {d2 > d5, "mean delta T=2y " + fmt(d2) + ", T=5y " + fmt(d5)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "G0 recovery", 5, g0_recovery},
      {2, "ENS identity", 5, ens_identity},
      {3, "DMD oracle", 5, dmd_oracle},
      {4, "Kalman correctness", 10, kalman},
      {5, "Inference golden values", 1, golden},
      {6, "Bootstrap coverage", 60, coverage},
      {7, "Scope-condition reproduction", 600, scope_condition},
      {8, "Causality suite", 30, causality},
      {9, "Placebo mechanics", 120, placebo_mechanics},
      {10, "Geometry", 5, geometry},
      {11, "Short-window amplification", 900, short_window},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s [%2d] %s: %s (%.2fs, limit %.0fs%s)\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs, c.limit_s, in_time ? "" : ", over time");
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
