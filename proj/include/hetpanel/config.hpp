#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hetpanel/evaluation.hpp"
#include "hetpanel/inference.hpp"
#include "hetpanel/mixture.hpp"

namespace hetpanel {

/// Run configuration. Defaults reproduce the hyperparameter inventory:
/// global rank 8, local rank from the N_b/5 rule, EWM half-life 12, ridge
/// lambda 1.0, ridge alpha grid {0.1, 1, 10} x N_b, spectral clip 0.99,
/// Kalman Q0 0.5 I, lambda_Q 0.3, Q floor 1e-6, five training years,
/// 10,000 bootstrap resamples and 1,000 placebo permutations.
struct RunConfig {
  std::uint64_t seed = 20240101;

  std::optional<std::string> panel_path;
  std::optional<std::string> partition_path;

  EngineKind global_engine = EngineKind::pca_ridge;
  Index global_rank = 8;
  EngineKind local_engine = EngineKind::pca_ridge;
  std::optional<Index> local_rank;  // unset: min(4, max(2, N_b/5))
  double ridge_lambda = 1.0;
  std::vector<double> ridge_alphas{0.1, 1.0, 10.0};
  double ewm_half_life = kDefaultHalfLife;
  double spectral_radius_clip = kSpectralCap;
  double rho_clip = kRhoClip;
  double kalman_q0 = 0.5;
  double kalman_lambda_q = 0.3;
  double kalman_q_floor = 1e-6;

  int train_years = 5;
  std::vector<int> test_years = year_range(2015, 2024);
  R2Convention r2_convention = R2Convention::test_mean;

  std::size_t bootstrap_resamples = 10000;
  double confidence_level = 0.95;
  std::vector<std::size_t> hac_bandwidths{1, 2, 3};
  std::vector<std::size_t> block_lengths{2, 3};
  std::size_t placebo_permutations = 1000;
  double win_fraction = 0.8;
};

[[nodiscard]] inline std::string_view to_string(R2Convention c) noexcept {
  return c == R2Convention::test_mean ? "test_mean" : "train_mean";
}

[[nodiscard]] inline R2Convention parse_r2_convention(std::string_view s) {
  if (s == "test_mean") return R2Convention::test_mean;
  if (s == "train_mean") return R2Convention::train_mean;
  throw Error(ErrorCode::invalid_config, "unknown R2 convention '" + std::string(s) + "'");
}

/// "2015..2024", "2015,2017" or a single year.
[[nodiscard]] inline std::vector<int> parse_year_list(std::string_view s) {
  auto to_int = [&](std::string_view t) {
    int v = 0;
    const auto* end = t.data() + t.size();
    const auto [p, ec] = std::from_chars(t.data(), end, v);
    require(ec == std::errc{} && p == end, ErrorCode::invalid_config, "bad year list '" + std::string(s) + "'");
    return v;
  };
  if (const auto dots = s.find(".."); dots != std::string_view::npos) {
    const int a = to_int(s.substr(0, dots));
    const int b = to_int(s.substr(dots + 2));
    require(a <= b, ErrorCode::invalid_config, "empty year range '" + std::string(s) + "'");
    return year_range(a, b);
  }
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    out.push_back(to_int(piece));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (std::size_t i = 1; i < out.size(); ++i) {
    require(out[i - 1] < out[i], ErrorCode::invalid_config, "years must be strictly increasing");
  }
  return out;
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json::object();
  j["seed"] = c.seed;
  if (c.panel_path) j["panel"] = *c.panel_path;
  if (c.partition_path) j["partition"] = *c.partition_path;
  j["global_engine"] = std::string(to_string(c.global_engine));
  j["global_rank"] = c.global_rank;
  j["local_engine"] = std::string(to_string(c.local_engine));
  j["local_rank"] = c.local_rank ? nlohmann::json(*c.local_rank) : nlohmann::json("rule");
  j["ridge_lambda"] = c.ridge_lambda;
  j["ridge_alphas"] = c.ridge_alphas;
  j["ewm_half_life"] = c.ewm_half_life;
  j["spectral_radius_clip"] = c.spectral_radius_clip;
  j["rho_clip"] = c.rho_clip;
  j["kalman_q0"] = c.kalman_q0;
  j["kalman_lambda_q"] = c.kalman_lambda_q;
  j["kalman_q_floor"] = c.kalman_q_floor;
  j["train_years"] = c.train_years;
  j["test_years"] = c.test_years;
  j["r2_convention"] = std::string(to_string(c.r2_convention));
  j["bootstrap_resamples"] = c.bootstrap_resamples;
  j["confidence_level"] = c.confidence_level;
  j["hac_bandwidths"] = c.hac_bandwidths;
  j["block_lengths"] = c.block_lengths;
  j["placebo_permutations"] = c.placebo_permutations;
  j["win_fraction"] = c.win_fraction;
}

inline void validate(const RunConfig& c) {
  require(c.global_rank >= 1, ErrorCode::invalid_config, "global_rank must be >= 1");
  require(!c.local_rank || *c.local_rank >= 1, ErrorCode::invalid_config, "local_rank must be >= 1");
  require(c.ridge_lambda >= 0.0, ErrorCode::invalid_config, "ridge_lambda must be >= 0");
  require(!c.ridge_alphas.empty(), ErrorCode::invalid_config, "ridge_alphas must be non-empty");
  for (const double a : c.ridge_alphas) require(a > 0.0, ErrorCode::invalid_config, "ridge_alphas must be > 0");
  require(c.ewm_half_life > 0.0, ErrorCode::invalid_config, "ewm_half_life must be > 0");
  require(c.spectral_radius_clip > 0.0, ErrorCode::invalid_config, "spectral_radius_clip must be > 0");
  require(c.rho_clip > 0.0 && c.rho_clip < 1.0, ErrorCode::invalid_config, "rho_clip must be in (0, 1)");
  require(c.kalman_q0 > 0.0 && c.kalman_q_floor > 0.0, ErrorCode::invalid_config, "Kalman Q0 and floor must be > 0");
  require(c.kalman_lambda_q >= 0.0 && c.kalman_lambda_q <= 1.0, ErrorCode::invalid_config,
          "kalman_lambda_q must be in [0, 1]");
  require(c.train_years >= 1, ErrorCode::invalid_config, "train_years must be >= 1");
  require(!c.test_years.empty(), ErrorCode::invalid_config, "test_years must be non-empty");
  require(c.bootstrap_resamples >= 1, ErrorCode::invalid_config, "bootstrap_resamples must be >= 1");
  require(c.confidence_level > 0.0 && c.confidence_level < 1.0, ErrorCode::invalid_config,
          "confidence_level must be in (0, 1)");
  require(c.win_fraction > 0.0 && c.win_fraction <= 1.0, ErrorCode::invalid_config, "win_fraction must be in (0, 1]");
}

namespace detail {

/// 1-based line and column of a byte offset.
[[nodiscard]] inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t offset) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

/// Line of the first `"key"` occurrence, for diagnostics on valid JSON.
[[nodiscard]] inline std::size_t key_line(std::string_view text, const std::string& key) {
  const auto at = text.find('"' + key + '"');
  return at == std::string_view::npos ? 0 : line_col(text, at).first;
}

}  // namespace detail

/// Parses the JSON config. Syntax errors report line and column; unknown
/// keys and ill-typed values report the key and its line.
[[nodiscard]] inline RunConfig parse_run_config(std::string_view text, const std::string& source = "<config>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t at = e.byte == 0 ? 0 : e.byte - 1;
    const auto [line, col] = detail::line_col(text, at);
    std::string what = e.what();
    if (const auto p = what.find("parse error"); p != std::string::npos) what = what.substr(p);
    throw Error(ErrorCode::invalid_config,
                source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what);
  }
  require(j.is_object(), ErrorCode::invalid_config, source + ":1:1: top level must be an object");

  RunConfig c;
  auto fail = [&](const std::string& key, const std::string& why) {
    const auto line = detail::key_line(text, key);
    throw Error(ErrorCode::invalid_config,
                source + ":" + (line ? std::to_string(line) : std::string("?")) + ": key '" + key + "': " + why);
  };
  static const std::set<std::string> known{
      "seed",           "panel",          "partition",        "global_engine",        "global_rank",
      "local_engine",   "local_rank",     "ridge_lambda",     "ridge_alphas",         "ewm_half_life",
      "spectral_radius_clip", "rho_clip", "kalman_q0",        "kalman_lambda_q",      "kalman_q_floor",
      "train_years",    "test_years",     "r2_convention",    "bootstrap_resamples",  "confidence_level",
      "hac_bandwidths", "block_lengths",  "placebo_permutations", "win_fraction"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) fail(key, "unknown key");
  }
  auto get = [&]<class T>(const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(key, "unexpected type " + std::string(j.at(key).type_name()));
    } catch (const Error& e) {
      fail(key, e.what());
    }
  };
  get("seed", c.seed);
  if (j.contains("panel")) {
    std::string p;
    get("panel", p);
    c.panel_path = p;
  }
  if (j.contains("partition")) {
    std::string p;
    get("partition", p);
    c.partition_path = p;
  }
  auto engine = [&](const char* key, EngineKind& out) {
    if (!j.contains(key)) return;
    std::string s;
    get(key, s);
    try {
      out = parse_engine(s);
    } catch (const Error& e) {
      fail(key, e.what());
    }
  };
  engine("global_engine", c.global_engine);
  engine("local_engine", c.local_engine);
  get("global_rank", c.global_rank);
  if (j.contains("local_rank")) {
    const auto& v = j.at("local_rank");
    if (v.is_string() && v.get<std::string>() == "rule") {
      c.local_rank.reset();
    } else if (v.is_number_integer()) {
      c.local_rank = v.get<Index>();
    } else {
      fail("local_rank", "expected an integer or \"rule\"");
    }
  }
  get("ridge_lambda", c.ridge_lambda);
  get("ridge_alphas", c.ridge_alphas);
  get("ewm_half_life", c.ewm_half_life);
  get("spectral_radius_clip", c.spectral_radius_clip);
  get("rho_clip", c.rho_clip);
  get("kalman_q0", c.kalman_q0);
  get("kalman_lambda_q", c.kalman_lambda_q);
  get("kalman_q_floor", c.kalman_q_floor);
  get("train_years", c.train_years);
  if (j.contains("test_years")) {
    const auto& v = j.at("test_years");
    try {
      c.test_years = v.is_string() ? parse_year_list(v.get<std::string>()) : v.get<std::vector<int>>();
    } catch (const nlohmann::json::exception&) {
      fail("test_years", "expected a year list or a \"first..last\" string");
    } catch (const Error& e) {
      fail("test_years", e.what());
    }
  }
  if (j.contains("r2_convention")) {
    std::string s;
    get("r2_convention", s);
    try {
      c.r2_convention = parse_r2_convention(s);
    } catch (const Error& e) {
      fail("r2_convention", e.what());
    }
  }
  get("bootstrap_resamples", c.bootstrap_resamples);
  get("confidence_level", c.confidence_level);
  get("hac_bandwidths", c.hac_bandwidths);
  get("block_lengths", c.block_lengths);
  get("placebo_permutations", c.placebo_permutations);
  get("win_fraction", c.win_fraction);
  try {
    validate(c);
  } catch (const Error& e) {
    throw Error(ErrorCode::invalid_config, source + ": " + e.what());
  }
  return c;
}

[[nodiscard]] inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_error, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string());
}

/// FNV-1a over the canonical JSON dump; stable across platforms.
[[nodiscard]] inline std::string config_hash(const RunConfig& c) {
  const std::string canon = nlohmann::json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

[[nodiscard]] inline EngineOptions engine_options(const RunConfig& c, EngineKind kind, Index rank) {
  EngineOptions o;
  o.kind = kind;
  o.rank = rank;
  o.ridge_lambda = c.ridge_lambda;
  o.ridge_alphas = c.ridge_alphas;
  o.half_life = c.ewm_half_life;
  o.spectral_cap = c.spectral_radius_clip;
  o.rho_clip = c.rho_clip;
  o.kalman.q0 = c.kalman_q0;
  o.kalman.lambda_q = c.kalman_lambda_q;
  o.kalman.q_floor = c.kalman_q_floor;
  return o;
}

[[nodiscard]] inline ArchitectureSpec architecture_spec(const RunConfig& c, ArchKind kind,
                                                        const BlockPartition& partition) {
  ArchitectureSpec s;
  s.kind = kind;
  s.partition = partition;
  s.global_engine = engine_options(c, c.global_engine, c.global_rank);
  s.local_engine = engine_options(c, c.local_engine, c.local_rank.value_or(2));
  s.local_rank_override = c.local_rank;
  s.local_ridge_alphas = c.ridge_alphas;
  s.rho_clip = c.rho_clip;
  return s;
}

[[nodiscard]] inline RollingWindowSpec calendar(const RunConfig& c) {
  RollingWindowSpec cal;
  cal.test_years = c.test_years;
  cal.train_years = c.train_years;
  return cal;
}

[[nodiscard]] inline ComparisonOptions comparison_options(const RunConfig& c) {
  ComparisonOptions o;
  o.resamples = c.bootstrap_resamples;
  o.level = c.confidence_level;
  o.seed = c.seed;
  o.hac_bandwidths = c.hac_bandwidths;
  o.block_lengths = c.block_lengths;
  return o;
}

}  // namespace hetpanel
