#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "hetpanel/panel.hpp"

namespace hetpanel {

struct SynthLayer {
  Layer layer = Layer::firm;
  Index count = 1;
  double rho = 0.6;
  double noise = 1.0;
  bool rank_transform = false;  // percentile ranks within the layer, per quarter
};

struct SynthBlock {
  std::string name;
  Index first = 0;  // actor range [first, first + count)
  Index count = 0;
  Index factor_k = 1;
  double factor_rho = 0.8;
  double loading_scale = 1.0;
  bool local = true;
};

/// y_it = mu_i + rho_L (y_i,t-1 - mu_i) + lambda_i' f_b,t + eps_it, with
/// f_b,t = phi_b f_b,t-1 + eta_t scaled to unit stationary variance. The
/// factor term is the Stage-1 innovation, so it survives in the residuals.
struct SynthConfig {
  std::uint64_t seed = 1;
  Index T = 84;
  Quarter start{2004, 1};
  double fe_scale = 1.0;
  Index burn_in = 50;
  Index common_k = 0;  // factors loading on every actor
  double common_rho = 0.8;
  double common_loading_scale = 0.0;
  std::vector<SynthLayer> layers;
  std::vector<SynthBlock> blocks;
};

inline void to_json(nlohmann::json& j, const SynthLayer& l) {
  j = {{"layer", std::string(to_string(l.layer))},
       {"count", l.count},
       {"rho", l.rho},
       {"noise", l.noise},
       {"rank_transform", l.rank_transform}};
}

inline void from_json(const nlohmann::json& j, SynthLayer& l) {
  l.layer = parse_layer(j.at("layer").get<std::string>());
  l.count = j.at("count").get<Index>();
  l.rho = j.at("rho").get<double>();
  l.noise = j.value("noise", 1.0);
  l.rank_transform = j.value("rank_transform", false);
}

inline void to_json(nlohmann::json& j, const SynthBlock& b) {
  j = {{"name", b.name},         {"first", b.first},           {"count", b.count},         {"factor_k", b.factor_k},
       {"factor_rho", b.factor_rho}, {"loading_scale", b.loading_scale}, {"local", b.local}};
}

inline void from_json(const nlohmann::json& j, SynthBlock& b) {
  b.name = j.at("name").get<std::string>();
  b.first = j.at("first").get<Index>();
  b.count = j.at("count").get<Index>();
  b.factor_k = j.value("factor_k", Index{1});
  b.factor_rho = j.value("factor_rho", 0.8);
  b.loading_scale = j.value("loading_scale", 1.0);
  b.local = j.value("local", true);
}

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"seed", c.seed},         {"T", c.T},           {"start", c.start.label()}, {"fe_scale", c.fe_scale},
       {"burn_in", c.burn_in},   {"common_k", c.common_k}, {"common_rho", c.common_rho},
       {"common_loading_scale", c.common_loading_scale}, {"layers", c.layers}, {"blocks", c.blocks}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.seed = j.value("seed", std::uint64_t{1});
  c.T = j.value("T", Index{84});
  const auto start = parse_quarter(j.value("start", std::string("2004Q1")));
  require(start.has_value(), ErrorCode::invalid_config, "bad start quarter");
  c.start = *start;
  c.fe_scale = j.value("fe_scale", 1.0);
  c.burn_in = j.value("burn_in", Index{50});
  c.common_k = j.value("common_k", Index{0});
  c.common_rho = j.value("common_rho", 0.8);
  c.common_loading_scale = j.value("common_loading_scale", 0.0);
  c.layers = j.at("layers").get<std::vector<SynthLayer>>();
  c.blocks = j.value("blocks", std::vector<SynthBlock>{});
}

inline void validate(const SynthConfig& c) {
  require(!c.layers.empty(), ErrorCode::invalid_config, "no layers");
  require(c.T >= 2, ErrorCode::invalid_config, "T must be >= 2");
  require(c.burn_in >= 0, ErrorCode::invalid_config, "burn_in must be >= 0");
  require(c.common_k >= 0, ErrorCode::invalid_config, "common_k must be >= 0");
  require(std::abs(c.common_rho) < 1.0, ErrorCode::invalid_config, "|common_rho| must be < 1");
  Index n = 0;
  for (const auto& l : c.layers) {
    require(l.count >= 1, ErrorCode::invalid_config, "layer count must be >= 1");
    require(std::abs(l.rho) < 1.0, ErrorCode::invalid_config, "layer |rho| must be < 1");
    require(l.noise >= 0.0, ErrorCode::invalid_config, "layer noise must be >= 0");
    require(!l.rank_transform || l.count >= 2, ErrorCode::invalid_config, "rank transform needs >= 2 actors");
    n += l.count;
  }
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  for (std::size_t b = 0; b < c.blocks.size(); ++b) {
    const auto& blk = c.blocks[b];
    require(!blk.name.empty() && blk.name != "remainder", ErrorCode::invalid_config, "bad block name");
    require(blk.count >= 1 && blk.first >= 0 && blk.first + blk.count <= n, ErrorCode::invalid_config,
            "block " + blk.name + " range outside the panel");
    require(blk.factor_k >= 1, ErrorCode::invalid_config, "block " + blk.name + " factor_k must be >= 1");
    require(std::abs(blk.factor_rho) < 1.0, ErrorCode::invalid_config, "block " + blk.name + " |factor_rho| must be < 1");
    for (Index i = blk.first; i < blk.first + blk.count; ++i) {
      require(owner[static_cast<std::size_t>(i)] < 0, ErrorCode::invalid_config, "blocks overlap at actor " + std::to_string(i));
      owner[static_cast<std::size_t>(i)] = static_cast<int>(b);
    }
  }
}

[[nodiscard]] inline std::string synth_actor_id(Layer layer, Index i) {
  const char prefix = layer == Layer::macro ? 'm' : layer == Layer::institutional ? 'i' : 'f';
  std::string digits = std::to_string(i);
  while (digits.size() < 3) digits.insert(digits.begin(), '0');
  return std::string(1, prefix) + digits;
}

/// Actors are numbered across layers in order; an actor's sector is its
/// planted block name, or "remainder".
[[nodiscard]] inline Panel generate_heterogeneous_panel(const SynthConfig& config) {
  validate(config);
  std::mt19937_64 engine(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Index n = 0;
  for (const auto& l : config.layers) n += l.count;
  Panel panel;
  panel.registry.resize(static_cast<std::size_t>(n));
  Vector rho(n);
  Vector noise(n);
  {
    Index i = 0;
    for (const auto& l : config.layers) {
      for (Index k = 0; k < l.count; ++k, ++i) {
        panel.registry[static_cast<std::size_t>(i)] = {synth_actor_id(l.layer, i), l.layer, "remainder"};
        rho(i) = l.rho;
        noise(i) = l.noise;
      }
    }
  }
  for (const auto& b : config.blocks) {
    for (Index i = b.first; i < b.first + b.count; ++i) panel.registry[static_cast<std::size_t>(i)].sector = b.name;
  }

  Vector mu(n);
  for (Index i = 0; i < n; ++i) mu(i) = config.fe_scale * normal(engine);
  std::vector<Matrix> loadings;
  for (const auto& b : config.blocks) {
    Matrix lam(b.count, b.factor_k);
    for (Index r = 0; r < b.count; ++r) {
      for (Index k = 0; k < b.factor_k; ++k) lam(r, k) = b.loading_scale * normal(engine);
    }
    loadings.push_back(std::move(lam));
  }
  Matrix common_loadings(n, config.common_k);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < config.common_k; ++k) common_loadings(i, k) = config.common_loading_scale * normal(engine);
  }
  Vector common = Vector::Zero(config.common_k);
  for (Index k = 0; k < config.common_k; ++k) common(k) = normal(engine);

  const Index total = config.T + config.burn_in;
  std::vector<Vector> factors;
  for (const auto& b : config.blocks) factors.push_back(Vector::Zero(b.factor_k));
  for (std::size_t b = 0; b < config.blocks.size(); ++b) {
    for (Index k = 0; k < config.blocks[b].factor_k; ++k) factors[b](k) = normal(engine);
  }
  Vector y = mu;
  for (Index i = 0; i < n; ++i) y(i) += noise(i) / std::sqrt(1.0 - rho(i) * rho(i)) * normal(engine);
  panel.values.resize(n, config.T);
  for (Index t = 0; t < total; ++t) {
    Vector innovation(n);
    for (Index i = 0; i < n; ++i) innovation(i) = noise(i) * normal(engine);
    if (config.common_k > 0) {
      const double eta = std::sqrt(1.0 - config.common_rho * config.common_rho);
      for (Index k = 0; k < config.common_k; ++k) common(k) = config.common_rho * common(k) + eta * normal(engine);
      innovation += common_loadings * common;
    }
    for (std::size_t b = 0; b < config.blocks.size(); ++b) {
      const auto& blk = config.blocks[b];
      const double eta = std::sqrt(1.0 - blk.factor_rho * blk.factor_rho);
      for (Index k = 0; k < blk.factor_k; ++k) factors[b](k) = blk.factor_rho * factors[b](k) + eta * normal(engine);
      innovation.segment(blk.first, blk.count) += loadings[b] * factors[b];
    }
    y = mu + rho.cwiseProduct(y - mu) + innovation;
    if (t >= config.burn_in) panel.values.col(t - config.burn_in) = y;
  }

  Index first = 0;
  for (const auto& l : config.layers) {
    if (l.rank_transform) {
      for (Index t = 0; t < config.T; ++t) {
        const Vector r = midranks(panel.values.col(t).segment(first, l.count));
        panel.values.col(t).segment(first, l.count) = (r.array() - 1.0) / static_cast<double>(l.count - 1);
      }
    }
    first += l.count;
  }

  panel.quarters = quarter_range(config.start, static_cast<std::size_t>(config.T));
  panel.provenance.push_back("synth " + nlohmann::json(config).dump());
  validate(panel);
  return panel;
}

/// Uniform-rho panel with no block factors.
[[nodiscard]] inline Panel generate_homogeneous_panel(std::uint64_t seed, Index n, double rho, Index T,
                                                      Quarter start = {2004, 1}, double noise = 1.0) {
  SynthConfig c;
  c.seed = seed;
  c.T = T;
  c.start = start;
  c.layers.push_back({Layer::firm, n, rho, noise, false});
  return generate_heterogeneous_panel(c);
}

/// Partition with the planted blocks (flagged as configured) and everything
/// else in "remainder".
[[nodiscard]] inline BlockPartition planted_partition(const SynthConfig& config, const Panel& panel) {
  BlockPartition p;
  p.remainder_block = "remainder";
  for (const auto& a : panel.registry) p.assignment[a.actor_id] = "remainder";
  for (const auto& b : config.blocks) {
    for (Index i = b.first; i < b.first + b.count; ++i) p.assignment[panel.registry[static_cast<std::size_t>(i)].actor_id] = b.name;
    if (b.local) p.local_blocks.insert(b.name);
  }
  return p;
}

/// The 93-actor profile: 7 macro actors at rho 0.88, 86 rank-transformed
/// firms at 0.60, and three planted local blocks of 23, 11 and 25 firms
/// leaving a 34-actor remainder. Macro noise is kept on the scale of the
/// firm ranks.
[[nodiscard]] inline SynthConfig default_heterogeneous_config(std::uint64_t seed = 20240101) {
  SynthConfig c;
  c.seed = seed;
  c.T = 84;
  c.start = {2004, 1};
  c.layers = {{Layer::macro, 7, 0.88, 0.05, false}, {Layer::firm, 86, 0.60, 1.0, true}};
  c.blocks = {{"A", 7, 23, 3, 0.8, 1.5, true}, {"B", 30, 11, 3, 0.8, 1.5, true}, {"C", 41, 25, 3, 0.8, 1.5, true}};
  return c;
}

}  // namespace hetpanel
