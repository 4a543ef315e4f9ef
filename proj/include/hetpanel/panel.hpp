#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hetpanel/error.hpp"

namespace hetpanel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Layer { macro, institutional, firm };

[[nodiscard]] inline std::string_view to_string(Layer layer) noexcept {
  switch (layer) {
    case Layer::macro: return "macro";
    case Layer::institutional: return "institutional";
    case Layer::firm: return "firm";
  }
  return "firm";
}

[[nodiscard]] inline Layer parse_layer(std::string_view text) {
  if (text == "macro") return Layer::macro;
  if (text == "institutional") return Layer::institutional;
  if (text == "firm") return Layer::firm;
  throw Error(ErrorCode::registry_conflict, "unknown layer '" + std::string(text) + "'");
}

struct ActorMeta {
  std::string actor_id;
  Layer layer = Layer::firm;
  std::string sector;

  friend bool operator==(const ActorMeta&, const ActorMeta&) = default;
};

// ---------------------------------------------------------------------------
// Quarter labels: "YYYYQn". Calendar arithmetic is done on the integer
// ordinal year*4 + (n-1).

struct Quarter {
  int year = 0;
  int q = 1;  // 1..4

  [[nodiscard]] constexpr int ordinal() const noexcept { return year * 4 + (q - 1); }
  [[nodiscard]] static constexpr Quarter from_ordinal(int ord) noexcept {
    const int y = ord >= 0 ? ord / 4 : -((-ord + 3) / 4);
    return Quarter{y, ord - y * 4 + 1};
  }
  [[nodiscard]] std::string label() const { return std::to_string(year) + "Q" + std::to_string(q); }

  friend constexpr auto operator<=>(const Quarter&, const Quarter&) = default;
};

[[nodiscard]] inline std::optional<Quarter> parse_quarter(std::string_view text) noexcept {
  const auto pos = text.find('Q');
  if (pos == std::string_view::npos || pos == 0 || pos + 2 != text.size()) return std::nullopt;
  int year = 0;
  const auto* begin = text.data();
  const auto [ptr, ec] = std::from_chars(begin, begin + pos, year);
  if (ec != std::errc{} || ptr != begin + pos) return std::nullopt;
  const char qc = text[pos + 1];
  if (qc < '1' || qc > '4') return std::nullopt;
  return Quarter{year, qc - '0'};
}

[[nodiscard]] inline std::vector<std::string> quarter_range(Quarter first, std::size_t count) {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(Quarter::from_ordinal(first.ordinal() + static_cast<int>(k)).label());
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Balanced N x T panel: rows are actors, columns are quarters.
struct Panel {
  Matrix values;
  std::vector<std::string> quarters;
  std::vector<ActorMeta> registry;
  /// Free-form provenance lines (synthetic config, source notes). Written as
  /// leading '#' comment lines in the CSV form.
  std::vector<std::string> provenance;

  [[nodiscard]] Index n_actors() const noexcept { return values.rows(); }
  [[nodiscard]] Index n_quarters() const noexcept { return values.cols(); }

  [[nodiscard]] std::optional<Index> actor_index(std::string_view id) const {
    for (std::size_t i = 0; i < registry.size(); ++i) {
      if (registry[i].actor_id == id) return static_cast<Index>(i);
    }
    return std::nullopt;
  }

  [[nodiscard]] std::optional<Index> quarter_index(std::string_view label) const {
    for (std::size_t t = 0; t < quarters.size(); ++t) {
      if (quarters[t] == label) return static_cast<Index>(t);
    }
    return std::nullopt;
  }

  [[nodiscard]] std::vector<std::string> actor_ids() const {
    std::vector<std::string> ids;
    ids.reserve(registry.size());
    for (const auto& a : registry) ids.push_back(a.actor_id);
    return ids;
  }

  friend bool operator==(const Panel& a, const Panel& b) {
    return a.quarters == b.quarters && a.registry == b.registry && a.provenance == b.provenance &&
           a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols() &&
           (a.values.array() == b.values.array()).all();
  }
};

/// Throws on any violated Panel invariant.
inline void validate(const Panel& panel) {
  const auto n = static_cast<std::size_t>(panel.values.rows());
  const auto t = static_cast<std::size_t>(panel.values.cols());
  require(n == panel.registry.size(), ErrorCode::registry_conflict,
          "registry has " + std::to_string(panel.registry.size()) + " actors, values have " + std::to_string(n) +
              " rows");
  require(t == panel.quarters.size(), ErrorCode::calendar_error, "quarter label count does not match columns");
  std::unordered_set<std::string> seen;
  for (const auto& a : panel.registry) {
    require(!a.actor_id.empty(), ErrorCode::registry_conflict, "empty actor_id");
    require(!a.sector.empty(), ErrorCode::registry_conflict, "empty sector for actor " + a.actor_id);
    require(seen.insert(a.actor_id).second, ErrorCode::registry_conflict, "duplicate actor_id " + a.actor_id);
  }
  std::optional<int> prev;
  for (const auto& label : panel.quarters) {
    const auto q = parse_quarter(label);
    require(q.has_value(), ErrorCode::calendar_error, "bad quarter label '" + label + "'");
    require(!prev || q->ordinal() > *prev, ErrorCode::calendar_error, "quarter labels not increasing at " + label);
    prev = q->ordinal();
  }
  require(panel.values.allFinite(), ErrorCode::unbalanced_panel, "non-finite cell");
}

/// Column slice [first, first+count).
[[nodiscard]] inline Panel slice_quarters(const Panel& panel, Index first, Index count) {
  require(first >= 0 && count >= 0 && first + count <= panel.n_quarters(), ErrorCode::precondition,
          "quarter slice out of range");
  Panel out;
  out.values = panel.values.middleCols(first, count);
  out.quarters.assign(panel.quarters.begin() + first, panel.quarters.begin() + first + count);
  out.registry = panel.registry;
  out.provenance = panel.provenance;
  return out;
}

/// Row subset in the given order.
[[nodiscard]] inline Panel select_actors(const Panel& panel, const std::vector<Index>& rows) {
  Panel out;
  out.values.resize(static_cast<Index>(rows.size()), panel.n_quarters());
  out.quarters = panel.quarters;
  out.provenance = panel.provenance;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.values.row(static_cast<Index>(k)) = panel.values.row(rows[k]);
    out.registry.push_back(panel.registry[static_cast<std::size_t>(rows[k])]);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct RollingWindowSpec {
  enum class Refit { quarterly_expanding };

  std::vector<int> test_years;
  int train_years = 5;
  Refit refit = Refit::quarterly_expanding;
};

[[nodiscard]] inline std::vector<int> year_range(int first, int last) {
  std::vector<int> out;
  for (int y = first; y <= last; ++y) out.push_back(y);
  return out;
}

// ---------------------------------------------------------------------------

/// Assignment of every actor to exactly one block. Blocks listed in
/// `local_blocks` get their own Stage-2 model; every other block (the
/// remainder) is served by the global Stage-2 route.
struct BlockPartition {
  std::map<std::string, std::string> assignment;  // actor_id -> block_id
  std::set<std::string> local_blocks;
  std::string remainder_block = "remainder";

  [[nodiscard]] bool is_local_block(const std::string& block) const { return local_blocks.count(block) > 0; }

  [[nodiscard]] std::set<std::string> blocks() const {
    std::set<std::string> out;
    for (const auto& [actor, block] : assignment) out.insert(block);
    return out;
  }

  friend bool operator==(const BlockPartition&, const BlockPartition&) = default;
};

inline constexpr Index kMinLocalBlockSize = 5;

/// Panel row indices of each block, in panel row order.
[[nodiscard]] inline std::map<std::string, std::vector<Index>> block_rows(const Panel& panel,
                                                                          const BlockPartition& partition) {
  std::map<std::string, std::vector<Index>> out;
  for (Index i = 0; i < panel.n_actors(); ++i) {
    const auto& id = panel.registry[static_cast<std::size_t>(i)].actor_id;
    const auto it = partition.assignment.find(id);
    require(it != partition.assignment.end(), ErrorCode::invalid_partition, "actor " + id + " is unassigned");
    out[it->second].push_back(i);
  }
  return out;
}

inline void validate(const BlockPartition& partition, const Panel& panel) {
  require(!partition.is_local_block(partition.remainder_block), ErrorCode::invalid_partition,
          "remainder block '" + partition.remainder_block + "' is flagged local");
  require(partition.assignment.size() == static_cast<std::size_t>(panel.n_actors()), ErrorCode::invalid_partition,
          "partition covers " + std::to_string(partition.assignment.size()) + " actors, panel has " +
              std::to_string(panel.n_actors()));
  const auto rows = block_rows(panel, partition);
  for (const auto& block : partition.local_blocks) {
    const auto it = rows.find(block);
    const Index size = it == rows.end() ? 0 : static_cast<Index>(it->second.size());
    require(size >= kMinLocalBlockSize, ErrorCode::invalid_partition,
            "local block '" + block + "' has " + std::to_string(size) + " actors (< " +
                std::to_string(kMinLocalBlockSize) + ")");
  }
}

/// Partition whose only local blocks are the given actor sets; every other
/// actor goes to the remainder block.
[[nodiscard]] inline BlockPartition partition_from_blocks(const Panel& panel,
                                                          const std::map<std::string, std::vector<std::string>>& local,
                                                          const std::string& remainder = "remainder") {
  BlockPartition p;
  p.remainder_block = remainder;
  for (const auto& a : panel.registry) p.assignment[a.actor_id] = remainder;
  for (const auto& [block, actors] : local) {
    require(block != remainder, ErrorCode::invalid_partition, "local block named like the remainder");
    p.local_blocks.insert(block);
    for (const auto& id : actors) {
      auto it = p.assignment.find(id);
      require(it != p.assignment.end(), ErrorCode::invalid_partition, "unknown actor " + id);
      require(it->second == remainder, ErrorCode::invalid_partition, "actor " + id + " in two local blocks");
      it->second = block;
    }
  }
  return p;
}

/// Every actor in one block named `block`, flagged local or not.
[[nodiscard]] inline BlockPartition single_block_partition(const Panel& panel, const std::string& block, bool local) {
  BlockPartition p;
  for (const auto& a : panel.registry) p.assignment[a.actor_id] = block;
  if (local) {
    p.local_blocks.insert(block);
    p.remainder_block = block + "_remainder";
  } else {
    p.remainder_block = block;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Transforms. All are pure and return new panels.

/// Midranks (1-based, ties averaged) of a vector.
[[nodiscard]] inline Vector midranks(const Eigen::Ref<const Vector>& x) {
  const Index n = x.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return x(a) < x(b); });
  Vector ranks(n);
  Index k = 0;
  while (k < n) {
    Index j = k;
    while (j + 1 < n && x(order[static_cast<std::size_t>(j + 1)]) == x(order[static_cast<std::size_t>(k)])) ++j;
    const double r = 0.5 * static_cast<double>(k + j) + 1.0;
    for (Index m = k; m <= j; ++m) ranks(order[static_cast<std::size_t>(m)]) = r;
    k = j + 1;
  }
  return ranks;
}

/// Within-quarter cross-sectional percentile ranks: (midrank - 1) / (N - 1).
[[nodiscard]] inline Panel percentile_rank_transform(const Panel& raw) {
  require(raw.n_actors() >= 2, ErrorCode::precondition, "percentile ranks need N >= 2");
  Panel out = raw;
  const double scale = 1.0 / static_cast<double>(raw.n_actors() - 1);
  for (Index t = 0; t < raw.n_quarters(); ++t) {
    out.values.col(t) = (midranks(raw.values.col(t)).array() - 1.0) * scale;
  }
  return out;
}

enum class MinMaxMode { full_sample, recursive };

/// Per-actor min-max scaling. Recursive mode uses quarters <= t only and
/// emits 0.5 while the running range is zero.
[[nodiscard]] inline Panel minmax_normalize(const Panel& series, MinMaxMode mode,
                                            const std::optional<std::vector<Index>>& rows = std::nullopt) {
  Panel out = series;
  std::vector<Index> targets;
  if (rows) {
    targets = *rows;
  } else {
    targets.resize(static_cast<std::size_t>(series.n_actors()));
    std::iota(targets.begin(), targets.end(), Index{0});
  }
  const Index t_count = series.n_quarters();
  for (const Index i : targets) {
    const auto x = series.values.row(i);
    if (mode == MinMaxMode::full_sample) {
      const double lo = x.minCoeff();
      const double hi = x.maxCoeff();
      require(hi > lo, ErrorCode::zero_range, "actor " + series.registry[static_cast<std::size_t>(i)].actor_id);
      out.values.row(i) = (x.array() - lo) / (hi - lo);
    } else {
      double lo = x(0);
      double hi = x(0);
      for (Index t = 0; t < t_count; ++t) {
        lo = std::min(lo, x(t));
        hi = std::max(hi, x(t));
        out.values(i, t) = hi > lo ? (x(t) - lo) / (hi - lo) : 0.5;
      }
    }
  }
  return out;
}

/// Shift the selected actors right by `lag` quarters (value at t becomes the
/// value from t - lag) and truncate the whole panel to the common support.
[[nodiscard]] inline Panel lag_actors(const Panel& panel, const std::set<std::string>& actor_ids, int lag) {
  require(lag >= 1, ErrorCode::precondition, "lag must be >= 1");
  require(lag < panel.n_quarters(), ErrorCode::empty_support, "lag >= T");
  for (const auto& id : actor_ids) {
    require(panel.actor_index(id).has_value(), ErrorCode::precondition, "unknown actor " + id);
  }
  const Index new_t = panel.n_quarters() - lag;
  Panel out;
  out.registry = panel.registry;
  out.provenance = panel.provenance;
  out.quarters.assign(panel.quarters.begin() + lag, panel.quarters.end());
  out.values.resize(panel.n_actors(), new_t);
  for (Index i = 0; i < panel.n_actors(); ++i) {
    const bool lagged = actor_ids.count(panel.registry[static_cast<std::size_t>(i)].actor_id) > 0;
    out.values.row(i) = panel.values.row(i).segment(lagged ? 0 : lag, new_t);
  }
  return out;
}

[[nodiscard]] inline Panel first_difference(const Panel& panel) {
  require(panel.n_quarters() >= 2, ErrorCode::empty_support, "first difference needs T >= 2");
  const Index t = panel.n_quarters();
  Panel out;
  out.registry = panel.registry;
  out.provenance = panel.provenance;
  out.quarters.assign(panel.quarters.begin() + 1, panel.quarters.end());
  out.values = panel.values.rightCols(t - 1) - panel.values.leftCols(t - 1);
  return out;
}

}  // namespace hetpanel
