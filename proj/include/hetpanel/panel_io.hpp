#pragma once

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hetpanel/panel.hpp"

namespace hetpanel {

namespace detail {

[[nodiscard]] inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[nodiscard]] inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        current.push_back('"');
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.emplace_back(trim(current));
  return fields;
}

[[nodiscard]] inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Shortest decimal form that parses back to the identical double.
[[nodiscard]] inline std::string format_double(double x) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), ptr);
}

[[nodiscard]] inline std::optional<double> parse_double(std::string_view s) noexcept {
  s = detail::trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return x;
}

/// Wide CSV: `actor_id,layer,sector,<quarter labels...>`, one row per actor.
/// Leading lines starting with '#' are kept as provenance.
[[nodiscard]] inline Panel read_panel(std::istream& in) {
  Panel panel;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind('#', 0) == 0) {
      panel.provenance.push_back(line.size() > 1 && line[1] == ' ' ? line.substr(2) : line.substr(1));
      continue;
    }
    if (detail::trim(line).empty()) continue;
    header = detail::split_csv(line);
    break;
  }
  require(header.size() >= 4, ErrorCode::calendar_error, "header needs actor_id,layer,sector and >= 1 quarter");
  require(header[0] == "actor_id" && header[1] == "layer" && header[2] == "sector", ErrorCode::calendar_error,
          "header must start with actor_id,layer,sector");
  panel.quarters.assign(header.begin() + 3, header.end());
  const std::size_t t_count = panel.quarters.size();

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1 + panel.provenance.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    require(fields.size() == header.size(), ErrorCode::unbalanced_panel,
            "line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) + " fields, expected " +
                std::to_string(header.size()));
    ActorMeta meta;
    meta.actor_id = fields[0];
    meta.layer = parse_layer(fields[1]);
    meta.sector = fields[2];
    std::vector<double> values(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      const auto v = parse_double(fields[3 + t]);
      require(v.has_value(), ErrorCode::unbalanced_panel,
              "line " + std::to_string(line_no) + " quarter " + panel.quarters[t] + " is empty or not a number");
      values[t] = *v;
    }
    panel.registry.push_back(std::move(meta));
    rows.push_back(std::move(values));
  }
  panel.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t_count));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t t = 0; t < t_count; ++t) panel.values(static_cast<Index>(i), static_cast<Index>(t)) = rows[i][t];
  }
  validate(panel);
  return panel;
}

[[nodiscard]] inline Panel load_panel(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_error, "cannot open " + path.string());
  return read_panel(in);
}

inline void write_panel(std::ostream& out, const Panel& panel) {
  for (const auto& line : panel.provenance) out << "# " << line << '\n';
  out << "actor_id,layer,sector";
  for (const auto& q : panel.quarters) out << ',' << q;
  out << '\n';
  for (Index i = 0; i < panel.n_actors(); ++i) {
    const auto& meta = panel.registry[static_cast<std::size_t>(i)];
    out << detail::csv_escape(meta.actor_id) << ',' << to_string(meta.layer) << ',' << detail::csv_escape(meta.sector);
    for (Index t = 0; t < panel.n_quarters(); ++t) out << ',' << format_double(panel.values(i, t));
    out << '\n';
  }
}

inline void save_panel(const std::filesystem::path& path, const Panel& panel) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_error, "cannot write " + path.string());
  write_panel(out, panel);
}

/// Partition CSV: `actor_id,block_id,is_local`. The remainder block is the
/// first non-local block listed (or "remainder" if every block is local).
[[nodiscard]] inline BlockPartition read_partition(std::istream& in) {
  BlockPartition partition;
  std::string line;
  bool header_seen = false;
  bool remainder_set = false;
  std::size_t line_no = 0;
  std::set<std::string> non_local;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty() || line.rfind('#', 0) == 0) continue;
    const auto fields = detail::split_csv(line);
    if (!header_seen) {
      require(fields.size() == 3 && fields[0] == "actor_id" && fields[1] == "block_id" && fields[2] == "is_local",
              ErrorCode::invalid_partition, "header must be actor_id,block_id,is_local");
      header_seen = true;
      continue;
    }
    require(fields.size() == 3, ErrorCode::invalid_partition, "line " + std::to_string(line_no) + " needs 3 fields");
    const bool local = fields[2] == "1" || fields[2] == "true";
    require(local || fields[2] == "0" || fields[2] == "false", ErrorCode::invalid_partition,
            "line " + std::to_string(line_no) + ": is_local must be 0/1");
    require(partition.assignment.emplace(fields[0], fields[1]).second, ErrorCode::invalid_partition,
            "actor " + fields[0] + " assigned twice");
    if (local) {
      partition.local_blocks.insert(fields[1]);
    } else {
      non_local.insert(fields[1]);
      if (!remainder_set) {
        partition.remainder_block = fields[1];
        remainder_set = true;
      }
    }
  }
  for (const auto& b : non_local) {
    require(!partition.is_local_block(b), ErrorCode::invalid_partition,
            "block '" + b + "' listed both local and non-local");
  }
  return partition;
}

[[nodiscard]] inline BlockPartition load_partition(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_error, "cannot open " + path.string());
  return read_partition(in);
}

/// Rows follow panel order when a panel is given, otherwise actor_id order.
inline void write_partition(std::ostream& out, const BlockPartition& partition, const Panel* panel = nullptr) {
  out << "actor_id,block_id,is_local\n";
  auto emit = [&](const std::string& actor, const std::string& block) {
    out << detail::csv_escape(actor) << ',' << detail::csv_escape(block) << ','
        << (partition.is_local_block(block) ? 1 : 0) << '\n';
  };
  if (panel != nullptr) {
    for (const auto& a : panel->registry) emit(a.actor_id, partition.assignment.at(a.actor_id));
  } else {
    for (const auto& [actor, block] : partition.assignment) emit(actor, block);
  }
}

inline void save_partition(const std::filesystem::path& path, const BlockPartition& partition,
                           const Panel* panel = nullptr) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_error, "cannot write " + path.string());
  write_partition(out, partition, panel);
}

}  // namespace hetpanel
