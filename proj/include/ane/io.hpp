#pragma once

// Artifact formats: run table, checkpoints, partition exports and SVG.

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ane/enhance.hpp"
#include "ane/network.hpp"
#include "ane/partition.hpp"

namespace ane {

using json = nlohmann::json;

inline std::string fixed6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Run table

inline constexpr const char* kRunTableHeader = "structure,params,error,xi_rel,eta,status";

inline void write_run_table(std::ostream& os, const AneHistory& history) {
  os << kRunTableHeader << '\n';
  for (const auto& r : history.records) {
    os << r.architecture << ',' << r.params << ',' << fixed6(r.error) << ',' << fixed6(r.xi_rel) << ','
       << (r.eta ? fixed6(*r.eta) : std::string()) << ',' << to_string(r.status) << '\n';
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

/// Reads a run table back as rows of string fields, header first.
inline std::vector<std::vector<std::string>> read_run_table(std::istream& is) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty() || rows.front().size() != 6) throw std::runtime_error("run table: missing or bad header");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 6) throw std::runtime_error("run table: row " + std::to_string(i) + " has wrong arity");
  }
  return rows;
}

/// Fixed-width rendering of a run table.
inline void pretty_print_table(std::ostream& os, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(6, 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].empty() ? 2 : r[c].size());
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      const std::string cell = rows[i][c].empty() ? "--" : rows[i][c];
      os << (c ? "  " : "") << std::left << std::setw(static_cast<int>(width[c])) << cell;
    }
    os << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

inline json checkpoint_json(const Network& net, std::uint64_t seed, int loop) {
  json j;
  j["architecture"] = net.architecture().to_string();
  j["loop"] = loop;
  j["seed"] = seed;
  const Eigen::VectorXd flat = net.flatten();
  j["params"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  return j;
}

inline Network network_from_checkpoint(const json& j) {
  const Architecture arch = Architecture::parse(j.at("architecture").get<std::string>());
  const auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != param_count(arch)) {
    throw std::runtime_error("checkpoint: " + std::to_string(params.size()) + " parameters for " +
                             arch.to_string());
  }
  return Network::unflatten(arch, Eigen::Map<const Eigen::VectorXd>(params.data(),
                                                                    static_cast<Eigen::Index>(params.size())));
}

// ---------------------------------------------------------------------------
// Partition export

inline json partition_json(const PhysicalPartition& pp) {
  json j;
  const auto& d = pp.domain();
  j["layer"] = pp.layer();
  j["domain"] = {d.x_min, d.x_max, d.y_min, d.y_max};
  json cells = json::array();
  for (const auto& c : pp.cells()) {
    json verts = json::array();
    for (const auto& v : c.vertices) verts.push_back({v.x(), v.y()});
    cells.push_back({{"id", c.id}, {"vertices", std::move(verts)}});
  }
  j["cells"] = std::move(cells);
  json adj = json::array();
  for (const auto& [a, b] : pp.adjacency()) adj.push_back({a, b});
  j["adjacency"] = std::move(adj);
  return j;
}

struct PartitionExport {
  int layer = 0;
  RectDomain domain;
  std::vector<Polygon> cells;
  std::vector<std::pair<int, int>> adjacency;
};

inline PartitionExport parse_partition_json(const json& j) {
  PartitionExport out;
  try {
    out.layer = j.at("layer").get<int>();
    const auto d = j.at("domain").get<std::vector<double>>();
    if (d.size() != 4) throw std::runtime_error("domain must have 4 entries");
    out.domain = RectDomain(d[0], d[1], d[2], d[3]);
    for (const auto& c : j.at("cells")) {
      Polygon poly;
      for (const auto& v : c.at("vertices")) {
        const auto xy = v.get<std::vector<double>>();
        if (xy.size() != 2) throw std::runtime_error("vertex must have 2 coordinates");
        poly.emplace_back(xy[0], xy[1]);
      }
      out.cells.push_back(std::move(poly));
    }
    if (j.contains("adjacency")) {
      for (const auto& e : j.at("adjacency")) out.adjacency.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("partition export: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("partition export: ") + e.what());
  }
  return out;
}

/// One <polygon> per cell, y axis pointing up.
inline std::string render_svg(const PartitionExport& p, int pixels = 600) {
  const auto& d = p.domain;
  const double scale = pixels / std::max(d.width(), d.height());
  const double w = d.width() * scale;
  const double h = d.height() * scale;
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 "
     << w << ' ' << h << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  for (const auto& poly : p.cells) {
    os << "<polygon points=\"";
    for (std::size_t i = 0; i < poly.size(); ++i) {
      os << (i ? " " : "") << (poly[i].x() - d.x_min) * scale << ',' << (d.y_max - poly[i].y()) * scale;
    }
    os << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace ane
