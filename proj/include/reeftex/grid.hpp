#pragma once

#include <algorithm>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "csv.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "evalharness.hpp"

namespace reeftex {

// A lattice is
//   {"base": {...config...},
//    "axes": [{"path": "/classifier/knn/k", "values": [1, 3, 5]}, ...],
//    "columns": [{"label": "shift = 0.2", "patch": {"augment": {"shift": 0.2}}}, ...]}
// Points are the cartesian product of the axis values (JSON pointers into
// the config) and, when present, the labelled columns (JSON merge patches).

struct LatticeAxis {
  std::string path;
  std::vector<nlohmann::json> values;
};

struct LatticeColumn {
  std::string label;
  nlohmann::json patch;
};

struct ConfigLattice {
  nlohmann::json base = nlohmann::json::object();
  std::vector<LatticeAxis> axes;
  std::vector<LatticeColumn> columns;
};

inline ConfigLattice lattice_from_json(const nlohmann::json& j) {
  try {
    detail::check_keys(j, {"base", "axes", "columns"}, "lattice");
    ConfigLattice l;
    if (j.contains("base")) l.base = j.at("base");
    if (j.contains("axes"))
      for (const auto& a : j.at("axes")) {
        detail::check_keys(a, {"path", "values"}, "lattice axis");
        LatticeAxis axis{a.at("path").get<std::string>(), {}};
        for (const auto& v : a.at("values")) axis.values.push_back(v);
        detail::require(!axis.values.empty(), "lattice axis " + axis.path + " has no values");
        l.axes.push_back(std::move(axis));
      }
    if (j.contains("columns"))
      for (const auto& c : j.at("columns")) {
        detail::check_keys(c, {"label", "patch"}, "lattice column");
        l.columns.push_back({c.at("label").get<std::string>(), c.value("patch", nlohmann::json::object())});
      }
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed lattice: ") + e.what());
  }
}

inline ConfigLattice load_lattice(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read lattice: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("lattice " + path.string() + " is not valid JSON: " + e.what());
  }
  return lattice_from_json(j);
}

struct LatticePoint {
  std::string column;  // empty when the lattice has no columns
  nlohmann::json config;
};

/// Every point in a fixed order: columns outermost, then axes with the last
/// axis varying fastest.
inline std::vector<LatticePoint> expand_lattice(const ConfigLattice& l) {
  std::vector<LatticeColumn> columns = l.columns;
  if (columns.empty()) columns.push_back({"", nlohmann::json::object()});
  std::vector<LatticePoint> out;
  for (const auto& col : columns) {
    std::vector<std::size_t> idx(l.axes.size(), 0);
    for (;;) {
      nlohmann::json cfg = l.base;
      cfg.merge_patch(col.patch);
      for (std::size_t a = 0; a < l.axes.size(); ++a) {
        try {
          cfg[nlohmann::json::json_pointer(l.axes[a].path)] = l.axes[a].values[idx[a]];
        } catch (const nlohmann::json::exception& e) {
          throw ValidationError("bad lattice path " + l.axes[a].path + ": " + e.what());
        }
      }
      out.push_back({col.label, std::move(cfg)});
      std::size_t a = l.axes.size();
      while (a > 0 && ++idx[a - 1] == l.axes[a - 1].values.size()) idx[--a] = 0;
      if (a == 0) break;
    }
  }
  return out;
}

struct GridResult {
  std::string column;
  nlohmann::json config_json;
  std::optional<PipelineConfig> config;
  std::string config_hash;
  std::optional<EvalReport> report;
  std::string error;  // set when the point failed
};

/// Runs every lattice point through run_cv with one shared feature cache.
/// Failures are recorded per point. Results are ranked by mean accuracy,
/// descending, ties by config hash; failed points come last.
inline std::vector<GridResult> grid_search(const DatasetManifest& m, const ConfigLattice& lattice,
                                           RunOptions opts = {}) {
  FeatureCache local_cache;
  if (!opts.cache) opts.cache = &local_cache;
  std::vector<GridResult> results;
  for (auto& point : expand_lattice(lattice)) {
    GridResult g;
    g.column = point.column;
    g.config_json = point.config;
    try {
      g.config = pipeline_config_from_json(point.config);
      g.config_hash = config_hash(*g.config);
      g.report = run_cv(m, *g.config, opts);
    } catch (const Error& e) {
      g.error = e.what();
    }
    results.push_back(std::move(g));
  }
  std::stable_sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
    if (a.report.has_value() != b.report.has_value()) return a.report.has_value();
    if (!a.report) return false;
    if (a.report->mean_accuracy != b.report->mean_accuracy) return a.report->mean_accuracy > b.report->mean_accuracy;
    return a.config_hash < b.config_hash;
  });
  return results;
}

inline std::string percent2(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

/// One column per lattice column, in lattice order, holding the best mean
/// accuracy reached by that column's points (blank if every point failed).
inline std::string augmentation_table_csv(const ConfigLattice& lattice, const std::vector<GridResult>& results,
                                          const std::string& provenance_hash) {
  std::vector<std::string> header{""};
  std::vector<std::string> row{"Accuracy"};
  for (const auto& col : lattice.columns) {
    header.push_back(col.label);
    std::optional<double> best;
    for (const auto& r : results)
      if (r.column == col.label && r.report && (!best || r.report->mean_accuracy > *best))
        best = r.report->mean_accuracy;
    row.push_back(best ? percent2(*best) : "");
  }
  std::ostringstream out;
  out << csv_provenance(provenance_hash) << csv::join(header) << '\n' << csv::join(row) << '\n';
  return out.str();
}

/// Rank, column, config hash, mean and pooled accuracy, or the error.
inline std::string grid_ranking_csv(const std::vector<GridResult>& results, const std::string& provenance_hash) {
  std::ostringstream out;
  out << csv_provenance(provenance_hash) << "rank,column,config_hash,mean_accuracy,pooled_accuracy,error\n";
  int rank = 1;
  for (const auto& r : results)
    out << csv::join({std::to_string(rank++), r.column, r.config_hash,
                      r.report ? csv::format_double(r.report->mean_accuracy) : "",
                      r.report ? csv::format_double(r.report->pooled_accuracy) : "", r.error})
        << '\n';
  return out.str();
}

/// Hash identifying a whole lattice, for provenance of grid outputs.
inline std::string lattice_hash(const ConfigLattice& l) {
  nlohmann::json j{{"base", l.base}};
  nlohmann::json axes = nlohmann::json::array();
  for (const auto& a : l.axes) axes.push_back({{"path", a.path}, {"values", a.values}});
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : l.columns) cols.push_back({{"label", c.label}, {"patch", c.patch}});
  j["axes"] = axes;
  j["columns"] = cols;
  return hex64(fnv1a(canonical_dump(j)));
}

}  // namespace reeftex
