#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "error.hpp"
#include "image_io.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "version.hpp"

namespace reeftex {

struct ClassCount {
  std::string label;
  int count = 0;
  friend bool operator==(const ClassCount&, const ClassCount&) = default;
};

/// Expected class list for a dataset, compared against what ingest finds.
struct ClassSchema {
  std::string name;
  std::vector<ClassCount> classes;

  int total() const {
    int n = 0;
    for (const auto& c : classes) n += c.count;
    return n;
  }
};

struct ManifestEntry {
  std::string path;  // relative to the dataset root, '/' separated
  int class_index = 0;
  int stable_id = 0;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Immutable description of a labelled image collection.
///
/// Classes are ordered by directory name and entries by relative path; the
/// stable id of an entry is its rank in that path order, so the manifest is
/// the same on every machine regardless of directory iteration order.
struct DatasetManifest {
  std::string name;
  std::filesystem::path root;  // not part of the CSV; carried in the sidecar
  std::vector<ClassCount> classes;
  std::vector<ManifestEntry> entries;  // sorted by stable_id == index

  std::size_t size() const noexcept { return entries.size(); }
  int class_count() const noexcept { return static_cast<int>(classes.size()); }
  std::filesystem::path image_path(const ManifestEntry& e) const { return root / e.path; }

  std::vector<int> labels() const {
    std::vector<int> y;
    y.reserve(entries.size());
    for (const auto& e : entries) y.push_back(e.class_index);
    return y;
  }

  std::vector<std::string> class_labels() const {
    std::vector<std::string> out;
    for (const auto& c : classes) out.push_back(c.label);
    return out;
  }

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.name == b.name && a.classes == b.classes && a.entries == b.entries;
  }
};

/// Case- and punctuation-insensitive class key: "Branches Type I." and
/// "branches_type_i" compare equal.
inline std::string normalize_label(std::string_view label) {
  std::string out;
  bool pending_sep = false;
  for (unsigned char c : label) {
    if (std::isalnum(c)) {
      if (pending_sep && !out.empty()) out += '_';
      pending_sep = false;
      out += static_cast<char>(std::tolower(c));
    } else {
      pending_sep = true;
    }
  }
  return out;
}

/// Class list and counts of the 8-class EILAT patch collection (64x64).
inline ClassSchema eilat_schema() {
  return {"EILAT",
          {{"Sand", 87},
           {"Urchin", 78},
           {"Branches Type I", 29},
           {"Brain Coral", 160},
           {"Favid Coral", 200},
           {"Branches Type II", 216},
           {"Dead Coral", 296},
           {"Branches Type III", 11}}};
}

/// Class list and counts of the 14-class RSMAS patch collection (256x256).
/// Labels are the species abbreviations.
inline ClassSchema rsmas_schema() {
  return {"RSMAS",
          {{"ACER", 109},
           {"APAL", 77},
           {"CNAT", 57},
           {"DANT", 63},
           {"DSTR", 24},
           {"GORG", 60},
           {"MALC", 22},
           {"MCAV", 79},
           {"MMEA", 54},
           {"MONT", 28},
           {"PALY", 32},
           {"SPO", 88},
           {"SSID", 37},
           {"TUNI", 36}}};
}

inline std::optional<ClassSchema> builtin_schema(std::string_view name) {
  const auto key = normalize_label(name);
  if (key == "eilat") return eilat_schema();
  if (key == "rsmas") return rsmas_schema();
  return std::nullopt;
}

/// Reads a schema file: either {"name": ..., "classes": [{"label", "count"}]}
/// or a bare array of {"label", "count"}. The strings "eilat" and "rsmas"
/// select the built-in schemas.
inline ClassSchema load_schema(const std::string& path_or_name) {
  if (auto builtin = builtin_schema(path_or_name); builtin && !std::filesystem::is_regular_file(path_or_name))
    return *builtin;
  std::ifstream in(path_or_name);
  if (!in) throw IoError("cannot read schema file: " + path_or_name);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed schema file " + path_or_name + ": " + e.what());
  }
  ClassSchema schema;
  try {
    const nlohmann::json* classes = &j;
    if (j.is_object()) {
      schema.name = j.value("name", "");
      classes = &j.at("classes");
    }
    for (const auto& c : *classes)
      schema.classes.push_back({c.at("label").get<std::string>(), c.at("count").get<int>()});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed schema file " + path_or_name + ": " + e.what());
  }
  return schema;
}

/// Raised when ingested class counts disagree with the expected schema.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

inline void verify_schema(const std::vector<ClassCount>& found, const ClassSchema& expected) {
  std::map<std::string, int> found_by_key, expected_by_key;
  for (const auto& c : found) found_by_key[normalize_label(c.label)] = c.count;
  for (const auto& c : expected.classes) expected_by_key[normalize_label(c.label)] = c.count;
  if (found_by_key == expected_by_key) return;

  std::ostringstream msg;
  msg << "class schema mismatch" << (expected.name.empty() ? "" : " for " + expected.name) << "\n";
  msg << "  expected:";
  for (const auto& c : expected.classes) msg << " " << c.label << "=" << c.count;
  msg << "\n  found:   ";
  for (const auto& c : found) msg << " " << c.label << "=" << c.count;
  throw SchemaError(msg.str());
}

/// Checks the manifest invariants; throws InvariantError on violation.
inline void validate_manifest(const DatasetManifest& m) {
  std::vector<int> counts(m.classes.size(), 0);
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    if (e.stable_id != static_cast<int>(i)) throw InvariantError("stable ids are not dense and ordered");
    if (e.class_index < 0 || e.class_index >= m.class_count())
      throw InvariantError("entry " + e.path + " has an invalid class index");
    if (i > 0 && !(m.entries[i - 1].path < e.path)) throw InvariantError("entries are not in path order");
    ++counts[e.class_index];
  }
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] != m.classes[c].count) throw InvariantError("class count mismatch for " + m.classes[c].label);
}

/// Scans `root`: every immediate subdirectory is a class, every file below
/// it an image. Each file is decoded once to prove it is readable.
inline DatasetManifest ingest(const std::filesystem::path& root, const std::optional<ClassSchema>& expected = {},
                              unsigned threads = 1) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());

  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && !name.starts_with('.')) class_dirs.push_back(name);
  }
  if (class_dirs.empty()) throw ValidationError("no class subdirectories in " + root.string());
  std::sort(class_dirs.begin(), class_dirs.end());

  DatasetManifest m;
  m.name = expected && !expected->name.empty() ? expected->name : root.filename().string();
  m.root = fs::absolute(root).lexically_normal();

  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    int count = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / class_dirs[c])) {
      const auto name = entry.path().filename().string();
      if (!entry.is_regular_file() || name.starts_with('.')) continue;
      m.entries.push_back({fs::relative(entry.path(), root).generic_string(), static_cast<int>(c), 0});
      ++count;
    }
    if (count == 0) throw ValidationError("class directory has no images: " + class_dirs[c]);
    m.classes.push_back({class_dirs[c], count});
  }

  std::sort(m.entries.begin(), m.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
  for (std::size_t i = 0; i < m.entries.size(); ++i) m.entries[i].stable_id = static_cast<int>(i);

  parallel_for(m.entries.size(), threads, [&](std::size_t i) {
    const auto path = root / m.entries[i].path;
    if (!is_image_file(path)) throw IoError("unsupported file (expected PNG or JPEG): " + path.string());
    (void)load_image(path);
  });

  if (expected) verify_schema(m.classes, *expected);
  validate_manifest(m);
  return m;
}

// --- persistence -----------------------------------------------------------

inline constexpr const char* kManifestHeader = "stable_id,path,class_index,class_label";

inline std::filesystem::path manifest_sidecar_path(const std::filesystem::path& csv_path) {
  return csv_path.string() + ".json";
}

/// Writes manifest.csv plus a JSON sidecar carrying name, root and version.
inline void write_manifest(const std::filesystem::path& csv_path, const DatasetManifest& m) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + csv_path.string());
  out << kManifestHeader << '\n';
  for (const auto& e : m.entries)
    out << csv::join({std::to_string(e.stable_id), e.path, std::to_string(e.class_index),
                      m.classes[e.class_index].label})
        << '\n';
  if (!out) throw IoError("cannot write manifest: " + csv_path.string());

  nlohmann::json side;
  side["toolkit_version"] = kVersion;
  side["name"] = m.name;
  side["root"] = m.root.generic_string();
  side["classes"] = nlohmann::json::array();
  for (const auto& c : m.classes) side["classes"].push_back({{"label", c.label}, {"count", c.count}});
  std::ofstream sout(manifest_sidecar_path(csv_path), std::ios::binary);
  sout << side.dump(2) << '\n';
  if (!sout) throw IoError("cannot write manifest sidecar for " + csv_path.string());
}

/// Reads manifest.csv. The image root comes from `root_override` when given,
/// else from the sidecar, else the CSV's own directory.
inline DatasetManifest read_manifest(const std::filesystem::path& csv_path,
                                     const std::optional<std::filesystem::path>& root_override = {}) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest: " + csv_path.string());
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != kManifestHeader) throw ValidationError("unexpected manifest header in " + csv_path.string());

  DatasetManifest m;
  m.root = csv_path.parent_path();
  m.name = csv_path.stem().string();
  if (std::ifstream sin(manifest_sidecar_path(csv_path)); sin) {
    try {
      nlohmann::json side;
      sin >> side;
      m.name = side.value("name", m.name);
      if (side.contains("root")) m.root = side["root"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("malformed manifest sidecar: " + std::string(e.what()));
    }
  }
  if (root_override) m.root = *root_override;

  std::map<int, std::string> labels;
  for (const auto& row : csv::read_rows(in)) {
    if (row.size() != 4) throw ValidationError("manifest row has " + std::to_string(row.size()) + " fields");
    ManifestEntry e;
    try {
      e.stable_id = std::stoi(row[0]);
      e.class_index = std::stoi(row[2]);
    } catch (const std::exception&) {
      throw ValidationError("non-integer id or class index in manifest row for " + row[1]);
    }
    e.path = row[1];
    if (auto [it, inserted] = labels.emplace(e.class_index, row[3]); !inserted && it->second != row[3])
      throw ValidationError("class index " + row[0] + " has two labels");
    m.entries.push_back(std::move(e));
  }
  std::sort(m.entries.begin(), m.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.stable_id < b.stable_id; });
  int expect = 0;
  for (const auto& [index, label] : labels) {
    if (index != expect++) throw ValidationError("class indices are not contiguous from 0");
    m.classes.push_back({label, 0});
  }
  for (const auto& e : m.entries) ++m.classes[e.class_index].count;
  try {
    validate_manifest(m);
  } catch (const InvariantError& e) {
    throw ValidationError(std::string("invalid manifest: ") + e.what());
  }
  return m;
}

// --- folds -----------------------------------------------------------------

/// Stratified partition of a manifest into k folds.
struct FoldAssignment {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;  // indexed by stable id

  std::vector<int> test_ids(int fold) const {
    std::vector<int> ids;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == fold) ids.push_back(static_cast<int>(i));
    return ids;
  }

  std::vector<int> train_ids(int fold) const {
    std::vector<int> ids;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != fold) ids.push_back(static_cast<int>(i));
    return ids;
  }

  friend bool operator==(const FoldAssignment&, const FoldAssignment&) = default;
};

/// Per class: seeded Fisher-Yates shuffle of the class's ids, then deal them
/// round-robin. Each class starts dealing where the previous class stopped,
/// which keeps the overall fold sizes balanced too.
inline FoldAssignment assign_folds(const DatasetManifest& m, int k, std::uint64_t seed) {
  detail::require(k >= 2, "fold count must be at least 2, got " + std::to_string(k));
  FoldAssignment fa{k, seed, std::vector<int>(m.size(), -1)};
  std::vector<std::vector<int>> by_class(m.classes.size());
  for (const auto& e : m.entries) by_class[e.class_index].push_back(e.stable_id);

  std::size_t dealt = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto ids = by_class[c];
    RandomStream rng{seed, 0x666f6c64ULL /* "fold" */, static_cast<std::uint64_t>(c)};
    rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i)
      fa.fold_of[ids[i]] = static_cast<int>((dealt + i) % static_cast<std::size_t>(k));
    dealt += ids.size();
  }
  return fa;
}

/// Per-class, per-fold counts: result[c][f].
inline std::vector<std::vector<int>> fold_class_counts(const DatasetManifest& m, const FoldAssignment& fa) {
  std::vector<std::vector<int>> counts(m.classes.size(), std::vector<int>(fa.k, 0));
  for (const auto& e : m.entries) ++counts[e.class_index][fa.fold_of[e.stable_id]];
  return counts;
}

}  // namespace reeftex
