// reeftex command-line tool: ingest, extract, evaluate, grid, report,
// augment-preview, enhance-preview and synth.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "reeftex/reeftex.hpp"

namespace fs = std::filesystem;
using namespace reeftex;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + " is not valid JSON: " + e.what());
  }
}

DatasetManifest open_manifest(const std::string& path, const std::string& root) {
  std::optional<fs::path> override_root;
  if (!root.empty()) override_root = fs::path(root);
  return read_manifest(path, override_root);
}

PipelineConfig open_config(const std::string& path) {
  if (path.empty()) return PipelineConfig{};
  return load_pipeline_config(path);
}

std::string column_name(const BlockLayout& b, std::size_t i) { return b.name + "_" + std::to_string(i); }

/// features.csv: provenance line, then stable_id, class_index and one column
/// per feature.
std::string features_csv(const DatasetManifest& m, const PipelineConfig& cfg,
                         const std::vector<std::shared_ptr<const std::vector<double>>>& rows) {
  const auto& fc = cfg.features;
  std::ostringstream out;
  out << csv_provenance(config_hash(cfg));
  std::vector<std::string> header{"stable_id", "class_index"};
  for (const auto& b : fc.layout())
    for (std::size_t i = 0; i < b.length; ++i) header.push_back(column_name(b, i));
  out << csv::join(header) << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << m.entries[i].stable_id << ',' << m.entries[i].class_index;
    for (double v : *rows[i]) out << ',' << csv::format_double(v);
    out << '\n';
  }
  return out.str();
}

nlohmann::json features_sidecar(const DatasetManifest& m, const PipelineConfig& cfg) {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& b : cfg.features.layout())
    layout.push_back({{"name", b.name}, {"kind", to_string(b.kind)}, {"offset", b.offset}, {"length", b.length}});
  return {{"toolkit_version", kVersion},
          {"config_hash", config_hash(cfg)},
          {"feature_hash", hex64(feature_hash(cfg.enhance, cfg.features))},
          {"dataset", m.name},
          {"rows", m.size()},
          {"columns", cfg.features.length()},
          {"layout", layout},
          {"enhance", to_json(cfg.enhance)},
          {"features", to_json(cfg.features)}};
}

void write_eval_outputs(const fs::path& reports, const EvalReport& r, const DatasetManifest& m) {
  write_json(reports / "eval.json", to_json(r));
  write_text(reports / "confusion.csv", confusion_csv(r));
  const auto mis = misclassification_report(r);
  write_text(reports / "misclassified.csv", misclassified_csv(mis, r, m));
  write_text(reports / "class_pairs.csv", class_pairs_csv(mis, r));
}

void print_accuracy_table(const EvalReport& r) {
  for (std::size_t f = 0; f < r.fold_accuracies.size(); ++f)
    std::printf("fold %zu: %s%% (%d images)\n", f, percent2(r.fold_accuracies[f]).c_str(), r.fold_sizes[f]);
  std::printf("pooled: %s%%\n", percent2(r.pooled_accuracy).c_str());
}

struct Globals {
  unsigned threads = default_thread_count();
};

int cmd_ingest(const std::string& root, const std::string& out, const std::string& schema, const Globals& g) {
  std::optional<ClassSchema> expected;
  if (!schema.empty()) expected = load_schema(schema);
  const auto m = ingest(root, expected, g.threads);
  write_manifest(out, m);
  std::printf("%zu images in %d classes\n", m.size(), m.class_count());
  for (const auto& c : m.classes) std::printf("  %s: %d\n", c.label.c_str(), c.count);
  return 0;
}

int cmd_extract(const std::string& manifest, const std::string& root, const std::string& config,
                const std::string& out, const Globals& g) {
  const auto m = open_manifest(manifest, root);
  auto cfg = open_config(config);
  cfg.augment.multiplier = 0;
  RunOptions opts;
  opts.threads = g.threads;
  FeatureCache cache;
  const auto table = extract_all(m, cfg, opts, cache);
  write_text(out, features_csv(m, cfg, table.original));
  write_json(fs::path(out).string() + ".json", features_sidecar(m, cfg));
  std::printf("%zu rows x %zu features\n", m.size(), cfg.features.length());
  return 0;
}

int cmd_evaluate(const std::string& manifest, const std::string& root, const std::string& config,
                 const std::string& out_dir, const Globals& g) {
  const auto m = open_manifest(manifest, root);
  const auto cfg = open_config(config);
  const fs::path dir(out_dir);
  const auto hash = config_hash(cfg);
  fs::create_directories(dir / "reports");
  fs::create_directories(dir / "models");
  fs::create_directories(dir / "features");
  write_json(dir / "config.json", config_document(cfg));
  write_manifest(dir / "manifest.csv", m);

  FeatureCache cache;
  RunLog log;
  RunOptions opts;
  opts.threads = g.threads;
  opts.cache = &cache;
  opts.log = &log;
  opts.on_fold_model = [&](const FoldModel& fm) {
    write_json(dir / "models" / ("fold_" + std::to_string(fm.fold) + ".json"),
               {{"toolkit_version", kVersion},
                {"config_hash", hash},
                {"fold", fm.fold},
                {"projection", to_json(fm.projection)},
                {"model", to_json(fm.model)}});
  };
  const auto report = run_cv(m, cfg, opts);

  auto no_aug = cfg;
  no_aug.augment.multiplier = 0;
  const auto table = extract_all(m, no_aug, opts, cache);
  write_text(dir / "features" / "features.csv", features_csv(m, cfg, table.original));
  write_json(dir / "features" / "features.csv.json", features_sidecar(m, cfg));

  write_eval_outputs(dir / "reports", report, m);
  {
    std::ostringstream jsonl;
    log.write_jsonl(jsonl, hash);
    write_text(dir / "reports" / "run_log.jsonl", jsonl.str());
  }
  print_accuracy_table(report);
  std::printf("%s\n", percent2(report.mean_accuracy).c_str());
  return 0;
}

int cmd_grid(const std::string& manifest, const std::string& root, const std::string& lattice_path,
             const std::string& out_dir, const Globals& g) {
  const auto m = open_manifest(manifest, root);
  const auto lattice = load_lattice(lattice_path);
  const fs::path dir(out_dir);
  const auto lhash = lattice_hash(lattice);
  fs::create_directories(dir / "reports" / "points");
  RunOptions opts;
  opts.threads = g.threads;
  const auto results = grid_search(m, lattice, opts);

  nlohmann::json summary{{"toolkit_version", kVersion}, {"config_hash", lhash}, {"points", nlohmann::json::array()}};
  for (const auto& r : results) {
    nlohmann::json p{{"column", r.column}, {"config_hash", r.config_hash}, {"config", r.config_json}};
    if (r.report) {
      p["mean_accuracy"] = r.report->mean_accuracy;
      p["pooled_accuracy"] = r.report->pooled_accuracy;
      write_json(dir / "reports" / "points" / (r.config_hash + ".json"), to_json(*r.report));
    } else {
      p["error"] = r.error;
    }
    summary["points"].push_back(std::move(p));
  }
  write_json(dir / "reports" / "grid.json", summary);
  write_text(dir / "reports" / "grid.csv", grid_ranking_csv(results, lhash));
  if (!lattice.columns.empty()) {
    const auto table = augmentation_table_csv(lattice, results, lhash);
    write_text(dir / "reports" / "augmentation_table.csv", table);
    std::printf("%s", table.substr(table.find('\n') + 1).c_str());
  }
  int failed = 0;
  for (const auto& r : results)
    if (!r.report) {
      ++failed;
      std::fprintf(stderr, "point %s failed: %s\n", r.config_hash.c_str(), r.error.c_str());
    }
  if (results.empty() || !results.front().report) throw ValidationError("every lattice point failed");
  const std::string note = failed ? " (" + std::to_string(failed) + " points failed)" : "";
  std::printf("best: %s %s%%%s\n", results.front().config_hash.c_str(),
              percent2(results.front().report->mean_accuracy).c_str(), note.c_str());
  return 0;
}

int cmd_report(const std::string& eval_path, const std::string& manifest, const std::string& root,
               const std::string& out_dir) {
  const auto r = eval_report_from_json(read_json(eval_path));
  const auto m = open_manifest(manifest, root);
  detail::require(static_cast<int>(m.size()) == r.N, "report N does not match the manifest");
  const auto rep = misclassification_report(r);
  const fs::path dir(out_dir);
  write_text(dir / "misclassified.csv", misclassified_csv(rep, r, m));
  write_text(dir / "class_pairs.csv", class_pairs_csv(rep, r));
  std::printf("%zu misclassified of %d\n", rep.rows.size(), r.N);
  for (const auto& p : rep.pairs)
    std::printf("  %s -> %s: %d\n", r.classes[p.true_class].c_str(), r.classes[p.predicted_class].c_str(), p.count);
  return 0;
}

int cmd_augment_preview(const std::string& image, const std::string& spec_path, const std::string& out) {
  const auto img = load_image(image);
  AugmentSpec spec;
  try {
    auto j = read_json(spec_path);
    if (j.contains("augment")) j = j["augment"];
    spec = augment_spec_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed augment spec: ") + e.what());
  }
  const auto panels = augmentation_panels(img, spec);
  save_png(out, contact_sheet(panels));
  std::printf("%zu panels\n", panels.size());
  return 0;
}

int cmd_enhance_preview(const std::string& image, const std::string& config, const std::string& out_dir) {
  const auto img = load_image(image);
  const auto cfg = open_config(config);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const auto after = enhance(img, cfg.enhance);
  save_png(dir / "before.png", img);
  save_png(dir / "after.png", after);
  save_png(dir / "before_after.png", contact_sheet({img, after}));
  return 0;
}

int cmd_synth(const std::string& schema, const std::string& out, const SynthOptions& o, const Globals& g) {
  const auto n = write_synthetic_dataset(out, load_schema(schema), o, g.threads);
  std::printf("%zu images\n", n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reeftex: texture-based coral patch classification toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Globals g;
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: REEFTEX_THREADS or logical cores)")
      ->check(CLI::PositiveNumber);

  std::string root, out, schema, manifest, config, out_dir, lattice, eval, image, spec;
  SynthOptions synth;

  auto* ingest_cmd = app.add_subcommand("ingest", "Scan a class-per-directory image tree into a manifest");
  ingest_cmd->add_option("--root", root, "Dataset root")->required();
  ingest_cmd->add_option("--out", out, "Manifest CSV to write")->required();
  ingest_cmd->add_option("--expect-schema", schema, "Schema JSON file, or eilat / rsmas");

  auto* extract_cmd = app.add_subcommand("extract", "Extract feature vectors for every manifest entry");
  extract_cmd->add_option("--manifest", manifest, "Manifest CSV")->required();
  extract_cmd->add_option("--config", config, "Pipeline config JSON (defaults when omitted)");
  extract_cmd->add_option("--out", out, "Feature CSV to write")->required();
  extract_cmd->add_option("--root", root, "Override the image root recorded with the manifest");

  auto* eval_cmd = app.add_subcommand("evaluate", "Cross-validate one pipeline config");
  eval_cmd->add_option("--manifest", manifest, "Manifest CSV")->required();
  eval_cmd->add_option("--config", config, "Pipeline config JSON (defaults when omitted)");
  eval_cmd->add_option("--out-dir", out_dir, "Run directory")->required();
  eval_cmd->add_option("--root", root, "Override the image root recorded with the manifest");

  auto* grid_cmd = app.add_subcommand("grid", "Cross-validate every point of a config lattice");
  grid_cmd->add_option("--manifest", manifest, "Manifest CSV")->required();
  grid_cmd->add_option("--lattice", lattice, "Lattice JSON")->required();
  grid_cmd->add_option("--out-dir", out_dir, "Run directory")->required();
  grid_cmd->add_option("--root", root, "Override the image root recorded with the manifest");

  auto* report_cmd = app.add_subcommand("report", "Misclassification listing of an evaluation");
  report_cmd->add_option("--eval", eval, "reports/eval.json")->required();
  report_cmd->add_option("--manifest", manifest, "Manifest CSV")->required();
  report_cmd->add_option("--out-dir", out_dir, "Directory for the CSV outputs")->required();
  report_cmd->add_option("--root", root, "Override the image root recorded with the manifest");

  auto* aug_cmd = app.add_subcommand("augment-preview", "Contact sheet of the original and each augmentation");
  aug_cmd->add_option("--image", image, "Input image")->required();
  aug_cmd->add_option("--spec", spec, "Augment spec JSON (or a config with an augment section)")->required();
  aug_cmd->add_option("--out", out, "PNG to write")->required();

  auto* enh_cmd = app.add_subcommand("enhance-preview", "Before/after images of the enhancement stage");
  enh_cmd->add_option("--image", image, "Input image")->required();
  enh_cmd->add_option("--config", config, "Pipeline config JSON (defaults when omitted)");
  enh_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic texture dataset for a class schema");
  synth_cmd->add_option("--schema", schema, "Schema JSON file, or eilat / rsmas")->required();
  synth_cmd->add_option("--out", out, "Dataset root to create")->required();
  synth_cmd->add_option("--size", synth.size, "Patch size in pixels")->check(CLI::Range(8, 4096));
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--jitter", synth.jitter, "Relative per-image style jitter")->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--noise", synth.noise, "Pixel noise amplitude")->check(CLI::Range(0.0, 255.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::validation);
  }
  if (threads > 0) g.threads = static_cast<unsigned>(threads);

  try {
    if (*ingest_cmd) return cmd_ingest(root, out, schema, g);
    if (*extract_cmd) return cmd_extract(manifest, root, config, out, g);
    if (*eval_cmd) return cmd_evaluate(manifest, root, config, out_dir, g);
    if (*grid_cmd) return cmd_grid(manifest, root, lattice, out_dir, g);
    if (*report_cmd) return cmd_report(eval, manifest, root, out_dir);
    if (*aug_cmd) return cmd_augment_preview(image, spec, out);
    if (*enh_cmd) return cmd_enhance_preview(image, config, out_dir);
    if (*synth_cmd) return cmd_synth(schema, out, synth, g);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ErrorKind::io);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return static_cast<int>(ErrorKind::internal);
  }
  return 0;
}
