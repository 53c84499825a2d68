#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "reeftex/image_io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

Result run(const testutil::TempDir& dir, const std::string& args) {
  const auto out = dir.path() / "stdout.txt", err = dir.path() / "stderr.txt";
  const std::string cmd = std::string("REEFTEX_THREADS=2 ") + REEFTEX_CLI + " " + args + " >" + out.string() +
                          " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string last_line(const std::string& text) {
  auto end = text.find_last_not_of('\n');
  auto start = text.rfind('\n', end);
  return text.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

// Two classes of ten 24x24 synthetic patches, ingested into manifest.csv.
class CliDataset : public ::testing::Test {
 protected:
  void SetUp() override {
    spit(dir.path() / "schema.json", R"({"name": "toy", "classes": [{"label": "alpha", "count": 10},
                                                                    {"label": "beta", "count": 10}]})");
    ASSERT_EQ(run(dir, "synth --schema " + (dir.path() / "schema.json").string() + " --out " + root().string() +
                           " --size 24")
                  .code,
              0);
    const auto r = run(dir, "ingest --root " + root().string() + " --out " + manifest().string() +
                                " --expect-schema " + (dir.path() / "schema.json").string());
    ASSERT_EQ(r.code, 0) << r.err;
    spit(config(), R"({"features": {"gabor": {"enabled": false}},
                       "reduce": {"kind": "pca", "variance_target": 0.95},
                       "classifier": {"kind": "knn", "knn": {"k": 1}}})");
  }

  fs::path root() const { return dir.path() / "data"; }
  fs::path manifest() const { return dir.path() / "manifest.csv"; }
  fs::path config() const { return dir.path() / "config.json"; }

  testutil::TempDir dir{"cli"};
};

}  // namespace

TEST(Cli, MissingRootExitsOneWithMessage) {
  testutil::TempDir dir("cli_missing");
  const auto r = run(dir, "ingest --root " + (dir.path() / "nope").string() + " --out " +
                              (dir.path() / "m.csv").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nope"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, UnknownOptionExitsTwo) {
  testutil::TempDir dir("cli_usage");
  EXPECT_EQ(run(dir, "ingest --bogus").code, 2);
}

TEST_F(CliDataset, SchemaMismatchExitsTwo) {
  spit(dir.path() / "wrong.json", R"([{"label": "alpha", "count": 10}, {"label": "beta", "count": 9}])");
  const auto r = run(dir, "ingest --root " + root().string() + " --out " + (dir.path() / "m2.csv").string() +
                              " --expect-schema " + (dir.path() / "wrong.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("beta"), std::string::npos);
}

TEST_F(CliDataset, ManifestHasOneRowPerImage) {
  const auto text = slurp(manifest());
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 21);
}

TEST_F(CliDataset, ExtractIsByteIdenticalOnRerun) {
  const auto a = dir.path() / "a.csv", b = dir.path() / "b.csv";
  ASSERT_EQ(run(dir, "extract --manifest " + manifest().string() + " --out " + a.string()).code, 0);
  ASSERT_EQ(run(dir, "--threads 1 extract --manifest " + manifest().string() + " --out " + b.string()).code, 0);
  const auto text = slurp(a);
  EXPECT_EQ(text, slurp(b));
  EXPECT_EQ(slurp(a.string() + ".json"), slurp(b.string() + ".json"));
  std::istringstream in(text);
  std::string provenance, header;
  std::getline(in, provenance);
  std::getline(in, header);
  EXPECT_EQ(provenance.rfind("# toolkit_version=", 0), 0u);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 361);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 22);
}

TEST_F(CliDataset, CorruptImageIsNamedByStableId) {
  // beta/img_0003.png is the 14th path in sorted order: stable id 13
  spit(root() / "beta" / "img_0003.png", "not a png");
  const auto r = run(dir, "extract --manifest " + manifest().string() + " --out " + (dir.path() / "f.csv").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("stable_id 13"), std::string::npos) << r.err;
}

TEST_F(CliDataset, EvaluateWritesRunDirectoryAndPrintsMeanAccuracy) {
  const auto run_dir = dir.path() / "run";
  const auto r = run(dir, "evaluate --manifest " + manifest().string() + " --config " + config().string() +
                              " --out-dir " + run_dir.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(run_dir / "reports" / "eval.json"));
  ASSERT_EQ(report["fold_accuracies"].size(), 5u);
  double mean = 0.0;
  for (const auto& a : report["fold_accuracies"]) mean += a.get<double>() / 5.0;
  char expected[32];
  std::snprintf(expected, sizeof expected, "%.2f", 100.0 * report["mean_accuracy"].get<double>());
  EXPECT_EQ(last_line(r.out), expected);
  EXPECT_NEAR(mean, report["mean_accuracy"].get<double>(), 1e-15);
  for (const char* f : {"config.json", "manifest.csv", "reports/confusion.csv", "reports/misclassified.csv",
                        "reports/class_pairs.csv", "reports/run_log.jsonl", "features/features.csv",
                        "models/fold_0.json", "models/fold_4.json"})
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  const auto hash = report["config_hash"].get<std::string>();
  for (const char* f : {"reports/confusion.csv", "reports/misclassified.csv", "features/features.csv"})
    EXPECT_NE(slurp(run_dir / f).find("config_hash=" + hash), std::string::npos) << f;
  EXPECT_EQ(nlohmann::json::parse(slurp(run_dir / "config.json"))["config_hash"], hash);
  EXPECT_EQ(nlohmann::json::parse(slurp(run_dir / "models" / "fold_0.json"))["config_hash"], hash);
}

TEST_F(CliDataset, EvaluateTwiceIsByteIdentical) {
  const auto a = dir.path() / "ra", b = dir.path() / "rb";
  ASSERT_EQ(run(dir, "evaluate --manifest " + manifest().string() + " --config " + config().string() +
                         " --out-dir " + a.string())
                .code,
            0);
  ASSERT_EQ(run(dir, "--threads 3 evaluate --manifest " + manifest().string() + " --config " + config().string() +
                         " --out-dir " + b.string())
                .code,
            0);
  for (const char* f : {"reports/eval.json", "reports/confusion.csv", "reports/misclassified.csv",
                        "features/features.csv", "models/fold_2.json", "config.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST_F(CliDataset, ReportRebuildsMisclassificationListing) {
  const auto run_dir = dir.path() / "run";
  ASSERT_EQ(run(dir, "evaluate --manifest " + manifest().string() + " --config " + config().string() +
                         " --out-dir " + run_dir.string())
                .code,
            0);
  const auto out = dir.path() / "rep";
  const auto r = run(dir, "report --eval " + (run_dir / "reports" / "eval.json").string() + " --manifest " +
                              manifest().string() + " --out-dir " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(out / "misclassified.csv"), slurp(run_dir / "reports" / "misclassified.csv"));
}

TEST_F(CliDataset, GridWritesAugmentationTable) {
  spit(dir.path() / "lattice.json", R"({
    "base": {"features": {"gabor": {"enabled": false}}, "reduce": {"kind": "pca", "variance_target": 0.95},
             "classifier": {"kind": "knn", "knn": {"k": 1}}},
    "columns": [
      {"label": "none", "patch": {}},
      {"label": "shift = 0.2", "patch": {"augment": {"shift": 0.2, "multiplier": 1}}},
      {"label": "zoom = 0.2", "patch": {"augment": {"zoom": 0.2, "multiplier": 1}}},
      {"label": "rotation = 2", "patch": {"augment": {"rotation": 2, "multiplier": 1}}},
      {"label": "flip", "patch": {"augment": {"flip": true, "multiplier": 1}}},
      {"label": "shift = 0.2 & zoom = 0.2", "patch": {"augment": {"shift": 0.2, "zoom": 0.2, "multiplier": 1}}}
    ]})");
  const auto r = run(dir, "grid --manifest " + manifest().string() + " --lattice " +
                              (dir.path() / "lattice.json").string() + " --out-dir " + (dir.path() / "g").string());
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(slurp(dir.path() / "g" / "reports" / "augmentation_table.csv"));
  std::string provenance, header, row;
  std::getline(in, provenance);
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 6);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 6);
  EXPECT_EQ(row.rfind("Accuracy,", 0), 0u);
}

TEST_F(CliDataset, AugmentPreviewShowsFivePanels) {
  const auto image = root() / "alpha" / "img_0000.png";
  spit(dir.path() / "all.json", R"({"shift": 0.2, "zoom": 0.2, "rotation": 2, "flip": true})");
  auto r = run(dir, "augment-preview --image " + image.string() + " --spec " + (dir.path() / "all.json").string() +
                        " --out " + (dir.path() / "all.png").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "5 panels\n");
  const auto sheet = reeftex::load_image(dir.path() / "all.png");
  EXPECT_EQ(sheet.height(), 24);
  EXPECT_GE(sheet.width(), 5 * 24);

  spit(dir.path() / "shift.json", R"({"shift": 0.2})");
  r = run(dir, "augment-preview --image " + image.string() + " --spec " + (dir.path() / "shift.json").string() +
                   " --out " + (dir.path() / "shift.png").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "5 panels\n");
  EXPECT_EQ(reeftex::load_image(dir.path() / "shift.png"), sheet);
}

TEST_F(CliDataset, BadConfigExitsTwo) {
  spit(dir.path() / "bad.json", R"({"classifier": {"kind": "forest"}})");
  const auto r = run(dir, "evaluate --manifest " + manifest().string() + " --config " +
                              (dir.path() / "bad.json").string() + " --out-dir " + (dir.path() / "x").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("forest"), std::string::npos) << r.err;
}
