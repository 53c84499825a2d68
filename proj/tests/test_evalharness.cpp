#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "reeftex/evalharness.hpp"
#include "reeftex/grid.hpp"
#include "reeftex/synth.hpp"

using namespace reeftex;

namespace {

// In-memory collection: entry i of class c is synth_image(c, i). The manifest
// labels may be overridden to run null experiments on the same pixels.
struct ToyData {
  DatasetManifest manifest;
  std::vector<std::pair<int, int>> source;  // stable id -> (true class, image index)
  SynthOptions synth;

  ImageLoader loader() const {
    return [this](const DatasetManifest&, const ManifestEntry& e) {
      const auto [c, i] = source.at(static_cast<std::size_t>(e.stable_id));
      return synth_image(synth, c, i);
    };
  }
};

ToyData toy_data(const std::vector<int>& counts, int size = 32) {
  ToyData d;
  d.synth.size = size;
  d.synth.noise = 10.0;
  d.synth.jitter = 0.2;
  d.manifest.name = "toy";
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const std::string label = "class" + std::to_string(c);
    d.manifest.classes.push_back({label, counts[c]});
    for (int i = 0; i < counts[c]; ++i) {
      d.manifest.entries.push_back(
          {label + "/img_" + std::to_string(1000 + i) + ".png", static_cast<int>(c), static_cast<int>(d.source.size())});
      d.source.emplace_back(static_cast<int>(c), i);
    }
  }
  return d;
}

PipelineConfig fast_config() {
  PipelineConfig c;
  c.features.gabor_enabled = false;
  c.reduce.kind = ReduceKind::pca;
  c.reduce.variance_target = 0.95;
  c.classifier.knn.k = 1;
  return c;
}

RunOptions options(const ToyData& d, unsigned threads = 2) {
  RunOptions o;
  o.threads = threads;
  o.loader = d.loader();
  return o;
}

std::string dump(const EvalReport& r) { return to_json(r).dump(); }

}  // namespace

TEST(Accuracy, Examples) {
  EXPECT_DOUBLE_EQ(accuracy(9, 10), 0.9);
  EXPECT_EQ(accuracy(10, 10), 1.0);
  EXPECT_THROW(accuracy(0, 0), ValidationError);
  EXPECT_THROW(accuracy(11, 10), ValidationError);
  EXPECT_NEAR(accuracy(1123 - 22, 1123), 0.9804, 5e-5);
  EXPECT_LE(std::abs(100.0 * accuracy(1123 - 22, 1123) - 98.03), 0.1);
}

TEST(FoldImbalanceBound, ZeroForEqualFolds) {
  EXPECT_EQ(fold_imbalance_bound({4, 4, 4}), 0.0);
  EXPECT_NEAR(fold_imbalance_bound({3, 1}), 0.5, 1e-15);
}

TEST(RunCv, ReportInvariantsHold) {
  const auto d = toy_data({12, 10, 8});
  const auto r = run_cv(d.manifest, fast_config(), options(d));
  EXPECT_EQ(r.fold_accuracies.size(), 5u);
  EXPECT_EQ(r.N, 30);
  EXPECT_NO_THROW(verify_report(r, d.manifest));
  int off = 0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 3; ++p)
      if (c != p) off += r.confusion[c][p];
  EXPECT_EQ(off, static_cast<int>(r.misclassified.size()));
  EXPECT_GT(r.mean_accuracy, 0.8);
}

TEST(RunCv, LeakageSelfTestGivesPerfectAccuracyAndIsDetected) {
  const auto d = toy_data({6, 6, 6});
  auto opts = options(d);
  opts.leakage_self_test = true;
  RunLog log;
  opts.log = &log;
  const auto r = run_cv(d.manifest, fast_config(), opts);
  EXPECT_EQ(r.mean_accuracy, 1.0);
  EXPECT_TRUE(r.leakage_self_test);
  EXPECT_FALSE(check_leakage(log.events()).empty());
}

TEST(RunCv, GuardFindsNoOverlapOnNormalRuns) {
  const auto d = toy_data({6, 6, 6});
  auto cfg = fast_config();
  cfg.augment.flip = true;
  cfg.augment.multiplier = 1;
  auto opts = options(d);
  RunLog log;
  opts.log = &log;
  run_cv(d.manifest, cfg, opts);
  const auto events = log.events();
  EXPECT_TRUE(check_leakage(events).empty());
  int augment_events = 0;
  for (const auto& e : events) augment_events += e.stage == "augment";
  EXPECT_EQ(augment_events, 5);
}

TEST(CheckLeakage, FlagsFitIdsThatAreTestIds) {
  const std::vector<RunEvent> events{{"fit_reduce", 0, {1, 2, 3}, 0.0},
                                     {"fit_classifier", 0, {1, 2, 3}, 0.0},
                                     {"augment", 1, {4, 5}, 0.0},
                                     {"predict", 0, {3, 9}, 0.0},
                                     {"predict", 1, {6}, 0.0}};
  const auto leaks = check_leakage(events);
  ASSERT_EQ(leaks.size(), 2u);
  EXPECT_EQ(leaks[0].stage, "fit_reduce");
  EXPECT_EQ(leaks[0].leaked_ids, std::vector<int>{3});
  EXPECT_EQ(leaks[1].stage, "fit_classifier");
}

TEST(RunCv, DeterministicSerialization) {
  const auto d = toy_data({8, 8, 8});
  auto cfg = fast_config();
  cfg.augment.shift = 0.1;
  cfg.augment.multiplier = 1;
  EXPECT_EQ(dump(run_cv(d.manifest, cfg, options(d, 1))), dump(run_cv(d.manifest, cfg, options(d, 4))));
  EXPECT_EQ(dump(run_cv(d.manifest, cfg, options(d, 3))), dump(run_cv(d.manifest, cfg, options(d, 3))));
}

TEST(RunCv, CachedRunEqualsColdRun) {
  const auto d = toy_data({8, 8, 8});
  const auto cfg = fast_config();
  FeatureCache cache;
  auto opts = options(d);
  opts.cache = &cache;
  const auto first = dump(run_cv(d.manifest, cfg, opts));
  const auto misses = cache.misses();
  const auto second = dump(run_cv(d.manifest, cfg, opts));
  EXPECT_EQ(cache.misses(), misses);
  EXPECT_GE(cache.hits(), d.manifest.size());
  EXPECT_EQ(first, second);
  EXPECT_EQ(first, dump(run_cv(d.manifest, cfg, options(d))));
}

TEST(RunCv, StageErrorsCarryContext) {
  const auto d = toy_data({6, 6});
  auto opts = options(d);
  opts.loader = [](const DatasetManifest&, const ManifestEntry& e) -> RasterImage {
    if (e.stable_id == 7) throw IoError("cannot decode");
    return synth_image({}, e.class_index, e.stable_id);
  };
  try {
    run_cv(d.manifest, fast_config(), opts);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("stable_id 7"), std::string::npos);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
    EXPECT_NE(std::string(e.what()).find("stable_id 7"), std::string::npos);
  }
}

TEST(RunCv, RandomLabelsStayWithinPermutationOracleBounds) {
  const int classes = 8, per_class = 20;
  auto d = toy_data(std::vector<int>(classes, per_class));
  std::vector<int> shuffled = d.manifest.labels();
  std::mt19937_64 gen(2024);
  std::shuffle(shuffled.begin(), shuffled.end(), gen);
  for (auto& e : d.manifest.entries) e.class_index = shuffled[static_cast<std::size_t>(e.stable_id)];
  auto cfg = fast_config();
  const auto r = run_cv(d.manifest, cfg, options(d, 4));

  // Null model: a test image takes the label of a uniformly random training
  // image, labels being an arbitrary permutation of the class multiset.
  const auto folds = assign_folds(d.manifest, cfg.folds, cfg.seed);
  std::vector<double> sims;
  std::mt19937_64 sim(99);
  std::vector<int> labels = d.manifest.labels();
  for (int t = 0; t < 4000; ++t) {
    std::shuffle(labels.begin(), labels.end(), sim);
    double mean = 0.0;
    for (int f = 0; f < cfg.folds; ++f) {
      const auto test = folds.test_ids(f), train = folds.train_ids(f);
      std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
      int correct = 0;
      for (int id : test) correct += labels[static_cast<std::size_t>(id)] == labels[static_cast<std::size_t>(train[pick(sim)])];
      mean += static_cast<double>(correct) / static_cast<double>(test.size()) / cfg.folds;
    }
    sims.push_back(mean);
  }
  std::sort(sims.begin(), sims.end());
  const double lo = sims[static_cast<std::size_t>(0.0005 * sims.size())];
  const double hi = sims[static_cast<std::size_t>(0.9995 * sims.size())];
  EXPECT_GE(r.mean_accuracy, lo);
  EXPECT_LE(r.mean_accuracy, hi);
  EXPECT_GE(lo, 1.0 / classes - 0.125);
  EXPECT_LE(hi, 1.0 / classes + 0.125);
}

TEST(VerifyReport, DetectsTampering) {
  const auto d = toy_data({6, 6, 6});
  const auto r = run_cv(d.manifest, fast_config(), options(d));
  auto bad = r;
  bad.mean_accuracy += 1e-9;
  EXPECT_THROW(verify_report(bad, d.manifest), InvariantError);
  bad = r;
  bad.confusion[0][0] += 1;
  EXPECT_THROW(verify_report(bad, d.manifest), InvariantError);
  bad = r;
  bad.misclassified.push_back({0, 0, 1, 0});
  EXPECT_THROW(verify_report(bad, d.manifest), InvariantError);
}

TEST(EvalReport, JsonRoundTrip) {
  const auto d = toy_data({6, 6, 6});
  const auto r = run_cv(d.manifest, fast_config(), options(d));
  const auto back = eval_report_from_json(nlohmann::json::parse(dump(r)));
  EXPECT_EQ(dump(back), dump(r));
  EXPECT_EQ(back.fold_accuracies, r.fold_accuracies);
}

TEST(ConfusionCsv, HasLabelHeaderAndProvenance) {
  const auto d = toy_data({6, 6});
  const auto r = run_cv(d.manifest, fast_config(), options(d));
  const auto text = confusion_csv(r);
  EXPECT_EQ(text.rfind("# toolkit_version=", 0), 0u);
  EXPECT_NE(text.find("true\\predicted,class0,class1\n"), std::string::npos);
  EXPECT_NE(text.find(r.config_hash), std::string::npos);
}

namespace {

EvalReport perfect_report() {
  EvalReport r;
  r.classes = {"a", "b", "c"};
  r.config_hash = "0";
  r.confusion = {{3, 0, 0}, {0, 3, 0}, {0, 0, 3}};
  return r;
}

}  // namespace

TEST(MisclassificationReport, PerfectRunIsEmpty) {
  const auto rep = misclassification_report(perfect_report());
  EXPECT_TRUE(rep.rows.empty());
  EXPECT_TRUE(rep.pairs.empty());
}

TEST(MisclassificationReport, InjectedErrorGivesExactlyThatRow) {
  auto r = perfect_report();
  r.misclassified = {{4, 1, 2, 3}};
  const auto rep = misclassification_report(r);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0], (Misclassification{4, 1, 2, 3}));
  ASSERT_EQ(rep.pairs.size(), 1u);
  EXPECT_EQ(rep.pairs[0].count, 1);
  DatasetManifest m;
  for (int i = 0; i < 9; ++i) m.entries.push_back({"x/" + std::to_string(i) + ".png", i / 3, i});
  const auto csv_text = misclassified_csv(rep, r, m);
  EXPECT_NE(csv_text.find("4,x/4.png,b,c,3\n"), std::string::npos);
}

TEST(MisclassificationReport, PairCountsConserveTotalAndSortByFrequency) {
  auto r = perfect_report();
  r.misclassified = {{0, 0, 1, 0}, {1, 2, 0, 1}, {2, 0, 1, 2}, {3, 1, 2, 0}, {4, 0, 1, 4}, {5, 1, 2, 3}};
  const auto rep = misclassification_report(r);
  int total = 0;
  for (const auto& p : rep.pairs) total += p.count;
  EXPECT_EQ(total, 6);
  ASSERT_EQ(rep.pairs.size(), 3u);
  EXPECT_EQ(rep.pairs[0].count, 3);
  EXPECT_EQ(rep.pairs[1].count, 2);
  EXPECT_EQ(rep.pairs[2].count, 1);
  const auto text = class_pairs_csv(rep, r);
  EXPECT_NE(text.find("a,b,3\nb,c,2\nc,a,1\n"), std::string::npos);
}

TEST(PipelineConfig, JsonRoundTripAndStableHash) {
  auto c = fast_config();
  c.kernel.ops = {{"hue", KernelOp::hellinger}, {"clbp", KernelOp::l1}};
  c.augment.zoom = 0.2;
  c.augment.multiplier = 3;
  const auto back = pipeline_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(canonical_dump(to_json(back)), canonical_dump(to_json(c)));
  EXPECT_EQ(config_hash(pipeline_config_from_json(config_document(c))), config_hash(c));
  auto other = c;
  other.classifier.knn.k = 3;
  EXPECT_NE(config_hash(other), config_hash(c));
}

TEST(PipelineConfig, RejectsInconsistentConfigs) {
  EXPECT_THROW(pipeline_config_from_json({{"folds", 5}, {"foldz", 5}}), ValidationError);
  EXPECT_THROW(pipeline_config_from_json({{"folds", 1}}), ValidationError);
  EXPECT_THROW(pipeline_config_from_json({{"kernel", {{"ops", {{"gabor", "hellinger"}}}}}}), ValidationError);
  EXPECT_THROW(pipeline_config_from_json({{"kernel", {{"ops", {{"clbp", "chi2"}}}}}}), ValidationError);
  EXPECT_NO_THROW(pipeline_config_from_json({{"kernel", {{"ops", {{"clbp", "chi2"}}}}},
                                             {"reduce", {{"kind", "none"}}},
                                             {"classifier", {{"kind", "knn"}, {"knn", {{"distance", "composite_chi2"}}}}}}));
}

TEST(PipelineConfig, AugmentMultiplierDefault) {
  EXPECT_EQ(pipeline_config_from_json({{"augment", {{"shift", 0.2}}}}).augment.multiplier, 3);
  EXPECT_EQ(pipeline_config_from_json({{"augment", nlohmann::json::object()}}).augment.multiplier, 0);
}

TEST(GridSearch, SinglePointEqualsRunCv) {
  const auto d = toy_data({6, 6, 6});
  const auto cfg = fast_config();
  ConfigLattice l;
  l.base = to_json(cfg);
  const auto results = grid_search(d.manifest, l, options(d));
  ASSERT_EQ(results.size(), 1u);
  ASSERT_TRUE(results[0].report);
  EXPECT_EQ(dump(*results[0].report), dump(run_cv(d.manifest, cfg, options(d))));
}

TEST(GridSearch, KAxisGivesTwoRankedReports) {
  const auto d = toy_data({6, 6, 6});
  ConfigLattice l;
  l.base = to_json(fast_config());
  l.axes = {{"/classifier/knn/k", {1, 3}}};
  const auto results = grid_search(d.manifest, l, options(d));
  ASSERT_EQ(results.size(), 2u);
  EXPECT_GE(results[0].report->mean_accuracy, results[1].report->mean_accuracy);
  if (results[0].report->mean_accuracy == results[1].report->mean_accuracy)
    EXPECT_LT(results[0].config_hash, results[1].config_hash);
}

TEST(GridSearch, PointErrorsAreRecordedNotFatal) {
  const auto d = toy_data({6, 6, 6});
  ConfigLattice l;
  l.base = to_json(fast_config());
  l.axes = {{"/classifier/knn/k", {0, 1}}};
  const auto results = grid_search(d.manifest, l, options(d));
  ASSERT_EQ(results.size(), 2u);
  EXPECT_TRUE(results[0].report.has_value());
  EXPECT_FALSE(results[1].report.has_value());
  EXPECT_FALSE(results[1].error.empty());
}

TEST(GridSearch, AugmentationColumnsGiveSixColumnTable) {
  const auto d = toy_data({5, 5, 5}, 24);
  ConfigLattice l = lattice_from_json(nlohmann::json::parse(R"({
    "base": {"features": {"gabor": {"enabled": false}}, "reduce": {"kind": "pca", "variance_target": 0.95},
             "classifier": {"kind": "knn", "knn": {"k": 1}}},
    "columns": [
      {"label": "none", "patch": {}},
      {"label": "shift = 0.2", "patch": {"augment": {"shift": 0.2, "multiplier": 1}}},
      {"label": "zoom = 0.2", "patch": {"augment": {"zoom": 0.2, "multiplier": 1}}},
      {"label": "rotation = 2", "patch": {"augment": {"rotation": 2, "multiplier": 1}}},
      {"label": "flip", "patch": {"augment": {"flip": true, "multiplier": 1}}},
      {"label": "shift = 0.2 & zoom = 0.2", "patch": {"augment": {"shift": 0.2, "zoom": 0.2, "multiplier": 1}}}
    ]})"));
  const auto results = grid_search(d.manifest, l, options(d));
  ASSERT_EQ(results.size(), 6u);
  const auto table = augmentation_table_csv(l, results, lattice_hash(l));
  std::istringstream in(table);
  std::string provenance, header, row;
  std::getline(in, provenance);
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(provenance.rfind("# toolkit_version=", 0), 0u);
  EXPECT_EQ(header, ",none,shift = 0.2,zoom = 0.2,rotation = 2,flip,shift = 0.2 & zoom = 0.2");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 6);
  EXPECT_EQ(row.find(",,"), std::string::npos);
  for (const auto& r : results)
    if (r.column == "none")
      EXPECT_EQ(dump(*r.report), dump(run_cv(d.manifest, pipeline_config_from_json(l.base), options(d))));
}

TEST(Lattice, ExpansionOrderAndValidation) {
  ConfigLattice l;
  l.axes = {{"/folds", {3, 4}}, {"/seed", {1, 2, 3}}};
  const auto points = expand_lattice(l);
  ASSERT_EQ(points.size(), 6u);
  EXPECT_EQ(points[1].config["seed"], 2);
  EXPECT_EQ(points[3].config["folds"], 4);
  EXPECT_THROW(lattice_from_json({{"axis", nlohmann::json::array()}}), ValidationError);
  EXPECT_THROW(lattice_from_json({{"axes", {{{"path", "/folds"}, {"values", nlohmann::json::array()}}}}}),
               ValidationError);
}

TEST(ShippedConfigs, AllParseAndValidate) {
  const std::filesystem::path dir(REEFTEX_CONFIG_DIR);
  EXPECT_NO_THROW(load_pipeline_config(dir / "best_classical.json"));
  const auto chi2 = load_pipeline_config(dir / "chi2_composite.json");
  EXPECT_TRUE(chi2.kernel.uses_chi2());
  for (const char* name : {"eilat_lattice.json", "rsmas_lattice.json"}) {
    const auto points = expand_lattice(load_lattice(dir / name));
    EXPECT_EQ(points.size(), 16u) << name;
    for (const auto& p : points) EXPECT_NO_THROW(pipeline_config_from_json(p.config)) << name;
  }
  for (const char* name : {"eilat_augmentation.json", "rsmas_augmentation.json"}) {
    const auto l = load_lattice(dir / name);
    ASSERT_EQ(l.columns.size(), 6u) << name;
    for (const auto& p : expand_lattice(l)) {
      const auto c = pipeline_config_from_json(p.config);
      EXPECT_EQ(c.augment.multiplier, p.column == l.columns.front().label ? 0 : 3) << p.column;
    }
  }
  EXPECT_EQ(load_lattice(dir / "rsmas_augmentation.json").columns[2].label, "zoom = 0.4");
  std::ifstream in(dir / "augment_preview.json");
  EXPECT_TRUE(augment_spec_from_json(nlohmann::json::parse(in)).any_enabled());
}
