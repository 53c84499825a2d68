#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "augment.hpp"
#include "classify.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "features.hpp"
#include "image_io.hpp"
#include "kernelgeom.hpp"
#include "parallel.hpp"
#include "reduce.hpp"
#include "rng.hpp"
#include "version.hpp"

namespace reeftex {

/// correct / N.
inline double accuracy(long long correct, long long n) {
  detail::require(n > 0, "accuracy needs N > 0");
  detail::require(correct >= 0 && correct <= n, "accuracy needs 0 <= correct <= N");
  return static_cast<double>(correct) / static_cast<double>(n);
}

// --- feature cache ----------------------------------------------------------

/// Flattened, pre-kernel feature vectors keyed by what produced them.
/// Safe to share between threads and between runs of a grid search.
class FeatureCache {
 public:
  static constexpr std::int64_t kOriginal = -1;

  struct Key {
    std::uint64_t feature_hash = 0;
    int stable_id = 0;
    std::int64_t draw = kOriginal;
    std::uint64_t augment_hash = 0;
    auto operator<=>(const Key&) const = default;
  };

  std::shared_ptr<const std::vector<double>> find(const Key& key) const {
    std::lock_guard lock(mutex_);
    auto it = map_.find(key);
    if (it == map_.end()) {
      ++misses_;
      return nullptr;
    }
    ++hits_;
    return it->second;
  }

  std::shared_ptr<const std::vector<double>> insert(const Key& key, std::vector<double> values) {
    auto ptr = std::make_shared<const std::vector<double>>(std::move(values));
    std::lock_guard lock(mutex_);
    return map_.emplace(key, std::move(ptr)).first->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return map_.size();
  }
  std::size_t hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
  }
  std::size_t misses() const {
    std::lock_guard lock(mutex_);
    return misses_;
  }

 private:
  mutable std::mutex mutex_;
  std::map<Key, std::shared_ptr<const std::vector<double>>> map_;
  mutable std::size_t hits_ = 0;
  mutable std::size_t misses_ = 0;
};

// --- run log ---------------------------------------------------------------

/// Digest of an id set, independent of order.
inline std::string ids_hash(std::vector<int> ids) {
  std::sort(ids.begin(), ids.end());
  std::string bytes;
  for (int id : ids) bytes += std::to_string(id) + ',';
  return hex64(fnv1a(bytes));
}

struct RunEvent {
  std::string stage;  // extract, augment, fit_reduce, fit_classifier, predict
  int fold = -1;
  std::vector<int> ids;
  double duration_ms = 0.0;
};

class RunLog {
 public:
  void add(RunEvent e) {
    std::lock_guard lock(mutex_);
    events_.push_back(std::move(e));
  }

  std::vector<RunEvent> events() const {
    std::lock_guard lock(mutex_);
    return events_;
  }

  /// One JSON object per line: stage, fold, ids_hash, count, duration_ms.
  void write_jsonl(std::ostream& out, const std::string& config_hash) const {
    out << nlohmann::json{{"stage", "run"}, {"toolkit_version", kVersion}, {"config_hash", config_hash}}.dump()
        << '\n';
    for (const auto& e : events())
      out << nlohmann::json{{"stage", e.stage},
                            {"fold", e.fold},
                            {"ids_hash", ids_hash(e.ids)},
                            {"count", e.ids.size()},
                            {"duration_ms", e.duration_ms}}
                 .dump()
          << '\n';
  }

 private:
  mutable std::mutex mutex_;
  std::vector<RunEvent> events_;
};

struct LeakageFinding {
  int fold = 0;
  std::string stage;
  std::vector<int> leaked_ids;
};

/// Checks that nothing fitted or augmented in fold f touched fold f's test
/// ids, using only what the log recorded.
inline std::vector<LeakageFinding> check_leakage(const std::vector<RunEvent>& events) {
  std::map<int, std::set<int>> test;
  for (const auto& e : events)
    if (e.stage == "predict") test[e.fold].insert(e.ids.begin(), e.ids.end());
  std::vector<LeakageFinding> out;
  for (const auto& e : events) {
    if (e.stage != "fit_reduce" && e.stage != "fit_classifier" && e.stage != "augment") continue;
    const auto& t = test[e.fold];
    LeakageFinding f{e.fold, e.stage, {}};
    for (int id : e.ids)
      if (t.contains(id)) f.leaked_ids.push_back(id);
    if (!f.leaked_ids.empty()) out.push_back(std::move(f));
  }
  return out;
}

// --- report ----------------------------------------------------------------

struct Misclassification {
  int stable_id = 0;
  int true_class = 0;
  int predicted_class = 0;
  int fold = 0;
  friend bool operator==(const Misclassification&, const Misclassification&) = default;
};

struct EvalReport {
  std::string dataset;
  std::string config_hash;
  int folds = 0;
  int N = 0;
  std::vector<std::string> classes;
  std::vector<double> fold_accuracies;
  std::vector<int> fold_sizes;
  std::vector<std::string> fold_test_hashes;
  double mean_accuracy = 0.0;
  double pooled_accuracy = 0.0;
  std::vector<std::vector<int>> confusion;  // [true][predicted]
  std::vector<Misclassification> misclassified;
  bool leakage_self_test = false;
};

/// Upper bound on |mean of fold accuracies - pooled accuracy| given the fold
/// sizes: sum_f |1/k - n_f/N|.
inline double fold_imbalance_bound(const std::vector<int>& fold_sizes) {
  double n = 0.0;
  for (int s : fold_sizes) n += s;
  const double k = static_cast<double>(fold_sizes.size());
  double bound = 0.0;
  for (int s : fold_sizes) bound += std::abs(1.0 / k - s / n);
  return bound;
}

/// Internal consistency of a finished report; throws InvariantError.
inline void verify_report(const EvalReport& r, const DatasetManifest& m) {
  const auto fail = [](const std::string& msg) { throw InvariantError("report invariant violated: " + msg); };
  if (r.confusion.size() != m.classes.size()) fail("confusion size");
  long long trace = 0, off = 0, total = 0;
  for (std::size_t c = 0; c < r.confusion.size(); ++c) {
    long long row = 0;
    for (std::size_t p = 0; p < r.confusion[c].size(); ++p) {
      row += r.confusion[c][p];
      (c == p ? trace : off) += r.confusion[c][p];
    }
    if (row != m.classes[c].count) fail("confusion row sum for " + m.classes[c].label);
    total += row;
  }
  if (total != r.N) fail("confusion total");
  if (off != static_cast<long long>(r.misclassified.size())) fail("off-diagonal count vs misclassified listing");
  double mean = 0.0;
  for (double a : r.fold_accuracies) mean += a;
  mean /= static_cast<double>(r.fold_accuracies.size());
  if (mean != r.mean_accuracy) fail("mean accuracy");
  if (r.pooled_accuracy != accuracy(trace, r.N)) fail("pooled accuracy");
  if (std::abs(r.mean_accuracy - r.pooled_accuracy) > fold_imbalance_bound(r.fold_sizes) + 1e-12)
    fail("mean vs pooled accuracy beyond the fold-imbalance bound");
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json mis = nlohmann::json::array();
  for (const auto& x : r.misclassified)
    mis.push_back({{"stable_id", x.stable_id},
                   {"true_class", x.true_class},
                   {"predicted_class", x.predicted_class},
                   {"fold", x.fold}});
  return {{"version", kReportSchemaVersion},
          {"toolkit_version", kVersion},
          {"dataset", r.dataset},
          {"config_hash", r.config_hash},
          {"folds", r.folds},
          {"N", r.N},
          {"classes", r.classes},
          {"fold_accuracies", r.fold_accuracies},
          {"fold_sizes", r.fold_sizes},
          {"fold_test_id_hashes", r.fold_test_hashes},
          {"mean_accuracy", r.mean_accuracy},
          {"pooled_accuracy", r.pooled_accuracy},
          {"confusion", r.confusion},
          {"misclassified", mis},
          {"leakage_self_test", r.leakage_self_test}};
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    detail::require(j.at("version").get<int>() == kReportSchemaVersion, "unsupported report version");
    EvalReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.folds = j.at("folds").get<int>();
    r.N = j.at("N").get<int>();
    r.classes = j.at("classes").get<std::vector<std::string>>();
    r.fold_accuracies = j.at("fold_accuracies").get<std::vector<double>>();
    r.fold_sizes = j.at("fold_sizes").get<std::vector<int>>();
    r.fold_test_hashes = j.at("fold_test_id_hashes").get<std::vector<std::string>>();
    r.mean_accuracy = j.at("mean_accuracy").get<double>();
    r.pooled_accuracy = j.at("pooled_accuracy").get<double>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<int>>>();
    for (const auto& x : j.at("misclassified"))
      r.misclassified.push_back({x.at("stable_id").get<int>(), x.at("true_class").get<int>(),
                                 x.at("predicted_class").get<int>(), x.at("fold").get<int>()});
    r.leakage_self_test = j.value("leakage_self_test", false);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report JSON: ") + e.what());
  }
}

/// Provenance line heading every CSV report.
inline std::string csv_provenance(const std::string& config_hash) {
  return "# toolkit_version=" + std::string(kVersion) + " config_hash=" + config_hash + "\n";
}

inline std::string confusion_csv(const EvalReport& r) {
  std::ostringstream out;
  out << csv_provenance(r.config_hash);
  std::vector<std::string> header{"true\\predicted"};
  header.insert(header.end(), r.classes.begin(), r.classes.end());
  out << csv::join(header) << '\n';
  for (std::size_t c = 0; c < r.confusion.size(); ++c) {
    std::vector<std::string> row{r.classes[c]};
    for (int v : r.confusion[c]) row.push_back(std::to_string(v));
    out << csv::join(row) << '\n';
  }
  return out.str();
}

// --- misclassification report ----------------------------------------------

struct ClassPairCount {
  int true_class = 0;
  int predicted_class = 0;
  int count = 0;
};

struct MisclassificationReport {
  std::vector<Misclassification> rows;
  std::vector<ClassPairCount> pairs;  // most frequent first, ties by (true, predicted)
};

inline MisclassificationReport misclassification_report(const EvalReport& r) {
  MisclassificationReport out;
  out.rows = r.misclassified;
  std::map<std::pair<int, int>, int> counts;
  for (const auto& m : r.misclassified) ++counts[{m.true_class, m.predicted_class}];
  for (const auto& [key, n] : counts) out.pairs.push_back({key.first, key.second, n});
  std::stable_sort(out.pairs.begin(), out.pairs.end(),
                   [](const ClassPairCount& a, const ClassPairCount& b) { return a.count > b.count; });
  return out;
}

inline std::string misclassified_csv(const MisclassificationReport& rep, const EvalReport& r,
                                     const DatasetManifest& m) {
  std::ostringstream out;
  out << csv_provenance(r.config_hash);
  out << "stable_id,path,true_class,predicted_class,fold\n";
  for (const auto& x : rep.rows) {
    const auto& e = m.entries.at(static_cast<std::size_t>(x.stable_id));
    out << csv::join({std::to_string(x.stable_id), e.path, r.classes.at(x.true_class),
                      r.classes.at(x.predicted_class), std::to_string(x.fold)})
        << '\n';
  }
  return out.str();
}

inline std::string class_pairs_csv(const MisclassificationReport& rep, const EvalReport& r) {
  std::ostringstream out;
  out << csv_provenance(r.config_hash);
  out << "true_class,predicted_class,count\n";
  for (const auto& p : rep.pairs)
    out << csv::join({r.classes.at(p.true_class), r.classes.at(p.predicted_class), std::to_string(p.count)}) << '\n';
  return out.str();
}

// --- cross-validation ------------------------------------------------------

using ImageLoader = std::function<RasterImage(const DatasetManifest&, const ManifestEntry&)>;

inline RasterImage load_from_disk(const DatasetManifest& m, const ManifestEntry& e) {
  return load_image(m.image_path(e));
}

struct FoldModel {
  int fold = 0;
  Projection projection;
  TrainedModel model;
};

struct RunOptions {
  unsigned threads = default_thread_count();
  FeatureCache* cache = nullptr;  // shared across runs when given
  RunLog* log = nullptr;          // receives this run's events when given
  ImageLoader loader = load_from_disk;
  /// Trains every fold on all images, test fold included. The leakage
  /// guard then reports instead of throwing.
  bool leakage_self_test = false;
  std::function<void(const FoldModel&)> on_fold_model;
};

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

template <typename F>
auto with_context(const std::string& context, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), context + ": " + e.what());
  }
}

inline std::vector<double> kernel_row(const std::vector<double>& raw, const std::vector<BlockLayout>& layout,
                                      const KernelSpec& spec) {
  std::vector<FeatureBlock> blocks;
  for (const auto& b : layout)
    blocks.push_back({b.name, b.kind,
                      std::vector<double>(raw.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                          raw.begin() + static_cast<std::ptrdiff_t>(b.offset + b.length))});
  return apply_kernel_spec(FeatureVector(std::move(blocks)), spec).flatten();
}

inline Projection fit_projection(const PipelineConfig& cfg, const Matrix& X, const std::vector<int>& y,
                                 const std::vector<bool>& mask) {
  switch (cfg.reduce.kind) {
    case ReduceKind::none: return fit_standardize(X, mask);
    case ReduceKind::pca: return fit_pca(X, cfg.reduce.variance_target);
    case ReduceKind::fisher: return fit_fisher(X, y, cfg.reduce.ridge);
    case ReduceKind::pca_fisher: return fit_pca_fisher(X, y, cfg.reduce.variance_target, cfg.reduce.ridge);
  }
  throw InvariantError("unhandled reduction kind");
}

}  // namespace detail

/// Un-augmented and augmented raw feature vectors for every manifest entry.
struct FeatureTable {
  std::vector<std::shared_ptr<const std::vector<double>>> original;   // by stable id
  std::vector<std::shared_ptr<const std::vector<double>>> augmented;  // stable id * A + draw
  int multiplier = 0;
};

inline FeatureTable extract_all(const DatasetManifest& m, const PipelineConfig& cfg, const RunOptions& opts,
                                FeatureCache& cache) {
  const auto fhash = feature_hash(cfg.enhance, cfg.features);
  const auto ahash = augment_hash(cfg.augment);
  FeatureTable t;
  t.multiplier = cfg.augment.any_enabled() ? cfg.augment.multiplier : 0;
  const auto a = static_cast<std::size_t>(t.multiplier);
  t.original.resize(m.size());
  t.augmented.resize(m.size() * a);
  parallel_for(m.size(), opts.threads, [&](std::size_t i) {
    const auto& e = m.entries[i];
    detail::with_context("stable_id " + std::to_string(e.stable_id) + " (" + e.path + ")", [&] {
      std::optional<RasterImage> img;
      auto image = [&]() -> const RasterImage& {
        if (!img) img = opts.loader(m, e);
        return *img;
      };
      const FeatureCache::Key key{fhash, e.stable_id, FeatureCache::kOriginal, 0};
      t.original[i] = cache.find(key);
      if (!t.original[i]) t.original[i] = cache.insert(key, extract(image(), cfg.enhance, cfg.features).flatten());
      for (std::size_t d = 0; d < a; ++d) {
        const FeatureCache::Key akey{fhash, e.stable_id, static_cast<std::int64_t>(d), ahash};
        auto& slot = t.augmented[i * a + d];
        slot = cache.find(akey);
        if (!slot) {
          const auto aug = sample_augmented(image(), cfg.augment, static_cast<std::uint64_t>(e.stable_id), d);
          slot = cache.insert(akey, extract(aug, cfg.enhance, cfg.features).flatten());
        }
      }
    });
  });
  return t;
}

/// Stratified k-fold cross-validation. Per fold, the reduction and the
/// classifier are fitted on the training split plus its augmented copies
/// only, then the untouched test fold is predicted.
inline EvalReport run_cv(const DatasetManifest& m, const PipelineConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  validate_manifest(m);
  const int C = m.class_count();
  const auto folds = assign_folds(m, cfg.folds, cfg.seed);
  RunLog log;
  FeatureCache local_cache;
  FeatureCache& cache = opts.cache ? *opts.cache : local_cache;

  const auto t0 = std::chrono::steady_clock::now();
  const FeatureTable table = extract_all(m, cfg, opts, cache);
  {
    std::vector<int> all(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) all[i] = static_cast<int>(i);
    log.add({"extract", -1, std::move(all), detail::elapsed_ms(t0)});
  }

  const auto layout = cfg.features.layout();
  std::vector<bool> mask;
  for (const auto& b : layout)
    for (std::size_t i = 0; i < b.length; ++i) mask.push_back(cfg.kernel.op_for(b.name) != KernelOp::chi2);
  const bool composite =
      cfg.classifier.kind == ClassifierKind::knn && cfg.classifier.knn.distance == KnnDistance::composite_chi2;
  const auto composite_distance =
      composite ? CompositeDistance::from_layout(layout, cfg.kernel) : CompositeDistance{};
  const auto dim = static_cast<Eigen::Index>(cfg.features.length());
  const auto labels = m.labels();

  EvalReport r;
  r.dataset = m.name;
  r.config_hash = config_hash(cfg);
  r.folds = cfg.folds;
  r.N = static_cast<int>(m.size());
  r.classes = m.class_labels();
  r.confusion.assign(static_cast<std::size_t>(C), std::vector<int>(static_cast<std::size_t>(C), 0));
  r.leakage_self_test = opts.leakage_self_test;

  for (int f = 0; f < cfg.folds; ++f) {
    detail::with_context("fold " + std::to_string(f), [&] {
      const auto test_ids = folds.test_ids(f);
      auto train_ids = folds.train_ids(f);
      if (opts.leakage_self_test) {
        train_ids.resize(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) train_ids[i] = static_cast<int>(i);
      }
      const auto a = static_cast<std::size_t>(table.multiplier);

      auto t = std::chrono::steady_clock::now();
      const auto rows = static_cast<Eigen::Index>(train_ids.size() * (1 + a));
      Matrix X(rows, dim);
      std::vector<int> y, row_ids;
      y.reserve(static_cast<std::size_t>(rows));
      row_ids.reserve(static_cast<std::size_t>(rows));
      Eigen::Index row = 0;
      auto put = [&](const std::vector<double>& raw, int id) {
        const auto v = detail::kernel_row(raw, layout, cfg.kernel);
        X.row(row++) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), dim);
        y.push_back(labels[static_cast<std::size_t>(id)]);
        row_ids.push_back(id);
      };
      for (int id : train_ids) {
        put(*table.original[static_cast<std::size_t>(id)], id);
        for (std::size_t d = 0; d < a; ++d) put(*table.augmented[static_cast<std::size_t>(id) * a + d], id);
      }
      if (a > 0) log.add({"augment", f, train_ids, detail::elapsed_ms(t)});

      t = std::chrono::steady_clock::now();
      const Projection proj = detail::fit_projection(cfg, X, y, mask);
      log.add({"fit_reduce", f, train_ids, detail::elapsed_ms(t)});
      const Matrix Z = project_rows(proj, X);

      t = std::chrono::steady_clock::now();
      const TrainedModel model = train(cfg.classifier, Z, y, row_ids, C, composite_distance);
      log.add({"fit_classifier", f, train_ids, detail::elapsed_ms(t)});
      if (opts.on_fold_model) opts.on_fold_model(FoldModel{f, proj, model});

      t = std::chrono::steady_clock::now();
      std::vector<int> predicted(test_ids.size());
      parallel_for(test_ids.size(), opts.threads, [&](std::size_t i) {
        const auto raw = detail::kernel_row(*table.original[static_cast<std::size_t>(test_ids[i])], layout, cfg.kernel);
        const Vector z = project(proj, raw);
        predicted[i] = predict(model, std::span<const double>(z.data(), static_cast<std::size_t>(z.size()))).label;
      });
      log.add({"predict", f, test_ids, detail::elapsed_ms(t)});

      long long correct = 0;
      for (std::size_t i = 0; i < test_ids.size(); ++i) {
        const int truth = labels[static_cast<std::size_t>(test_ids[i])];
        ++r.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted[i])];
        if (truth == predicted[i])
          ++correct;
        else
          r.misclassified.push_back({test_ids[i], truth, predicted[i], f});
      }
      r.fold_accuracies.push_back(accuracy(correct, static_cast<long long>(test_ids.size())));
      r.fold_sizes.push_back(static_cast<int>(test_ids.size()));
      r.fold_test_hashes.push_back(ids_hash(test_ids));
    });
  }

  double sum = 0.0;
  for (double acc : r.fold_accuracies) sum += acc;
  r.mean_accuracy = sum / static_cast<double>(r.fold_accuracies.size());
  long long trace = 0;
  for (int c = 0; c < C; ++c) trace += r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
  r.pooled_accuracy = accuracy(trace, r.N);

  const auto events = log.events();
  if (opts.log)
    for (const auto& e : events) opts.log->add(e);
  const auto leaks = check_leakage(events);
  if (!leaks.empty() && !opts.leakage_self_test)
    throw InvariantError("leakage guard: fold " + std::to_string(leaks.front().fold) + " stage " +
                         leaks.front().stage + " saw " + std::to_string(leaks.front().leaked_ids.size()) +
                         " test ids");
  if (opts.leakage_self_test && leaks.empty())
    throw InvariantError("leakage self-test: the guard did not detect the injected overlap");
  verify_report(r, m);
  return r;
}

}  // namespace reeftex
