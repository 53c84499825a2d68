#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "augment.hpp"
#include "classify.hpp"
#include "enhance.hpp"
#include "error.hpp"
#include "features.hpp"
#include "kernelgeom.hpp"
#include "reduce.hpp"
#include "rng.hpp"
#include "version.hpp"

namespace reeftex {

struct ReduceConfig {
  ReduceKind kind = ReduceKind::pca_fisher;
  double variance_target = 0.99;
  double ridge = kAutoRidge;
};

/// Everything that determines an evaluation run.
struct PipelineConfig {
  EnhanceConfig enhance;
  FeatureConfig features;
  KernelSpec kernel;
  ReduceConfig reduce;
  ClassifierConfig classifier;
  AugmentSpec augment;
  int folds = 5;
  std::uint64_t seed = 1;

  void validate() const {
    enhance.validate();
    features.validate();
    augment.validate();
    detail::require(folds >= 2, "folds must be at least 2");
    detail::require(reduce.variance_target > 0.0 && reduce.variance_target <= 1.0,
                    "reduce.variance_target must be in (0, 1]");
    detail::require(reduce.ridge == kAutoRidge || reduce.ridge >= 0.0, "reduce.ridge must be \"auto\" or >= 0");
    std::map<std::string, BlockKind> blocks;
    for (const auto& b : features.layout()) blocks[b.name] = b.kind;
    for (const auto& [name, op] : kernel.ops) {
      detail::require(blocks.contains(name), "kernel names a block that is not extracted: " + name);
      if (op == KernelOp::hellinger || op == KernelOp::chi2)
        detail::require(blocks.at(name) == BlockKind::histogram,
                        "kernel op " + std::string(to_string(op)) + " needs a histogram block, got " + name);
    }
    for (const auto& [name, w] : kernel.weights) {
      detail::require(blocks.contains(name), "kernel weight names a block that is not extracted: " + name);
      detail::require(w >= 0.0, "kernel weights must be non-negative");
    }
    detail::require(kernel.epsilon > 0.0, "kernel epsilon must be positive");
    const bool composite = classifier.kind == ClassifierKind::knn &&
                           classifier.knn.distance == KnnDistance::composite_chi2;
    if (kernel.uses_chi2() || composite)
      detail::require(reduce.kind == ReduceKind::none,
                      "chi-square blocks and the composite KNN distance need reduce.kind = none");
    if (kernel.uses_chi2())
      detail::require(composite, "chi2 kernel blocks need classifier.knn.distance = composite_chi2");
    detail::require(classifier.knn.k >= 1, "knn.k must be at least 1");
  }
};

// --- JSON ------------------------------------------------------------------

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError("unknown key \"" + key + "\" in " + where);
  }
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline std::optional<double> optional_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const EnhanceConfig& c) {
  nlohmann::json order = nlohmann::json::array();
  for (auto s : c.order) order.push_back(to_string(s));
  return {{"clahs",
           {{"tiles_x", c.clahs.tiles_x}, {"tiles_y", c.clahs.tiles_y}, {"clip_limit", c.clahs.clip_limit},
            {"bins", c.clahs.bins}}},
          {"color_correction", c.color_correction},
          {"normalization", c.normalization},
          {"stretch",
           {{"enabled", c.stretch.enabled},
            {"low_percentile", c.stretch.low_percentile},
            {"high_percentile", c.stretch.high_percentile}}},
          {"order", order}};
}

inline EnhanceConfig enhance_config_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"clahs", "color_correction", "normalization", "stretch", "order"}, "enhance");
  EnhanceConfig c;
  if (j.contains("clahs")) {
    const auto& k = j.at("clahs");
    detail::check_keys(k, {"tiles_x", "tiles_y", "clip_limit", "bins"}, "enhance.clahs");
    detail::read_if(k, "tiles_x", c.clahs.tiles_x);
    detail::read_if(k, "tiles_y", c.clahs.tiles_y);
    detail::read_if(k, "clip_limit", c.clahs.clip_limit);
    detail::read_if(k, "bins", c.clahs.bins);
  }
  detail::read_if(j, "color_correction", c.color_correction);
  detail::read_if(j, "normalization", c.normalization);
  if (j.contains("stretch")) {
    const auto& s = j.at("stretch");
    detail::check_keys(s, {"enabled", "low_percentile", "high_percentile"}, "enhance.stretch");
    detail::read_if(s, "enabled", c.stretch.enabled);
    detail::read_if(s, "low_percentile", c.stretch.low_percentile);
    detail::read_if(s, "high_percentile", c.stretch.high_percentile);
  }
  if (j.contains("order")) {
    c.order.clear();
    for (const auto& s : j.at("order")) c.order.push_back(enhance_step_from_string(s.get<std::string>()));
  }
  return c;
}

inline nlohmann::json to_json(const FeatureConfig& c) {
  return {{"hue", {{"enabled", c.hue_enabled}, {"bins", c.hue_bins}}},
          {"opponent", {{"enabled", c.opponent_enabled}, {"bins", c.opponent_bins}}},
          {"glcm",
           {{"enabled", c.glcm_enabled},
            {"levels", c.glcm.levels},
            {"distances", c.glcm.distances},
            {"angles", c.glcm.angles},
            {"symmetric", c.glcm.symmetric}}},
          {"clbp", {{"enabled", c.clbp_enabled}, {"points", c.clbp.points}, {"radius", c.clbp.radius}}},
          {"gabor",
           {{"enabled", c.gabor_enabled},
            {"scales", c.gabor.scales},
            {"orientations", c.gabor.orientations},
            {"kernel_size", c.gabor.kernel_size},
            {"max_frequency", c.gabor.max_frequency},
            {"scale_ratio", c.gabor.scale_ratio}}}};
}

inline FeatureConfig feature_config_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"hue", "opponent", "glcm", "clbp", "gabor"}, "features");
  FeatureConfig c;
  if (j.contains("hue")) {
    detail::check_keys(j["hue"], {"enabled", "bins"}, "features.hue");
    detail::read_if(j["hue"], "enabled", c.hue_enabled);
    detail::read_if(j["hue"], "bins", c.hue_bins);
  }
  if (j.contains("opponent")) {
    detail::check_keys(j["opponent"], {"enabled", "bins"}, "features.opponent");
    detail::read_if(j["opponent"], "enabled", c.opponent_enabled);
    detail::read_if(j["opponent"], "bins", c.opponent_bins);
  }
  if (j.contains("glcm")) {
    const auto& g = j["glcm"];
    detail::check_keys(g, {"enabled", "levels", "distances", "angles", "symmetric"}, "features.glcm");
    detail::read_if(g, "enabled", c.glcm_enabled);
    detail::read_if(g, "levels", c.glcm.levels);
    detail::read_if(g, "distances", c.glcm.distances);
    detail::read_if(g, "angles", c.glcm.angles);
    detail::read_if(g, "symmetric", c.glcm.symmetric);
  }
  if (j.contains("clbp")) {
    detail::check_keys(j["clbp"], {"enabled", "points", "radius"}, "features.clbp");
    detail::read_if(j["clbp"], "enabled", c.clbp_enabled);
    detail::read_if(j["clbp"], "points", c.clbp.points);
    detail::read_if(j["clbp"], "radius", c.clbp.radius);
  }
  if (j.contains("gabor")) {
    const auto& g = j["gabor"];
    detail::check_keys(g, {"enabled", "scales", "orientations", "kernel_size", "max_frequency", "scale_ratio"},
                       "features.gabor");
    detail::read_if(g, "enabled", c.gabor_enabled);
    detail::read_if(g, "scales", c.gabor.scales);
    detail::read_if(g, "orientations", c.gabor.orientations);
    detail::read_if(g, "kernel_size", c.gabor.kernel_size);
    detail::read_if(g, "max_frequency", c.gabor.max_frequency);
    detail::read_if(g, "scale_ratio", c.gabor.scale_ratio);
  }
  return c;
}

inline nlohmann::json to_json(const KernelSpec& k) {
  nlohmann::json ops = nlohmann::json::object();
  for (const auto& [name, op] : k.ops) ops[name] = to_string(op);
  nlohmann::json weights = nlohmann::json::object();
  for (const auto& [name, w] : k.weights) weights[name] = w;
  return {{"ops", ops}, {"weights", weights}, {"epsilon", k.epsilon}};
}

inline KernelSpec kernel_spec_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"ops", "weights", "epsilon"}, "kernel");
  KernelSpec k;
  if (j.contains("ops"))
    for (const auto& [name, op] : j.at("ops").items()) k.ops[name] = kernel_op_from_string(op.get<std::string>());
  if (j.contains("weights"))
    for (const auto& [name, w] : j.at("weights").items()) k.weights[name] = w.get<double>();
  detail::read_if(j, "epsilon", k.epsilon);
  return k;
}

inline nlohmann::json to_json(const ReduceConfig& r) {
  nlohmann::json j{{"kind", to_string(r.kind)}, {"variance_target", r.variance_target}};
  if (r.ridge == kAutoRidge)
    j["ridge"] = "auto";
  else
    j["ridge"] = r.ridge;
  return j;
}

inline ReduceConfig reduce_config_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"kind", "variance_target", "ridge"}, "reduce");
  ReduceConfig r;
  if (j.contains("kind")) r.kind = reduce_kind_from_string(j.at("kind").get<std::string>());
  detail::read_if(j, "variance_target", r.variance_target);
  if (j.contains("ridge")) {
    const auto& v = j.at("ridge");
    if (v.is_string()) {
      detail::require(v.get<std::string>() == "auto", "reduce.ridge must be \"auto\" or a number");
      r.ridge = kAutoRidge;
    } else {
      r.ridge = v.get<double>();
    }
  }
  return r;
}

inline nlohmann::json to_json(const ClassifierConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"knn", {{"k", c.knn.k}, {"distance", to_string(c.knn.distance)}, {"prior_weighting", c.knn.prior_weighting}}},
          {"svm", {{"C", c.svm.C}, {"epochs", c.svm.epochs}, {"seed", c.svm.seed}}},
          {"mlp",
           {{"hidden", c.mlp.hidden},
            {"learning_rate", c.mlp.learning_rate},
            {"momentum", c.mlp.momentum},
            {"epochs", c.mlp.epochs},
            {"batch_size", c.mlp.batch_size},
            {"weight_decay", c.mlp.weight_decay},
            {"seed", c.mlp.seed}}}};
}

inline ClassifierConfig classifier_config_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"kind", "knn", "svm", "mlp"}, "classifier");
  ClassifierConfig c;
  if (j.contains("kind")) c.kind = classifier_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("knn")) {
    const auto& k = j["knn"];
    detail::check_keys(k, {"k", "distance", "prior_weighting"}, "classifier.knn");
    detail::read_if(k, "k", c.knn.k);
    if (k.contains("distance")) c.knn.distance = knn_distance_from_string(k.at("distance").get<std::string>());
    detail::read_if(k, "prior_weighting", c.knn.prior_weighting);
  }
  if (j.contains("svm")) {
    const auto& s = j["svm"];
    detail::check_keys(s, {"C", "epochs", "seed"}, "classifier.svm");
    detail::read_if(s, "C", c.svm.C);
    detail::read_if(s, "epochs", c.svm.epochs);
    detail::read_if(s, "seed", c.svm.seed);
  }
  if (j.contains("mlp")) {
    const auto& m = j["mlp"];
    detail::check_keys(m, {"hidden", "learning_rate", "momentum", "epochs", "batch_size", "weight_decay", "seed"},
                       "classifier.mlp");
    detail::read_if(m, "hidden", c.mlp.hidden);
    detail::read_if(m, "learning_rate", c.mlp.learning_rate);
    detail::read_if(m, "momentum", c.mlp.momentum);
    detail::read_if(m, "epochs", c.mlp.epochs);
    detail::read_if(m, "batch_size", c.mlp.batch_size);
    detail::read_if(m, "weight_decay", c.mlp.weight_decay);
    detail::read_if(m, "seed", c.mlp.seed);
  }
  return c;
}

inline nlohmann::json to_json(const AugmentSpec& a) {
  nlohmann::json j{{"flip", a.flip},
                   {"multiplier", a.multiplier},
                   {"seed", a.seed},
                   {"nonnegative_shift_only", a.nonnegative_shift_only}};
  j["shift"] = a.shift ? nlohmann::json(*a.shift) : nlohmann::json(nullptr);
  j["zoom"] = a.zoom ? nlohmann::json(*a.zoom) : nlohmann::json(nullptr);
  j["rotation"] = a.rotation ? nlohmann::json(*a.rotation) : nlohmann::json(nullptr);
  return j;
}

inline constexpr int kDefaultAugmentMultiplier = 3;

/// Missing `multiplier` defaults to 3 when a transform is enabled and to 0
/// otherwise; missing `seed` defaults to `fallback_seed`.
inline AugmentSpec augment_spec_from_json(const nlohmann::json& j, std::uint64_t fallback_seed = 1) {
  detail::check_keys(j, {"shift", "zoom", "rotation", "flip", "multiplier", "seed", "nonnegative_shift_only"},
                     "augment");
  AugmentSpec a;
  a.shift = detail::optional_number(j, "shift");
  a.zoom = detail::optional_number(j, "zoom");
  a.rotation = detail::optional_number(j, "rotation");
  detail::read_if(j, "flip", a.flip);
  a.multiplier = a.any_enabled() ? kDefaultAugmentMultiplier : 0;
  detail::read_if(j, "multiplier", a.multiplier);
  a.seed = fallback_seed;
  detail::read_if(j, "seed", a.seed);
  detail::read_if(j, "nonnegative_shift_only", a.nonnegative_shift_only);
  return a;
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {{"enhance", to_json(c.enhance)}, {"features", to_json(c.features)}, {"kernel", to_json(c.kernel)},
          {"reduce", to_json(c.reduce)},   {"classifier", to_json(c.classifier)}, {"augment", to_json(c.augment)},
          {"folds", c.folds},              {"seed", c.seed}};
}

/// Parses and validates. Absent sections take their defaults; unknown keys
/// are rejected so typos cannot silently fall back to defaults. The
/// provenance keys written by `config_document` are accepted and ignored.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  try {
    detail::check_keys(j,
                       {"enhance", "features", "kernel", "reduce", "classifier", "augment", "folds", "seed",
                        "toolkit_version", "config_hash"},
                       "config");
    PipelineConfig c;
    detail::read_if(j, "folds", c.folds);
    detail::read_if(j, "seed", c.seed);
    if (j.contains("enhance")) c.enhance = enhance_config_from_json(j["enhance"]);
    if (j.contains("features")) c.features = feature_config_from_json(j["features"]);
    if (j.contains("kernel")) c.kernel = kernel_spec_from_json(j["kernel"]);
    if (j.contains("reduce")) c.reduce = reduce_config_from_json(j["reduce"]);
    if (j.contains("classifier")) c.classifier = classifier_config_from_json(j["classifier"]);
    c.augment.seed = c.seed;
    if (j.contains("augment")) c.augment = augment_spec_from_json(j["augment"], c.seed);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return pipeline_config_from_json(j);
}

// --- hashing ---------------------------------------------------------------

/// Sorted keys, no insignificant whitespace.
inline std::string canonical_dump(const nlohmann::json& j) { return j.dump(); }

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::uint64_t config_hash_value(const PipelineConfig& c) { return fnv1a(canonical_dump(to_json(c))); }

inline std::string config_hash(const PipelineConfig& c) { return hex64(config_hash_value(c)); }

/// Hash of everything that determines an un-augmented feature vector.
inline std::uint64_t feature_hash(const EnhanceConfig& e, const FeatureConfig& f) {
  return fnv1a(canonical_dump({{"enhance", to_json(e)}, {"features", to_json(f)}}));
}

/// Hash of the augmentation parameters that shape a drawn copy.
inline std::uint64_t augment_hash(const AugmentSpec& a) {
  nlohmann::json j = to_json(a);
  j.erase("multiplier");
  return fnv1a(canonical_dump(j));
}

/// Config plus toolkit version and config hash, as written to run
/// directories. Loads back with `pipeline_config_from_json`.
inline nlohmann::json config_document(const PipelineConfig& c) {
  nlohmann::json j = to_json(c);
  j["toolkit_version"] = kVersion;
  j["config_hash"] = config_hash(c);
  return j;
}

}  // namespace reeftex
