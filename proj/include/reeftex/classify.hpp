#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "kernelgeom.hpp"
#include "knn.hpp"
#include "mlp.hpp"
#include "pdwmd.hpp"
#include "reduce.hpp"
#include "svm.hpp"
#include "version.hpp"

namespace reeftex {

enum class ClassifierKind { knn, pdwmd, svm, mlp };

inline const char* to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::knn: return "knn";
    case ClassifierKind::pdwmd: return "pdwmd";
    case ClassifierKind::svm: return "svm";
    case ClassifierKind::mlp: return "mlp";
  }
  return "?";
}

inline ClassifierKind classifier_kind_from_string(const std::string& s) {
  for (auto k : {ClassifierKind::knn, ClassifierKind::pdwmd, ClassifierKind::svm, ClassifierKind::mlp})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown classifier kind: " + s);
}

inline const char* to_string(KnnDistance d) { return d == KnnDistance::euclidean ? "euclidean" : "composite_chi2"; }

inline KnnDistance knn_distance_from_string(const std::string& s) {
  if (s == "euclidean") return KnnDistance::euclidean;
  if (s == "composite_chi2") return KnnDistance::composite_chi2;
  throw ValidationError("unknown KNN distance: " + s);
}

struct ClassifierConfig {
  ClassifierKind kind = ClassifierKind::knn;
  KnnConfig knn;
  SvmConfig svm;
  MlpConfig mlp;
};

struct TrainedModel {
  ClassifierKind kind = ClassifierKind::knn;
  int class_count = 0;
  std::vector<double> priors;
  std::variant<KnnModel, PdwmdModel, SvmModel, MlpModel> payload;
};

/// Fits the configured classifier. `ids` break KNN distance ties;
/// `composite` is only consulted by KNN with the composite chi-square
/// distance.
inline TrainedModel train(const ClassifierConfig& cfg, const Matrix& X, const std::vector<int>& labels,
                          const std::vector<int>& ids, int class_count, const CompositeDistance& composite = {}) {
  TrainedModel m;
  m.kind = cfg.kind;
  m.class_count = class_count;
  m.priors = class_priors(labels, class_count);
  switch (cfg.kind) {
    case ClassifierKind::knn: m.payload = knn_train(X, labels, ids, cfg.knn, composite); break;
    case ClassifierKind::pdwmd: m.payload = pdwmd_train(X, labels, class_count); break;
    case ClassifierKind::svm: m.payload = svm_train(X, labels, class_count, cfg.svm); break;
    case ClassifierKind::mlp: m.payload = mlp_train(X, labels, class_count, cfg.mlp); break;
  }
  return m;
}

inline Prediction predict(const TrainedModel& m, std::span<const double> v) {
  return std::visit(
      [&](const auto& payload) -> Prediction {
        using T = std::decay_t<decltype(payload)>;
        if constexpr (std::is_same_v<T, KnnModel>)
          return knn_predict(payload, m.priors, v);
        else if constexpr (std::is_same_v<T, PdwmdModel>)
          return pdwmd_predict(payload, v);
        else if constexpr (std::is_same_v<T, SvmModel>)
          return svm_predict(payload, v);
        else
          return mlp_predict(payload, v);
      },
      m.payload);
}

// --- persistence -----------------------------------------------------------

namespace detail {

template <typename M>
nlohmann::json matrix_json(const M& m) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  return {{"rows", rm.rows()}, {"cols", rm.cols()}, {"data", std::vector<double>(rm.data(), rm.data() + rm.size())}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  require(static_cast<Eigen::Index>(data.size()) == rows * cols, "matrix payload size mismatch");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

inline nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

}  // namespace detail

inline nlohmann::json to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["version"] = kModelSchemaVersion;
  j["toolkit_version"] = kVersion;
  j["kind"] = to_string(m.kind);
  j["class_count"] = m.class_count;
  j["priors"] = m.priors;
  nlohmann::json payload;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, KnnModel>) {
          payload["k"] = p.config.k;
          payload["distance"] = to_string(p.config.distance);
          payload["prior_weighting"] = p.config.prior_weighting;
          payload["samples"] = detail::matrix_json(p.samples);
          payload["labels"] = p.labels;
          payload["ids"] = p.ids;
          payload["segments"] = nlohmann::json::array();
          for (const auto& s : p.composite.segments())
            payload["segments"].push_back({{"offset", s.offset},
                                           {"length", s.length},
                                           {"metric", s.metric == SegmentMetric::chi2 ? "chi2" : "euclidean"},
                                           {"weight", s.weight}});
          payload["epsilon"] = p.composite.epsilon();
        } else if constexpr (std::is_same_v<T, PdwmdModel>) {
          payload["classes"] = nlohmann::json::array();
          for (const auto& c : p.classes)
            payload["classes"].push_back(
                {{"samples", detail::matrix_json(c.samples)}, {"weights", c.weights}, {"bandwidth", c.bandwidth}});
        } else if constexpr (std::is_same_v<T, SvmModel>) {
          payload["weights"] = detail::matrix_json(p.weights);
        } else {
          payload["w1"] = detail::matrix_json(p.w1);
          payload["b1"] = detail::vector_json(p.b1);
          payload["w2"] = detail::matrix_json(p.w2);
          payload["b2"] = detail::vector_json(p.b2);
        }
      },
      m.payload);
  j["payload"] = std::move(payload);
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    detail::require(j.at("version").get<int>() == kModelSchemaVersion, "unsupported model version");
    TrainedModel m;
    m.kind = classifier_kind_from_string(j.at("kind").get<std::string>());
    m.class_count = j.at("class_count").get<int>();
    m.priors = j.at("priors").get<std::vector<double>>();
    const auto& p = j.at("payload");
    switch (m.kind) {
      case ClassifierKind::knn: {
        KnnModel k;
        k.config.k = p.at("k").get<int>();
        k.config.distance = knn_distance_from_string(p.at("distance").get<std::string>());
        k.config.prior_weighting = p.at("prior_weighting").get<bool>();
        k.samples = detail::matrix_from_json(p.at("samples"));
        k.labels = p.at("labels").get<std::vector<int>>();
        k.ids = p.at("ids").get<std::vector<int>>();
        std::vector<CompositeDistance::Segment> segs;
        for (const auto& s : p.at("segments"))
          segs.push_back({s.at("offset").get<std::size_t>(), s.at("length").get<std::size_t>(),
                          s.at("metric").get<std::string>() == "chi2" ? SegmentMetric::chi2 : SegmentMetric::euclidean,
                          s.at("weight").get<double>()});
        k.composite = CompositeDistance(std::move(segs), p.at("epsilon").get<double>());
        m.payload = std::move(k);
        break;
      }
      case ClassifierKind::pdwmd: {
        PdwmdModel pm;
        for (const auto& c : p.at("classes"))
          pm.classes.push_back({detail::matrix_from_json(c.at("samples")), c.at("weights").get<std::vector<double>>(),
                                c.at("bandwidth").get<double>()});
        m.payload = std::move(pm);
        break;
      }
      case ClassifierKind::svm:
        m.payload = SvmModel{detail::matrix_from_json(p.at("weights"))};
        break;
      case ClassifierKind::mlp:
        m.payload = MlpModel{detail::matrix_from_json(p.at("w1")), detail::vector_from_json(p.at("b1")),
                             detail::matrix_from_json(p.at("w2")), detail::vector_from_json(p.at("b2"))};
        break;
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace reeftex
