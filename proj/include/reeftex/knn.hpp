#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "kernelgeom.hpp"
#include "reduce.hpp"

namespace reeftex {

/// Output of every classifier: the chosen class and a per-class score where
/// larger is better.
struct Prediction {
  int label = -1;
  std::vector<double> scores;
};

/// Lowest index wins ties.
inline int argmax(std::span<const double> scores) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(scores.size()); ++c)
    if (scores[c] > scores[best]) best = c;
  return best;
}

/// Class frequencies; classes absent from `labels` get prior 0.
inline std::vector<double> class_priors(const std::vector<int>& labels, int class_count) {
  detail::require(!labels.empty(), "cannot estimate priors from an empty training set");
  std::vector<double> priors(class_count, 0.0);
  for (int y : labels) {
    detail::require(y >= 0 && y < class_count, "label out of range: " + std::to_string(y));
    priors[y] += 1.0;
  }
  for (auto& p : priors) p /= static_cast<double>(labels.size());
  return priors;
}

enum class KnnDistance { euclidean, composite_chi2 };

struct KnnConfig {
  int k = 5;
  KnnDistance distance = KnnDistance::euclidean;
  bool prior_weighting = true;
};

struct KnnModel {
  KnnConfig config;
  Matrix samples;
  std::vector<int> labels;
  std::vector<int> ids;  // tie-break key, usually stable ids
  CompositeDistance composite;
};

inline KnnModel knn_train(const Matrix& X, const std::vector<int>& labels, const std::vector<int>& ids,
                          const KnnConfig& cfg, const CompositeDistance& composite = {}) {
  detail::require(X.rows() > 0, "KNN needs a non-empty training set");
  detail::require(static_cast<std::size_t>(X.rows()) == labels.size(), "KNN: label count mismatch");
  detail::require(ids.empty() || ids.size() == labels.size(), "KNN: id count mismatch");
  detail::require(cfg.k >= 1, "KNN k must be positive");
  detail::require(cfg.k <= X.rows(), "KNN k = " + std::to_string(cfg.k) + " exceeds training size " +
                                         std::to_string(X.rows()));
  if (cfg.distance == KnnDistance::composite_chi2)
    detail::require(!composite.segments().empty(), "composite chi-square distance needs a block layout");
  KnnModel m{cfg, X, labels, ids, composite};
  if (m.ids.empty()) {
    m.ids.resize(labels.size());
    std::iota(m.ids.begin(), m.ids.end(), 0);
  }
  return m;
}

inline double knn_distance(const KnnModel& m, std::span<const double> a, std::span<const double> b) {
  return m.config.distance == KnnDistance::euclidean ? euclidean_distance(a, b) : m.composite(a, b);
}

/// k nearest by (distance, id); each votes 1 / (d + 1e-9) for its class.
/// With prior weighting each class total is divided by the class prior.
inline Prediction knn_predict(const KnnModel& m, const std::vector<double>& priors, std::span<const double> v) {
  if (static_cast<Eigen::Index>(v.size()) != m.samples.cols())
    throw ValidationError("KNN query has dimension " + std::to_string(v.size()) + ", expected " +
                          std::to_string(m.samples.cols()));
  const auto n = static_cast<std::size_t>(m.samples.rows());
  std::vector<std::pair<double, int>> dist(n);  // (distance, row)
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> row(m.samples.row(static_cast<Eigen::Index>(i)).data(),
                                      static_cast<std::size_t>(m.samples.cols()));
    dist[i] = {knn_distance(m, v, row), static_cast<int>(i)};
  }
  const auto k = static_cast<std::size_t>(m.config.k);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end(),
                    [&](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first < b.first;
                      return m.ids[a.second] < m.ids[b.second];
                    });

  Prediction p;
  p.scores.assign(priors.size(), 0.0);
  for (std::size_t j = 0; j < k; ++j) p.scores[m.labels[dist[j].second]] += 1.0 / (dist[j].first + 1e-9);
  if (m.config.prior_weighting)
    for (std::size_t c = 0; c < priors.size(); ++c)
      if (priors[c] > 0.0) p.scores[c] /= priors[c];
  p.label = argmax(p.scores);
  return p;
}

}  // namespace reeftex
