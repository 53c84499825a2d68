#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "kernelgeom.hpp"
#include "knn.hpp"
#include "reduce.hpp"

namespace reeftex {

// Probability-density-weighted mean distance.
//
// For class c with samples x_i, each sample carries the weight
// w_i = f_c(x_i), a Gaussian kernel density estimate of class c evaluated at
// that sample (Silverman bandwidth, normalizing constant dropped since it
// cancels). A query's distance to the class is
//     D(v, c) = sum_i w_i d(v, x_i) / sum_i w_i
// with Euclidean d, and the predicted class minimizes D.

struct PdwmdClass {
  Matrix samples;
  std::vector<double> weights;
  double bandwidth = 1.0;
};

struct PdwmdModel {
  std::vector<PdwmdClass> classes;  // indexed by class; empty samples for absent classes
};

/// Silverman's rule in d dimensions with the mean per-dimension standard
/// deviation as the spread; falls back to spread 1 for degenerate classes.
inline double silverman_bandwidth(const Matrix& samples) {
  const double n = static_cast<double>(samples.rows());
  const double d = static_cast<double>(samples.cols());
  double spread = 0.0;
  if (samples.rows() > 1) {
    const Vector mean = samples.colwise().mean().transpose();
    for (Eigen::Index j = 0; j < samples.cols(); ++j)
      spread += std::sqrt((samples.col(j).array() - mean[j]).square().sum() / (n - 1.0));
    spread /= d;
  }
  if (!(spread > 0.0)) spread = 1.0;
  return spread * std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
}

inline PdwmdModel pdwmd_train(const Matrix& X, const std::vector<int>& labels, int class_count) {
  detail::require(X.rows() > 0, "PDWMD needs a non-empty training set");
  detail::require(static_cast<std::size_t>(X.rows()) == labels.size(), "PDWMD: label count mismatch");
  std::vector<std::vector<Eigen::Index>> rows(class_count);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    detail::require(labels[i] >= 0 && labels[i] < class_count, "PDWMD: label out of range");
    rows[labels[i]].push_back(static_cast<Eigen::Index>(i));
  }
  PdwmdModel m;
  m.classes.resize(class_count);
  int present = 0;
  for (int c = 0; c < class_count; ++c) {
    if (rows[c].empty()) continue;
    ++present;
    auto& cls = m.classes[c];
    cls.samples.resize(static_cast<Eigen::Index>(rows[c].size()), X.cols());
    for (std::size_t i = 0; i < rows[c].size(); ++i) cls.samples.row(static_cast<Eigen::Index>(i)) = X.row(rows[c][i]);
    cls.bandwidth = silverman_bandwidth(cls.samples);
    const double two_h2 = 2.0 * cls.bandwidth * cls.bandwidth;
    const auto nc = cls.samples.rows();
    cls.weights.assign(static_cast<std::size_t>(nc), 0.0);
    for (Eigen::Index i = 0; i < nc; ++i) {
      double density = 0.0;
      for (Eigen::Index j = 0; j < nc; ++j) density += std::exp(-(cls.samples.row(i) - cls.samples.row(j)).squaredNorm() / two_h2);
      cls.weights[static_cast<std::size_t>(i)] = density / static_cast<double>(nc);
    }
  }
  detail::require(present >= 1, "PDWMD: every class is empty");
  return m;
}

/// D(v, c) per class; +infinity for classes without training samples.
inline std::vector<double> pdwmd_distances(const PdwmdModel& m, std::span<const double> v) {
  std::vector<double> out(m.classes.size(), std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    const auto& cls = m.classes[c];
    if (cls.samples.rows() == 0) continue;
    if (static_cast<Eigen::Index>(v.size()) != cls.samples.cols())
      throw ValidationError("PDWMD query dimension mismatch");
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < cls.samples.rows(); ++i) {
      const std::span<const double> row(cls.samples.row(i).data(), static_cast<std::size_t>(cls.samples.cols()));
      num += cls.weights[static_cast<std::size_t>(i)] * euclidean_distance(v, row);
      den += cls.weights[static_cast<std::size_t>(i)];
    }
    out[c] = num / den;
  }
  return out;
}

/// Scores are -D so that larger is better; the label minimizes D.
inline Prediction pdwmd_predict(const PdwmdModel& m, std::span<const double> v) {
  Prediction p;
  p.scores = pdwmd_distances(m, v);
  for (auto& s : p.scores) s = -s;
  p.label = argmax(p.scores);
  return p;
}

}  // namespace reeftex
