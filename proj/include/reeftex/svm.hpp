#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "error.hpp"
#include "knn.hpp"
#include "reduce.hpp"
#include "rng.hpp"

namespace reeftex {

struct SvmConfig {
  double C = 1.0;
  int epochs = 20;
  std::uint64_t seed = 1;
};

/// One-vs-rest linear SVM. Row c of `weights` is class c's hyperplane with
/// the bias in the last column (inputs are augmented with a constant 1).
struct SvmModel {
  Matrix weights;  // classes x (d + 1)
};

/// Regularized hinge objective summed over the one-vs-rest problems:
/// sum_c [ lambda/2 |w_c|^2 + mean_i max(0, 1 - y_ic w_c . x_i) ].
inline double svm_objective(const Matrix& weights, const Matrix& X, const std::vector<int>& labels, double lambda) {
  double obj = 0.0;
  const auto d = X.cols();
  for (Eigen::Index c = 0; c < weights.rows(); ++c) {
    const auto w = weights.row(c);
    double hinge = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double y = labels[static_cast<std::size_t>(i)] == c ? 1.0 : -1.0;
      const double margin = y * (w.head(d).dot(X.row(i)) + w[d]);
      hinge += std::max(0.0, 1.0 - margin);
    }
    obj += 0.5 * lambda * w.squaredNorm() + hinge / static_cast<double>(X.rows());
  }
  return obj;
}

/// Pegasos-style stochastic subgradient descent with step 1/(lambda t),
/// lambda = 1/(C n), projection onto the ball of radius 1/sqrt(lambda), and
/// Polyak averaging of the iterates; the averaged weights are returned.
/// `objective_log`, when given, receives the objective of the averaged
/// weights after every epoch.
inline SvmModel svm_train(const Matrix& X, const std::vector<int>& labels, int class_count, const SvmConfig& cfg,
                          std::vector<double>* objective_log = nullptr) {
  detail::require(X.rows() > 0 && static_cast<std::size_t>(X.rows()) == labels.size(), "SVM: bad training set");
  detail::require(cfg.C > 0.0 && cfg.epochs > 0, "SVM: C and epochs must be positive");
  std::vector<bool> seen(class_count, false);
  for (int y : labels) {
    detail::require(y >= 0 && y < class_count, "SVM: label out of range");
    seen[y] = true;
  }
  detail::require(std::count(seen.begin(), seen.end(), true) >= 2, "SVM needs at least 2 classes");

  const auto n = X.rows();
  const auto d = X.cols();
  const double lambda = 1.0 / (cfg.C * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);

  Matrix w = Matrix::Zero(class_count, d + 1);
  Matrix avg = Matrix::Zero(class_count, d + 1);
  Eigen::VectorXd x(d + 1);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t t = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RandomStream rng{cfg.seed, 0x73766dULL /* "svm" */, static_cast<std::uint64_t>(epoch)};
    rng.shuffle(order);
    for (auto i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      x.head(d) = X.row(i).transpose();
      x[d] = 1.0;
      for (int c = 0; c < class_count; ++c) {
        auto wc = w.row(c);
        const double y = labels[static_cast<std::size_t>(i)] == c ? 1.0 : -1.0;
        const double margin = y * wc.dot(x.transpose());
        wc *= 1.0 - eta * lambda;
        if (margin < 1.0) wc += (eta * y) * x.transpose();
        const double norm = wc.norm();
        if (norm > radius) wc *= radius / norm;
      }
      avg += (w - avg) / static_cast<double>(t);
    }
    if (objective_log) {
      Matrix tmp = avg;
      objective_log->push_back(svm_objective(tmp, X, labels, lambda));
    }
  }
  return SvmModel{avg};
}

inline Prediction svm_predict(const SvmModel& m, std::span<const double> v) {
  const auto d = m.weights.cols() - 1;
  if (static_cast<Eigen::Index>(v.size()) != d) throw ValidationError("SVM query dimension mismatch");
  const Eigen::Map<const Eigen::VectorXd> x(v.data(), d);
  Prediction p;
  p.scores.resize(static_cast<std::size_t>(m.weights.rows()));
  for (Eigen::Index c = 0; c < m.weights.rows(); ++c)
    p.scores[static_cast<std::size_t>(c)] = m.weights.row(c).head(d).dot(x.transpose()) + m.weights(c, d);
  p.label = argmax(p.scores);
  return p;
}

}  // namespace reeftex
