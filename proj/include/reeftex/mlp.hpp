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

struct MlpConfig {
  int hidden = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int epochs = 100;
  int batch_size = 32;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;
};

/// input -> hidden (ReLU) -> class logits (softmax).
struct MlpParams {
  Eigen::MatrixXd w1;  // hidden x d
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // classes x hidden
  Eigen::VectorXd b2;

  MlpParams zeros_like() const {
    return {Eigen::MatrixXd::Zero(w1.rows(), w1.cols()), Eigen::VectorXd::Zero(b1.size()),
            Eigen::MatrixXd::Zero(w2.rows(), w2.cols()), Eigen::VectorXd::Zero(b2.size())};
  }

  /// Visits every parameter in a fixed order (w1, b1, w2, b2, column-major).
  template <typename F>
  void for_each(F&& f) {
    for (Eigen::Index i = 0; i < w1.size(); ++i) f(w1.data()[i]);
    for (Eigen::Index i = 0; i < b1.size(); ++i) f(b1.data()[i]);
    for (Eigen::Index i = 0; i < w2.size(); ++i) f(w2.data()[i]);
    for (Eigen::Index i = 0; i < b2.size(); ++i) f(b2.data()[i]);
  }
};

using MlpModel = MlpParams;

/// Glorot-uniform weights, zero biases.
inline MlpParams mlp_init(int inputs, int hidden, int classes, std::uint64_t seed) {
  RandomStream rng{seed, 0x6d6c70ULL /* "mlp" */};
  MlpParams p{Eigen::MatrixXd(hidden, inputs), Eigen::VectorXd::Zero(hidden), Eigen::MatrixXd(classes, hidden),
              Eigen::VectorXd::Zero(classes)};
  const double a1 = std::sqrt(6.0 / (inputs + hidden));
  const double a2 = std::sqrt(6.0 / (hidden + classes));
  for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = rng.uniform(-a1, a1);
  for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = rng.uniform(-a2, a2);
  return p;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - top).exp();
  return e / e.sum();
}

inline Eigen::VectorXd mlp_probabilities(const MlpParams& p, std::span<const double> v) {
  if (static_cast<Eigen::Index>(v.size()) != p.w1.cols()) throw ValidationError("MLP query dimension mismatch");
  const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
  const Eigen::VectorXd h = (p.w1 * x + p.b1).cwiseMax(0.0);
  return softmax(p.w2 * h + p.b2);
}

/// Mean cross-entropy over `rows` plus weight_decay/2 * (|W1|^2 + |W2|^2),
/// and its exact gradient.
inline double mlp_loss_and_gradient(const MlpParams& p, const Matrix& X, const std::vector<int>& labels,
                                    std::span<const Eigen::Index> rows, double weight_decay, MlpParams* grad) {
  if (grad) *grad = p.zeros_like();
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (auto i : rows) {
    const Eigen::VectorXd x = X.row(i).transpose();
    const Eigen::VectorXd pre = p.w1 * x + p.b1;
    const Eigen::VectorXd h = pre.cwiseMax(0.0);
    const Eigen::VectorXd prob = softmax(p.w2 * h + p.b2);
    const int y = labels[static_cast<std::size_t>(i)];
    loss -= std::log(std::max(prob[y], 1e-300)) * inv_n;
    if (!grad) continue;
    Eigen::VectorXd d_logits = prob;
    d_logits[y] -= 1.0;
    d_logits *= inv_n;
    grad->w2.noalias() += d_logits * h.transpose();
    grad->b2 += d_logits;
    Eigen::VectorXd d_h = p.w2.transpose() * d_logits;
    for (Eigen::Index j = 0; j < d_h.size(); ++j)
      if (pre[j] <= 0.0) d_h[j] = 0.0;
    grad->w1.noalias() += d_h * x.transpose();
    grad->b1 += d_h;
  }
  loss += 0.5 * weight_decay * (p.w1.squaredNorm() + p.w2.squaredNorm());
  if (grad) {
    grad->w1 += weight_decay * p.w1;
    grad->w2 += weight_decay * p.w2;
  }
  return loss;
}

/// Seeded mini-batch gradient descent with classical momentum.
/// `loss_log`, when given, receives the full-training-set loss per epoch.
inline MlpModel mlp_train(const Matrix& X, const std::vector<int>& labels, int class_count, const MlpConfig& cfg,
                          std::vector<double>* loss_log = nullptr) {
  detail::require(X.rows() > 0 && static_cast<std::size_t>(X.rows()) == labels.size(), "MLP: bad training set");
  detail::require(cfg.hidden > 0 && cfg.epochs > 0 && cfg.batch_size > 0 && cfg.learning_rate > 0.0,
                  "MLP: hidden, epochs, batch size and learning rate must be positive");
  std::vector<bool> seen(class_count, false);
  for (int y : labels) {
    detail::require(y >= 0 && y < class_count, "MLP: label out of range");
    seen[y] = true;
  }
  detail::require(std::count(seen.begin(), seen.end(), true) >= 2, "MLP needs at least 2 classes");

  MlpParams p = mlp_init(static_cast<int>(X.cols()), cfg.hidden, class_count, cfg.seed);
  MlpParams velocity = p.zeros_like();
  MlpParams grad;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RandomStream rng{cfg.seed, 0x6d6c70ULL, static_cast<std::uint64_t>(epoch) + 1};
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto len = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      mlp_loss_and_gradient(p, X, labels, std::span(order).subspan(start, len), cfg.weight_decay, &grad);
      velocity.w1 = cfg.momentum * velocity.w1 - cfg.learning_rate * grad.w1;
      velocity.b1 = cfg.momentum * velocity.b1 - cfg.learning_rate * grad.b1;
      velocity.w2 = cfg.momentum * velocity.w2 - cfg.learning_rate * grad.w2;
      velocity.b2 = cfg.momentum * velocity.b2 - cfg.learning_rate * grad.b2;
      p.w1 += velocity.w1;
      p.b1 += velocity.b1;
      p.w2 += velocity.w2;
      p.b2 += velocity.b2;
    }
    if (loss_log) {
      std::vector<Eigen::Index> all(static_cast<std::size_t>(X.rows()));
      std::iota(all.begin(), all.end(), 0);
      loss_log->push_back(mlp_loss_and_gradient(p, X, labels, all, cfg.weight_decay, nullptr));
    }
  }
  return p;
}

inline Prediction mlp_predict(const MlpModel& m, std::span<const double> v) {
  const auto prob = mlp_probabilities(m, v);
  Prediction p;
  p.scores.assign(prob.data(), prob.data() + prob.size());
  p.label = argmax(p.scores);
  return p;
}

}  // namespace reeftex
