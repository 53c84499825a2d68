#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "reeftex/classify.hpp"

using namespace reeftex;

namespace {

Matrix random_points(int n, int d, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = g(gen);
  return X;
}

std::vector<double> row_of(const Matrix& X, int i) { return {X.row(i).data(), X.row(i).data() + X.cols()}; }

std::vector<int> random_labels(int n, int classes, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(gen() % classes);
  return y;
}

}  // namespace

// --- priors and KNN ----------------------------------------------------------

TEST(Priors, EqualClassFrequencies) {
  const std::vector<int> y{0, 0, 1, 2, 2, 2};
  EXPECT_EQ(class_priors(y, 4), (std::vector<double>{2.0 / 6, 1.0 / 6, 3.0 / 6, 0.0}));
  EXPECT_THROW(class_priors({}, 3), ValidationError);
}

TEST(Priors, ImbalancedFoldFavoursLargestClass) {
  const std::vector<int> counts{87, 78, 29, 160, 200, 216, 296, 11};
  std::vector<int> y;
  for (int c = 0; c < 8; ++c)
    for (int i = 0; i < counts[c] * 4 / 5; ++i) y.push_back(c);
  const auto p = class_priors(y, 8);
  EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(), 6);
  double s = 0.0;
  for (double v : p) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
}

TEST(Knn, ExactMatchWithKOne) {
  const auto X = random_points(30, 4, 1);
  const auto y = random_labels(30, 3, 1);
  KnnConfig cfg;
  cfg.k = 1;
  const auto m = knn_train(X, y, {}, cfg);
  const auto priors = class_priors(y, 3);
  for (int i = 0; i < 30; ++i) EXPECT_EQ(knn_predict(m, priors, row_of(X, i)).label, y[i]);
}

TEST(Knn, MatchesFullSortOracle) {
  const auto X = random_points(50, 6, 2);
  const auto y = random_labels(50, 4, 2);
  const auto Q = random_points(100, 6, 3);
  for (bool weighting : {false, true}) {
    KnnConfig cfg;
    cfg.k = 5;
    cfg.prior_weighting = weighting;
    const auto m = knn_train(X, y, {}, cfg);
    const auto priors = class_priors(y, 4);
    for (int q = 0; q < 100; ++q) {
      std::vector<std::pair<double, int>> all;
      for (int i = 0; i < 50; ++i) all.push_back({(X.row(i) - Q.row(q)).norm(), i});
      std::sort(all.begin(), all.end());
      std::vector<double> score(4, 0.0);
      for (int j = 0; j < 5; ++j) score[y[all[j].second]] += 1.0 / (all[j].first + 1e-9);
      if (weighting)
        for (int c = 0; c < 4; ++c) score[c] /= priors[c];
      const int expect = static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
      const auto p = knn_predict(m, priors, row_of(Q, q));
      EXPECT_EQ(p.label, expect) << "query " << q;
      for (int c = 0; c < 4; ++c) EXPECT_NEAR(p.scores[c], score[c], 1e-9 * std::max(1.0, score[c]));
    }
  }
}

TEST(Knn, PriorWeightingBreaksVoteTieTowardRarerClass) {
  // 7 of class 0, 3 of class 1; the query is equidistant from one of each.
  Matrix X(10, 1);
  std::vector<int> y;
  const double pos[10] = {-1, -50, -51, -52, -53, -54, -55, 1, 50, 51};
  for (int i = 0; i < 10; ++i) {
    X(i, 0) = pos[i];
    y.push_back(i < 7 ? 0 : 1);
  }
  const auto priors = class_priors(y, 2);
  ASSERT_DOUBLE_EQ(priors[0], 0.7);
  KnnConfig cfg;
  cfg.k = 2;
  cfg.prior_weighting = true;
  EXPECT_EQ(knn_predict(knn_train(X, y, {}, cfg), priors, std::vector<double>{0.0}).label, 1);
  cfg.prior_weighting = false;
  EXPECT_EQ(knn_predict(knn_train(X, y, {}, cfg), priors, std::vector<double>{0.0}).label, 0);
}

TEST(Knn, DistanceTiesBrokenByLowerId) {
  Matrix X(2, 1);
  X << -1.0, 1.0;
  KnnConfig cfg;
  cfg.k = 1;
  cfg.prior_weighting = false;
  const std::vector<int> y{0, 1};
  EXPECT_EQ(knn_predict(knn_train(X, y, {9, 4}, cfg), {0.5, 0.5}, std::vector<double>{0.0}).label, 1);
  EXPECT_EQ(knn_predict(knn_train(X, y, {4, 9}, cfg), {0.5, 0.5}, std::vector<double>{0.0}).label, 0);
}

TEST(Knn, UniformClassesWithoutWeightingGivePlainVote) {
  const auto X = random_points(40, 3, 4);
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) y[i] = i % 4;
  KnnConfig plain;
  plain.k = 7;
  plain.prior_weighting = false;
  KnnConfig weighted = plain;
  weighted.prior_weighting = true;
  const auto priors = class_priors(y, 4);
  const auto a = knn_train(X, y, {}, plain), b = knn_train(X, y, {}, weighted);
  const auto Q = random_points(20, 3, 5);
  for (int q = 0; q < 20; ++q) {
    const auto pa = knn_predict(a, priors, row_of(Q, q)), pb = knn_predict(b, priors, row_of(Q, q));
    EXPECT_EQ(pa.label, pb.label);
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(pb.scores[c], 4.0 * pa.scores[c], 1e-9 * pb.scores[c] + 1e-300);
  }
}

TEST(Knn, ScalingAllVectorsKeepsPredictions) {
  const auto X = random_points(60, 5, 6);
  const auto y = random_labels(60, 3, 6);
  const auto Q = random_points(30, 5, 7);
  const auto priors = class_priors(y, 3);
  KnnConfig cfg;
  cfg.k = 5;
  const auto base = knn_train(X, y, {}, cfg);
  for (double s : {0.5, 3.0, 100.0}) {
    const Matrix Xs = X * s;
    const auto scaled = knn_train(Xs, y, {}, cfg);
    for (int q = 0; q < 30; ++q) {
      std::vector<double> v = row_of(Q, q), vs = v;
      for (auto& x : vs) x *= s;
      EXPECT_EQ(knn_predict(base, priors, v).label, knn_predict(scaled, priors, vs).label);
    }
  }
}

TEST(Knn, RejectsBadTrainingAndQueries) {
  const auto X = random_points(4, 2, 8);
  KnnConfig cfg;
  cfg.k = 5;
  EXPECT_THROW(knn_train(X, {0, 1, 0, 1}, {}, cfg), ValidationError);
  EXPECT_THROW(knn_train(Matrix(0, 2), {}, {}, KnnConfig{}), ValidationError);
  cfg.k = 1;
  const auto m = knn_train(X, {0, 1, 0, 1}, {}, cfg);
  EXPECT_THROW(knn_predict(m, {0.5, 0.5}, std::vector<double>{1, 2, 3}), ValidationError);
  cfg.distance = KnnDistance::composite_chi2;
  EXPECT_THROW(knn_train(X, {0, 1, 0, 1}, {}, cfg), ValidationError);
}

TEST(Knn, CompositeChi2DistanceUsed) {
  Matrix X(2, 2);
  X << 1.0, 0.0, 0.5, 0.5;
  const CompositeDistance d({{0, 2, SegmentMetric::chi2, 1.0}});
  KnnConfig cfg;
  cfg.k = 2;
  cfg.prior_weighting = false;
  cfg.distance = KnnDistance::composite_chi2;
  const auto m = knn_train(X, {0, 1}, {}, cfg, d);
  const auto p = knn_predict(m, {0.5, 0.5}, std::vector<double>{0.0, 1.0});
  EXPECT_NEAR(p.scores[0], 1.0 / (1.0 + 1e-9), 1e-9);
  EXPECT_NEAR(p.scores[1], 1.0 / (chi2_distance(std::vector<double>{0, 1}, std::vector<double>{0.5, 0.5}) + 1e-9),
              1e-6);
}

// --- PDWMD ---------------------------------------------------------------------

TEST(Pdwmd, OneSamplePerClassIsNearestNeighbour) {
  const auto X = random_points(5, 3, 9);
  const std::vector<int> y{0, 1, 2, 3, 4};
  const auto m = pdwmd_train(X, y, 5);
  const auto Q = random_points(50, 3, 10);
  for (int q = 0; q < 50; ++q) {
    int nearest = 0;
    for (int i = 1; i < 5; ++i)
      if ((X.row(i) - Q.row(q)).norm() < (X.row(nearest) - Q.row(q)).norm()) nearest = i;
    EXPECT_EQ(pdwmd_predict(m, row_of(Q, q)).label, nearest);
  }
}

TEST(Pdwmd, CoincidentSamplesGiveZeroDistance) {
  Matrix X(5, 2);
  X << 1, 2, 1, 2, 1, 2, 5, 5, 6, 4;
  const std::vector<int> y{0, 0, 0, 1, 1};
  const auto m = pdwmd_train(X, y, 2);
  const auto d = pdwmd_distances(m, std::vector<double>{1, 2});
  EXPECT_EQ(d[0], 0.0);
  EXPECT_GT(d[1], 0.0);
  EXPECT_EQ(pdwmd_predict(m, std::vector<double>{1, 2}).label, 0);
}

TEST(Pdwmd, OneDimensionalHandEvaluation) {
  // class 0: 0, 1, 2, 6 ; class 1: 8, 9, 9.5
  Matrix X(7, 1);
  X << 0, 1, 2, 6, 8, 9, 9.5;
  const std::vector<int> y{0, 0, 0, 0, 1, 1, 1};
  const auto m = pdwmd_train(X, y, 2);
  auto class_distance = [](const std::vector<double>& xs, double v) {
    const double n = xs.size();
    double mean = 0.0;
    for (double x : xs) mean += x / n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean) / (n - 1);
    const double h = std::sqrt(var) * std::pow(4.0 / (3.0 * n), 0.2);
    double num = 0.0, den = 0.0;
    for (double xi : xs) {
      double w = 0.0;
      for (double xj : xs) w += std::exp(-(xi - xj) * (xi - xj) / (2 * h * h)) / n;
      num += w * std::fabs(v - xi);
      den += w;
    }
    return num / den;
  };
  for (double v : {-1.0, 0.5, 3.0, 4.5, 5.0, 7.0, 7.5, 10.0}) {
    const auto d = pdwmd_distances(m, std::vector<double>{v});
    const double d0 = class_distance({0, 1, 2, 6}, v), d1 = class_distance({8, 9, 9.5}, v);
    EXPECT_NEAR(d[0], d0, 1e-12);
    EXPECT_NEAR(d[1], d1, 1e-12);
    EXPECT_EQ(pdwmd_predict(m, std::vector<double>{v}).label, d0 <= d1 ? 0 : 1);
  }
}

TEST(Pdwmd, DistancesNonNegative) {
  const auto X = random_points(40, 4, 11);
  const auto y = random_labels(40, 3, 11);
  const auto m = pdwmd_train(X, y, 3);
  const auto Q = random_points(20, 4, 12);
  for (int q = 0; q < 20; ++q)
    for (double d : pdwmd_distances(m, row_of(Q, q))) EXPECT_GE(d, 0.0);
}

// --- SVM -------------------------------------------------------------------------

namespace {

Matrix separable_set(std::vector<int>& y) {
  // two classes on either side of x0 + x1 = 0 with margin >= 1
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> u(-3, 3);
  Matrix X(80, 2);
  y.clear();
  for (int i = 0; i < 80; ++i) {
    double a, b;
    do {
      a = u(gen);
      b = u(gen);
    } while (std::fabs(a + b) / std::sqrt(2.0) < 1.0);
    X(i, 0) = a;
    X(i, 1) = b;
    y.push_back(a + b > 0 ? 1 : 0);
  }
  return X;
}

}  // namespace

TEST(Svm, SeparableSetTrainedPerfectly) {
  std::vector<int> y;
  const auto X = separable_set(y);
  const auto m = svm_train(X, y, 2, SvmConfig{});
  for (int i = 0; i < X.rows(); ++i) EXPECT_EQ(svm_predict(m, row_of(X, i)).label, y[i]);
}

TEST(Svm, SameSeedSameWeights) {
  std::vector<int> y;
  const auto X = separable_set(y);
  EXPECT_EQ(svm_train(X, y, 2, SvmConfig{}).weights, svm_train(X, y, 2, SvmConfig{}).weights);
  SvmConfig other;
  other.seed = 2;
  EXPECT_NE(svm_train(X, y, 2, SvmConfig{}).weights, svm_train(X, y, 2, other).weights);
}

TEST(Svm, AveragedObjectiveNonIncreasing) {
  const auto X = random_points(120, 5, 14);
  const auto y = random_labels(120, 3, 14);
  SvmConfig cfg;
  cfg.epochs = 30;
  std::vector<double> log;
  svm_train(X, y, 3, cfg, &log);
  ASSERT_EQ(log.size(), 30u);
  for (std::size_t e = 1; e < log.size(); ++e) EXPECT_LE(log[e], log[e - 1] + 1e-12) << "epoch " << e;
}

TEST(Svm, SingleClassRejected) {
  EXPECT_THROW(svm_train(random_points(5, 2, 0), std::vector<int>(5, 1), 2, SvmConfig{}), ValidationError);
}

// --- MLP -------------------------------------------------------------------------

TEST(Mlp, GradientMatchesCentralDifferences) {
  const auto X = random_points(5, 4, 15);
  const std::vector<int> y{0, 1, 2, 1, 0};
  auto p = mlp_init(4, 6, 3, 3);
  for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1[i] = 0.05 * (i + 1);
  const std::vector<Eigen::Index> rows{0, 1, 2, 3, 4};
  const double decay = 1e-3;
  MlpParams grad;
  mlp_loss_and_gradient(p, X, y, rows, decay, &grad);
  std::vector<double> analytic;
  grad.for_each([&](double& g) { analytic.push_back(g); });

  std::vector<double*> params;
  p.for_each([&](double& v) { params.push_back(&v); });
  double max_rel = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double orig = *params[k];
    *params[k] = orig + h;
    const double up = mlp_loss_and_gradient(p, X, y, rows, decay, nullptr);
    *params[k] = orig - h;
    const double down = mlp_loss_and_gradient(p, X, y, rows, decay, nullptr);
    *params[k] = orig;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::fabs(numeric), std::fabs(analytic[k]), 1e-8});
    max_rel = std::max(max_rel, std::fabs(numeric - analytic[k]) / denom);
  }
  EXPECT_LT(max_rel, 1e-4);
}

TEST(Mlp, SoftmaxSumsToOne) {
  const auto p = mlp_init(3, 5, 4, 1);
  const auto Q = random_points(50, 3, 16);
  for (int q = 0; q < 50; ++q) {
    std::vector<double> v = row_of(Q, q);
    for (auto& x : v) x *= 100.0;
    EXPECT_NEAR(mlp_probabilities(p, v).sum(), 1.0, 1e-9);
  }
}

TEST(Mlp, SeededTrainingIsDeterministic) {
  std::vector<int> y;
  const auto X = separable_set(y);
  MlpConfig cfg;
  cfg.epochs = 10;
  std::vector<double> a, b;
  const auto ma = mlp_train(X, y, 2, cfg, &a);
  const auto mb = mlp_train(X, y, 2, cfg, &b);
  EXPECT_EQ(a, b);
  EXPECT_EQ(ma.w1, mb.w1);
}

TEST(Mlp, LearnsSeparableSet) {
  std::vector<int> y;
  const auto X = separable_set(y);
  MlpConfig cfg;
  cfg.epochs = 50;
  const auto m = mlp_train(X, y, 2, cfg);
  int correct = 0;
  for (int i = 0; i < X.rows(); ++i) correct += mlp_predict(m, row_of(X, i)).label == y[i];
  EXPECT_GE(correct, 78);
}

TEST(Mlp, SingleClassRejected) {
  EXPECT_THROW(mlp_train(random_points(5, 2, 0), std::vector<int>(5, 0), 2, MlpConfig{}), ValidationError);
}

// --- dispatch and persistence -------------------------------------------------------

TEST(TrainedModel, JsonRoundTripPredictsIdentically) {
  const auto X = random_points(60, 4, 17);
  const auto y = random_labels(60, 3, 17);
  const auto Q = random_points(25, 4, 18);
  for (auto kind : {ClassifierKind::knn, ClassifierKind::pdwmd, ClassifierKind::svm, ClassifierKind::mlp}) {
    ClassifierConfig cfg;
    cfg.kind = kind;
    cfg.mlp.epochs = 5;
    std::vector<int> ids(60);
    for (int i = 0; i < 60; ++i) ids[i] = 100 + i;
    const auto m = train(cfg, X, y, ids, 3);
    double sum = 0.0;
    for (double p : m.priors) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-15);
    const auto back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
    EXPECT_EQ(back.kind, kind);
    for (int q = 0; q < 25; ++q) {
      const auto a = predict(m, row_of(Q, q)), b = predict(back, row_of(Q, q));
      EXPECT_EQ(a.label, b.label) << to_string(kind);
      EXPECT_EQ(a.scores, b.scores) << to_string(kind);
    }
  }
}

TEST(TrainedModel, PredictionIsPure) {
  const auto X = random_points(30, 3, 19);
  const auto y = random_labels(30, 2, 19);
  const auto m = train(ClassifierConfig{}, X, y, {}, 2);
  const auto v = row_of(random_points(1, 3, 20), 0);
  EXPECT_EQ(predict(m, v).scores, predict(m, v).scores);
}
