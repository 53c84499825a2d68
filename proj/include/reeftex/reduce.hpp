#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "error.hpp"
#include "version.hpp"

namespace reeftex {

/// Sample matrix, one row per sample.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class ReduceKind { none, pca, fisher, pca_fisher };

inline const char* to_string(ReduceKind k) {
  switch (k) {
    case ReduceKind::none: return "none";
    case ReduceKind::pca: return "pca";
    case ReduceKind::fisher: return "fisher";
    case ReduceKind::pca_fisher: return "pca_fisher";
  }
  return "?";
}

inline ReduceKind reduce_kind_from_string(const std::string& s) {
  for (auto k : {ReduceKind::none, ReduceKind::pca, ReduceKind::fisher, ReduceKind::pca_fisher})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown reduction kind: " + s);
}

/// Affine map v -> basis * ((v - mean) / scale). An empty basis means the
/// identity (standardization only).
struct Projection {
  ReduceKind kind = ReduceKind::none;
  Vector mean;
  Vector scale;
  Matrix basis;                            // d_out x d_in
  std::vector<double> explained_variance;  // fraction of total per kept PCA component
  std::vector<double> eigenvalues;         // kept eigenvalues (PCA variances or Fisher ratios)

  Eigen::Index input_dim() const { return mean.size(); }
  Eigen::Index output_dim() const { return basis.rows() == 0 ? mean.size() : basis.rows(); }
};

inline Vector project(const Projection& p, std::span<const double> v) {
  if (static_cast<Eigen::Index>(v.size()) != p.input_dim())
    throw ValidationError("projection input has length " + std::to_string(v.size()) + ", expected " +
                          std::to_string(p.input_dim()));
  const Eigen::Map<const Vector> x(v.data(), static_cast<Eigen::Index>(v.size()));
  Vector z = ((x - p.mean).array() / p.scale.array()).matrix();
  if (p.basis.rows() == 0) return z;
  return p.basis * z;
}

inline Matrix project_rows(const Projection& p, const Matrix& X) {
  if (X.cols() != p.input_dim())
    throw ValidationError("projection input has " + std::to_string(X.cols()) + " columns, expected " +
                          std::to_string(p.input_dim()));
  Matrix Z = (X.rowwise() - p.mean.transpose()).array().rowwise() / p.scale.transpose().array();
  if (p.basis.rows() == 0) return Z;
  return Z * p.basis.transpose();
}

namespace detail {

/// Column means and sample standard deviations; columns with zero variance,
/// or excluded by `mask`, get scale 1. Masked-out columns are not centered
/// either.
inline void fit_standardizer(const Matrix& X, const std::vector<bool>& mask, Vector& mean, Vector& scale) {
  const auto n = X.rows();
  mean = X.colwise().mean().transpose();
  scale = Vector::Ones(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (!mask.empty() && !mask[j]) {
      mean[j] = 0.0;
      continue;
    }
    const double var = (X.col(j).array() - mean[j]).square().sum() / static_cast<double>(n - 1);
    if (var > 0.0) scale[j] = std::sqrt(var);
  }
}

/// First coefficient with magnitude above 1e-12 made positive, per row.
inline void fix_signs(Matrix& basis) {
  for (Eigen::Index r = 0; r < basis.rows(); ++r) {
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
      if (std::fabs(basis(r, c)) > 1e-12) {
        if (basis(r, c) < 0) basis.row(r) *= -1.0;
        break;
      }
    }
  }
}

}  // namespace detail

/// Standardization only (kind none). `mask[j] == false` passes column j
/// through unchanged.
inline Projection fit_standardize(const Matrix& X, const std::vector<bool>& mask = {}) {
  detail::require(X.rows() >= 2, "standardization needs at least 2 samples");
  Projection p;
  p.kind = ReduceKind::none;
  detail::fit_standardizer(X, mask, p.mean, p.scale);
  return p;
}

/// Principal components of the standardized data, keeping the fewest
/// components whose cumulative explained variance reaches `variance_target`.
inline Projection fit_pca(const Matrix& X, double variance_target = 0.99) {
  detail::require(X.rows() >= 2, "PCA needs at least 2 samples, got " + std::to_string(X.rows()));
  detail::require(variance_target > 0.0 && variance_target <= 1.0, "PCA variance target must be in (0, 1]");
  Projection p;
  p.kind = ReduceKind::pca;
  detail::fit_standardizer(X, {}, p.mean, p.scale);
  const Matrix Z = (X.rowwise() - p.mean.transpose()).array().rowwise() / p.scale.transpose().array();
  const Eigen::MatrixXd cov = (Z.transpose() * Z) / static_cast<double>(X.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw InvariantError("PCA eigendecomposition failed");
  const auto d = cov.rows();
  std::vector<double> values(d);
  for (Eigen::Index i = 0; i < d; ++i) values[i] = std::max(0.0, es.eigenvalues()[d - 1 - i]);
  const double total = std::accumulate(values.begin(), values.end(), 0.0);

  Eigen::Index keep = 1;
  if (total > 0.0) {
    double cum = 0.0;
    keep = d;
    for (Eigen::Index i = 0; i < d; ++i) {
      cum += values[i] / total;
      if (cum >= variance_target - 1e-12) {
        keep = i + 1;
        break;
      }
    }
  }
  p.basis.resize(keep, d);
  for (Eigen::Index i = 0; i < keep; ++i) {
    p.basis.row(i) = es.eigenvectors().col(d - 1 - i).transpose();
    p.eigenvalues.push_back(values[i]);
    p.explained_variance.push_back(total > 0.0 ? values[i] / total : 0.0);
  }
  detail::fix_signs(p.basis);
  return p;
}

/// Default ridge 1e-3 * trace(S_w) / d.
inline constexpr double kAutoRidge = -1.0;

/// Fisher discriminant directions: generalized eigenvectors of
/// S_b w = mu (S_w + ridge I) w, at most C - 1 of them, unit length.
///
/// `ridge < 0` selects the default ridge. With `standardize` false the input
/// is used as is (the PCA+Fisher chain feeds already centred scores).
inline Projection fit_fisher(const Matrix& X, const std::vector<int>& labels, double ridge = kAutoRidge,
                             bool standardize = true) {
  detail::require(static_cast<std::size_t>(X.rows()) == labels.size(), "Fisher: label count mismatch");
  detail::require(X.rows() >= 2, "Fisher needs at least 2 samples");
  const int n_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<int> counts(std::max(n_classes, 0), 0);
  for (int y : labels) {
    detail::require(y >= 0, "Fisher: negative label");
    ++counts[y];
  }
  const int present = static_cast<int>(std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }));
  detail::require(present >= 2, "Fisher needs at least 2 classes present");

  Projection p;
  p.kind = ReduceKind::fisher;
  const auto d = X.cols();
  if (standardize) {
    detail::fit_standardizer(X, {}, p.mean, p.scale);
  } else {
    p.mean = Vector::Zero(d);
    p.scale = Vector::Ones(d);
  }
  const Matrix Z = (X.rowwise() - p.mean.transpose()).array().rowwise() / p.scale.transpose().array();

  const Vector overall = Z.colwise().mean().transpose();
  Eigen::MatrixXd class_means = Eigen::MatrixXd::Zero(n_classes, d);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) class_means.row(labels[i]) += Z.row(i);
  for (int c = 0; c < n_classes; ++c)
    if (counts[c] > 0) class_means.row(c) /= counts[c];

  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const Vector diff = Z.row(i).transpose() - class_means.row(labels[i]).transpose();
    sw.noalias() += diff * diff.transpose();
  }
  Eigen::MatrixXd sb = Eigen::MatrixXd::Zero(d, d);
  for (int c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) continue;
    const Vector diff = class_means.row(c).transpose() - overall;
    sb.noalias() += counts[c] * (diff * diff.transpose());
  }

  if (ridge < 0.0) ridge = 1e-3 * sw.trace() / static_cast<double>(d);
  Eigen::MatrixXd denom = sw + ridge * Eigen::MatrixXd::Identity(d, d);
  if (ridge == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> check(sw, Eigen::EigenvaluesOnly);
    const double top = std::max(check.eigenvalues().maxCoeff(), 0.0);
    if (check.eigenvalues().minCoeff() <= 1e-12 * std::max(top, 1.0))
      throw ValidationError("within-class scatter is singular; use a ridge > 0");
  }
  if (denom.trace() <= 0.0) denom += Eigen::MatrixXd::Identity(d, d);

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(sb, denom);
  if (ges.info() != Eigen::Success) throw InvariantError("Fisher eigendecomposition failed");
  const Eigen::Index max_keep = std::min<Eigen::Index>(present - 1, d);
  const double top = ges.eigenvalues()[d - 1];
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = d - 1; i >= 0 && static_cast<Eigen::Index>(kept.size()) < max_keep; --i)
    if (ges.eigenvalues()[i] > 1e-12 * std::max(top, 1e-300)) kept.push_back(i);
  if (kept.empty()) kept.push_back(d - 1);

  p.basis.resize(static_cast<Eigen::Index>(kept.size()), d);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    Vector w = ges.eigenvectors().col(kept[r]);
    w.normalize();
    p.basis.row(static_cast<Eigen::Index>(r)) = w.transpose();
    p.eigenvalues.push_back(ges.eigenvalues()[kept[r]]);
  }
  detail::fix_signs(p.basis);
  return p;
}

/// PCA to `variance_target`, then Fisher on the component scores, folded
/// into one projection.
inline Projection fit_pca_fisher(const Matrix& X, const std::vector<int>& labels, double variance_target = 0.99,
                                 double ridge = kAutoRidge) {
  auto pca = fit_pca(X, variance_target);
  const Matrix scores = project_rows(pca, X);
  auto fisher = fit_fisher(scores, labels, ridge, /*standardize=*/false);
  Projection p;
  p.kind = ReduceKind::pca_fisher;
  p.mean = pca.mean;
  p.scale = pca.scale;
  p.basis = fisher.basis * pca.basis;
  p.explained_variance = pca.explained_variance;
  p.eigenvalues = fisher.eigenvalues;
  return p;
}

// --- persistence -----------------------------------------------------------

inline nlohmann::json to_json(const Projection& p) {
  nlohmann::json j;
  j["version"] = kModelSchemaVersion;
  j["kind"] = to_string(p.kind);
  j["mean"] = std::vector<double>(p.mean.data(), p.mean.data() + p.mean.size());
  j["scale"] = std::vector<double>(p.scale.data(), p.scale.data() + p.scale.size());
  j["basis_rows"] = p.basis.rows();
  j["basis_cols"] = p.basis.cols();
  j["basis"] = std::vector<double>(p.basis.data(), p.basis.data() + p.basis.size());
  j["explained_variance"] = p.explained_variance;
  j["eigenvalues"] = p.eigenvalues;
  return j;
}

inline Projection projection_from_json(const nlohmann::json& j) {
  Projection p;
  p.kind = reduce_kind_from_string(j.at("kind").get<std::string>());
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto scale = j.at("scale").get<std::vector<double>>();
  detail::require(mean.size() == scale.size(), "projection mean/scale length mismatch");
  p.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  p.scale = Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(scale.size()));
  const auto rows = j.at("basis_rows").get<Eigen::Index>();
  const auto cols = j.at("basis_cols").get<Eigen::Index>();
  const auto basis = j.at("basis").get<std::vector<double>>();
  detail::require(static_cast<Eigen::Index>(basis.size()) == rows * cols, "projection basis size mismatch");
  p.basis = Eigen::Map<const Matrix>(basis.data(), rows, cols);
  p.explained_variance = j.value("explained_variance", std::vector<double>{});
  p.eigenvalues = j.value("eigenvalues", std::vector<double>{});
  return p;
}

}  // namespace reeftex
