#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "features.hpp"

namespace reeftex {

inline constexpr double kChi2Epsilon = 1e-12;

namespace detail {

inline void require_non_negative(std::span<const double> v, const char* what) {
  for (double x : v)
    if (x < 0.0) throw ValidationError(std::string(what) + ": negative entry");
}

inline void require_same_length(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ValidationError("length mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
}

}  // namespace detail

/// v / sum(v); the zero vector stays zero.
inline std::vector<double> l1_normalize(std::span<const double> v) {
  detail::require_non_negative(v, "l1_normalize");
  double total = 0.0;
  for (double x : v) total += x;
  std::vector<double> out(v.begin(), v.end());
  if (total > 0.0)
    for (auto& x : out) x /= total;
  return out;
}

/// Chi-square kernel sum 2 x y / (x + y + eps).
inline double chi2_kernel(std::span<const double> x, std::span<const double> y, double eps = kChi2Epsilon) {
  detail::require_same_length(x, y);
  double k = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) k += 2.0 * x[i] * y[i] / (x[i] + y[i] + eps);
  return k;
}

/// Chi-square distance 1/2 sum (x - y)^2 / (x + y + eps).
inline double chi2_distance(std::span<const double> x, std::span<const double> y, double eps = kChi2Epsilon) {
  detail::require_same_length(x, y);
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    d += diff * diff / (x[i] + y[i] + eps);
  }
  return 0.5 * d;
}

/// Elementwise square root: inner products of mapped vectors are the
/// Hellinger kernel sum sqrt(x_i y_i).
inline std::vector<double> hellinger_map(std::span<const double> v) {
  detail::require_non_negative(v, "hellinger_map");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::sqrt(v[i]);
  return out;
}

inline double euclidean_distance(std::span<const double> x, std::span<const double> y) {
  detail::require_same_length(x, y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return std::sqrt(s);
}

enum class KernelOp { none, l1, hellinger, chi2 };

inline const char* to_string(KernelOp op) {
  switch (op) {
    case KernelOp::none: return "none";
    case KernelOp::l1: return "l1";
    case KernelOp::hellinger: return "hellinger";
    case KernelOp::chi2: return "chi2";
  }
  return "?";
}

inline KernelOp kernel_op_from_string(const std::string& s) {
  for (auto op : {KernelOp::none, KernelOp::l1, KernelOp::hellinger, KernelOp::chi2})
    if (s == to_string(op)) return op;
  throw ValidationError("unknown kernel op: " + s);
}

/// Per-block kernel mapping. `hellinger` and `chi2` both L1-normalize first;
/// `chi2` leaves the values as histograms and marks the block for
/// chi-square distance at classification time. Blocks not listed use `none`.
struct KernelSpec {
  std::map<std::string, KernelOp> ops;
  std::map<std::string, double> weights;  // composite-distance weights, default 1
  double epsilon = kChi2Epsilon;

  KernelOp op_for(const std::string& block) const {
    auto it = ops.find(block);
    return it == ops.end() ? KernelOp::none : it->second;
  }

  double weight_for(const std::string& block) const {
    auto it = weights.find(block);
    return it == weights.end() ? 1.0 : it->second;
  }

  bool uses_chi2() const {
    for (const auto& [name, op] : ops)
      if (op == KernelOp::chi2) return true;
    return false;
  }
};

inline FeatureVector apply_kernel_spec(const FeatureVector& fv, const KernelSpec& spec) {
  for (const auto& [name, op] : spec.ops) {
    const auto* block = fv.find(name);
    if (!block) throw ValidationError("kernel spec names unknown block: " + name);
    if (op != KernelOp::none && op != KernelOp::l1 && block->kind != BlockKind::histogram)
      throw ValidationError("kernel op " + std::string(to_string(op)) + " needs a histogram block, got " + name);
  }
  FeatureVector out = fv;
  for (auto& b : out.blocks()) {
    switch (spec.op_for(b.name)) {
      case KernelOp::none:
        break;
      case KernelOp::l1:
      case KernelOp::chi2:
        b.values = l1_normalize(b.values);
        break;
      case KernelOp::hellinger:
        b.values = hellinger_map(l1_normalize(b.values));
        break;
    }
  }
  return out;
}

enum class SegmentMetric { euclidean, chi2 };

/// Weighted sum of per-block distances over a flattened vector: chi-square
/// on blocks marked chi2, Euclidean on the rest.
class CompositeDistance {
 public:
  struct Segment {
    std::size_t offset = 0;
    std::size_t length = 0;
    SegmentMetric metric = SegmentMetric::euclidean;
    double weight = 1.0;
  };

  CompositeDistance() = default;
  explicit CompositeDistance(std::vector<Segment> segments, double eps = kChi2Epsilon)
      : segments_(std::move(segments)), eps_(eps) {}

  static CompositeDistance from_layout(const std::vector<BlockLayout>& layout, const KernelSpec& spec) {
    std::vector<Segment> segs;
    for (const auto& b : layout)
      segs.push_back({b.offset, b.length,
                      spec.op_for(b.name) == KernelOp::chi2 ? SegmentMetric::chi2 : SegmentMetric::euclidean,
                      spec.weight_for(b.name)});
    return CompositeDistance(std::move(segs), spec.epsilon);
  }

  double operator()(std::span<const double> x, std::span<const double> y) const {
    detail::require_same_length(x, y);
    double d = 0.0;
    for (const auto& s : segments_) {
      if (s.offset + s.length > x.size()) throw ValidationError("composite distance layout exceeds vector");
      const auto xs = x.subspan(s.offset, s.length);
      const auto ys = y.subspan(s.offset, s.length);
      d += s.weight * (s.metric == SegmentMetric::chi2 ? chi2_distance(xs, ys, eps_) : euclidean_distance(xs, ys));
    }
    return d;
  }

  const std::vector<Segment>& segments() const noexcept { return segments_; }
  double epsilon() const noexcept { return eps_; }

 private:
  std::vector<Segment> segments_;
  double eps_ = kChi2Epsilon;
};

}  // namespace reeftex
