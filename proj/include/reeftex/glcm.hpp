#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "error.hpp"
#include "raster.hpp"

namespace reeftex {

struct GlcmConfig {
  int levels = 32;
  std::vector<int> distances{1, 2};
  std::vector<int> angles{0, 45, 90, 135};  // degrees, multiples of 45 in [0, 180)
  bool symmetric = true;

  std::size_t offset_count() const { return distances.size() * angles.size(); }

  void validate() const {
    detail::require(levels >= 2, "GLCM levels must be at least 2");
    detail::require(!distances.empty() && !angles.empty(), "GLCM needs at least one distance and angle");
    for (int d : distances) detail::require(d > 0, "GLCM distances must be positive");
    for (int a : angles)
      detail::require(a >= 0 && a < 180 && a % 45 == 0, "GLCM angles must be one of 0, 45, 90, 135");
  }
};

inline constexpr int kHaralickStatCount = 5;

struct PixelOffset {
  int dx = 0;
  int dy = 0;
};

/// Image-axis offset for a distance/angle pair; angles are measured
/// counter-clockwise with y pointing down, so 90 degrees looks upward.
inline PixelOffset glcm_offset(int distance, int angle_deg) {
  switch (angle_deg) {
    case 0: return {distance, 0};
    case 45: return {distance, -distance};
    case 90: return {0, -distance};
    case 135: return {-distance, -distance};
    default: throw ValidationError("unsupported GLCM angle " + std::to_string(angle_deg));
  }
}

/// Equal-width quantization of [0, 1] into `levels` grey levels.
inline int quantize_level(double v, int levels) {
  const int q = static_cast<int>(std::floor(v * levels));
  return std::clamp(q, 0, levels - 1);
}

/// Raw co-occurrence counts, row-major levels x levels. In symmetric mode
/// every pair is counted in both directions.
inline std::vector<double> glcm_counts(const PlaneF& gray, int levels, PixelOffset off, bool symmetric) {
  std::vector<int> q(gray.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = quantize_level(gray.values()[i], levels);
  std::vector<double> m(static_cast<std::size_t>(levels) * levels, 0.0);
  const int w = gray.width(), h = gray.height();
  for (int y = std::max(0, -off.dy); y < std::min(h, h - off.dy); ++y) {
    for (int x = std::max(0, -off.dx); x < std::min(w, w - off.dx); ++x) {
      const int a = q[static_cast<std::size_t>(y) * w + x];
      const int b = q[static_cast<std::size_t>(y + off.dy) * w + (x + off.dx)];
      m[static_cast<std::size_t>(a) * levels + b] += 1.0;
      if (symmetric) m[static_cast<std::size_t>(b) * levels + a] += 1.0;
    }
  }
  return m;
}

struct HaralickStats {
  double contrast = 0.0;
  double correlation = 0.0;
  double energy = 0.0;
  double homogeneity = 0.0;
  double entropy = 0.0;
};

/// Statistics of a probability matrix P (sums to 1). Correlation is 1 when
/// either marginal has zero variance.
inline HaralickStats haralick(const std::vector<double>& p, int levels) {
  HaralickStats s;
  double mu_i = 0.0, mu_j = 0.0;
  for (int i = 0; i < levels; ++i)
    for (int j = 0; j < levels; ++j) {
      const double v = p[static_cast<std::size_t>(i) * levels + j];
      mu_i += i * v;
      mu_j += j * v;
    }
  double var_i = 0.0, var_j = 0.0, cov = 0.0;
  for (int i = 0; i < levels; ++i)
    for (int j = 0; j < levels; ++j) {
      const double v = p[static_cast<std::size_t>(i) * levels + j];
      if (v == 0.0) continue;
      const double d = i - j;
      s.contrast += v * d * d;
      s.energy += v * v;
      s.homogeneity += v / (1.0 + std::fabs(d));
      s.entropy -= v * std::log(v);
      var_i += v * (i - mu_i) * (i - mu_i);
      var_j += v * (j - mu_j) * (j - mu_j);
      cov += v * (i - mu_i) * (j - mu_j);
    }
  const double denom = std::sqrt(var_i * var_j);
  s.correlation = denom > 1e-15 ? cov / denom : 1.0;
  return s;
}

/// Haralick statistics (contrast, correlation, energy, homogeneity, entropy)
/// for every distance x angle pair, distances outermost.
inline std::vector<double> glcm_features(const PlaneF& gray, const GlcmConfig& cfg = {}) {
  cfg.validate();
  std::vector<double> out;
  out.reserve(cfg.offset_count() * kHaralickStatCount);
  for (int d : cfg.distances) {
    for (int a : cfg.angles) {
      auto m = glcm_counts(gray, cfg.levels, glcm_offset(d, a), cfg.symmetric);
      double total = 0.0;
      for (double v : m) total += v;
      if (total <= 0.0)
        throw ValidationError("plane too small for GLCM distance " + std::to_string(d));
      for (auto& v : m) v /= total;
      const auto s = haralick(m, cfg.levels);
      out.insert(out.end(), {s.contrast, s.correlation, s.energy, s.homogeneity, s.entropy});
    }
  }
  return out;
}

}  // namespace reeftex
