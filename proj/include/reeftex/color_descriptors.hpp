#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "error.hpp"
#include "raster.hpp"

namespace reeftex {

namespace detail {

/// L1-normalizes in place; an all-zero histogram becomes uniform.
inline void normalize_or_uniform(std::vector<double>& hist) {
  double total = 0.0;
  for (double v : hist) total += v;
  if (total > 0.0) {
    for (auto& v : hist) v /= total;
  } else {
    for (auto& v : hist) v = 1.0 / static_cast<double>(hist.size());
  }
}

}  // namespace detail

/// Saturation-weighted hue histogram over [0, 360).
inline std::vector<double> hue_histogram(const RasterImage& img, int bins) {
  detail::require(bins > 0, "hue bins must be positive");
  std::vector<double> hist(bins, 0.0);
  const double width = 360.0 / bins;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const auto p = rgb_to_hsv(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
      if (p.saturation <= 0.0) continue;
      const int b = std::min(bins - 1, static_cast<int>(std::floor(p.hue / width)));
      hist[b] += p.saturation;
    }
  detail::normalize_or_uniform(hist);
  return hist;
}

/// Bin of an angle in (-180, 180] when the range is cut into `bins`
/// left-open intervals.
inline int opponent_angle_bin(double theta_deg, int bins) {
  const double width = 360.0 / bins;
  const int b = static_cast<int>(std::ceil((theta_deg + 180.0) / width)) - 1;
  return std::clamp(b, 0, bins - 1);
}

/// Pixelwise opponent angle histogram: theta = atan2(O1, O2), weighted by
/// the chromatic magnitude sqrt(O1^2 + O2^2).
inline std::vector<double> opponent_angle_histogram(const RasterImage& img, int bins) {
  detail::require(bins > 0, "opponent bins must be positive");
  const auto opp = to_opponent(img);
  std::vector<double> hist(bins, 0.0);
  for (std::size_t i = 0; i < opp.o1.size(); ++i) {
    const double o1 = opp.o1.values()[i];
    const double o2 = opp.o2.values()[i];
    const double weight = std::hypot(o1, o2);
    if (weight <= 0.0) continue;
    double theta = std::atan2(o1, o2) * 180.0 / std::numbers::pi;
    if (theta <= -180.0) theta = 180.0;
    hist[opponent_angle_bin(theta, bins)] += weight;
  }
  detail::normalize_or_uniform(hist);
  return hist;
}

}  // namespace reeftex
