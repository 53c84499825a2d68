#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "error.hpp"
#include "raster.hpp"

namespace reeftex {

struct ClahsConfig {
  int tiles_x = 8;
  int tiles_y = 8;
  double clip_limit = 4.0;  // multiple of the mean bin height
  int bins = 256;
};

struct StretchConfig {
  bool enabled = false;
  double low_percentile = 1.0;
  double high_percentile = 99.0;
};

enum class EnhanceStep { color_correction, normalization, channel_stretch, clahs };

inline const char* to_string(EnhanceStep s) {
  switch (s) {
    case EnhanceStep::color_correction: return "color_correction";
    case EnhanceStep::normalization: return "normalization";
    case EnhanceStep::channel_stretch: return "channel_stretch";
    case EnhanceStep::clahs: return "clahs";
  }
  return "?";
}

inline EnhanceStep enhance_step_from_string(const std::string& s) {
  for (auto step : {EnhanceStep::color_correction, EnhanceStep::normalization, EnhanceStep::channel_stretch,
                    EnhanceStep::clahs})
    if (s == to_string(step)) return step;
  throw ValidationError("unknown enhancement step: " + s);
}

/// Enhancement stage. CLAHS always runs; the other three are optional.
struct EnhanceConfig {
  ClahsConfig clahs;
  bool color_correction = false;
  bool normalization = false;
  StretchConfig stretch;
  std::vector<EnhanceStep> order{EnhanceStep::color_correction, EnhanceStep::normalization,
                                 EnhanceStep::channel_stretch, EnhanceStep::clahs};

  void validate() const {
    detail::require(clahs.tiles_x > 0 && clahs.tiles_y > 0, "CLAHS tile grid must be positive");
    detail::require(clahs.clip_limit > 1.0, "CLAHS clip limit must exceed 1");
    detail::require(clahs.bins >= 2 && clahs.bins <= 256, "CLAHS bins must be in [2, 256]");
    detail::require(0.0 <= stretch.low_percentile && stretch.low_percentile < stretch.high_percentile &&
                        stretch.high_percentile <= 100.0,
                    "stretch percentiles must satisfy 0 <= low < high <= 100");
    detail::require(std::find(order.begin(), order.end(), EnhanceStep::clahs) != order.end(),
                    "enhancement order must include clahs");
  }
};

namespace detail {

/// Per-axis lookup for bilinear blending between tile centres.
struct TileBlend {
  int lo = 0, hi = 0;
  double w_hi = 0.0;  // weight of `hi`
};

inline std::vector<TileBlend> tile_blend_axis(int length, int tiles) {
  std::vector<double> centre(tiles);
  for (int t = 0; t < tiles; ++t) {
    const int a = t * length / tiles;
    const int b = (t + 1) * length / tiles;
    centre[t] = 0.5 * (a + b - 1);
  }
  std::vector<TileBlend> out(length);
  for (int p = 0; p < length; ++p) {
    if (p <= centre.front()) {
      out[p] = {0, 0, 0.0};
    } else if (p >= centre.back()) {
      out[p] = {tiles - 1, tiles - 1, 0.0};
    } else {
      int t = 0;
      while (centre[t + 1] < p) ++t;
      out[p] = {t, t + 1, (p - centre[t]) / (centre[t + 1] - centre[t])};
    }
  }
  return out;
}

}  // namespace detail

/// Contrast-limited adaptive histogram equalization of the HSV value
/// channel.
///
/// The value plane (max of R, G, B) is split into a tiles_x by tiles_y grid
/// with edge-partial tiles. Each tile histogram is clipped at
/// clip_limit * (tile pixels / bins), the clipped mass is spread evenly over
/// all bins, and its cumulative sum becomes the tile's mapping. Pixels blend
/// the mappings of the four nearest tile centres bilinearly. The new value is
/// written back by scaling R, G and B by V'/V, which leaves hue and
/// saturation unchanged before 8-bit rounding.
inline RasterImage clahs(const RasterImage& img, const ClahsConfig& cfg = {}) {
  detail::require(cfg.tiles_x > 0 && cfg.tiles_y > 0 && cfg.clip_limit > 1.0 && cfg.bins >= 2 && cfg.bins <= 256,
                  "invalid CLAHS configuration");
  const int w = img.width(), h = img.height();
  const int tx = std::min(cfg.tiles_x, w), ty = std::min(cfg.tiles_y, h);
  const int bins = cfg.bins;

  std::vector<int> value(img.pixel_count());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      value[static_cast<std::size_t>(y) * w + x] = std::max({img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)});
  auto bin_of = [bins](int v) { return v * bins / 256; };

  // lut[(ty_index * tx + tx_index) * bins + bin] -> new value in [0, 255]
  std::vector<double> lut(static_cast<std::size_t>(tx) * ty * bins);
  std::vector<double> hist(bins);
  for (int j = 0; j < ty; ++j) {
    const int y0 = j * h / ty, y1 = (j + 1) * h / ty;
    for (int i = 0; i < tx; ++i) {
      const int x0 = i * w / tx, x1 = (i + 1) * w / tx;
      std::fill(hist.begin(), hist.end(), 0.0);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) hist[bin_of(value[static_cast<std::size_t>(y) * w + x])] += 1.0;
      const double n = static_cast<double>(x1 - x0) * (y1 - y0);
      const double limit = cfg.clip_limit * n / bins;
      double excess = 0.0;
      for (auto& c : hist) {
        if (c > limit) {
          excess += c - limit;
          c = limit;
        }
      }
      const double spread = excess / bins;
      double cdf = 0.0;
      double* tile_lut = &lut[(static_cast<std::size_t>(j) * tx + i) * bins];
      for (int b = 0; b < bins; ++b) {
        cdf += hist[b] + spread;
        tile_lut[b] = 255.0 * cdf / n;
      }
    }
  }

  const auto bx = detail::tile_blend_axis(w, tx);
  const auto by = detail::tile_blend_axis(h, ty);
  RasterImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int v = value[static_cast<std::size_t>(y) * w + x];
      const int b = bin_of(v);
      auto L = [&](int ti, int tj) { return lut[(static_cast<std::size_t>(tj) * tx + ti) * bins + b]; };
      const auto& ax = bx[x];
      const auto& ay = by[y];
      const double top = L(ax.lo, ay.lo) + ax.w_hi * (L(ax.hi, ay.lo) - L(ax.lo, ay.lo));
      const double bot = L(ax.lo, ay.hi) + ax.w_hi * (L(ax.hi, ay.hi) - L(ax.lo, ay.hi));
      const double nv = std::clamp(top + ay.w_hi * (bot - top), 0.0, 255.0);
      if (v == 0) {
        const auto g = clamp_to_byte(nv);
        out.set_pixel(x, y, g, g, g);
      } else {
        const double s = nv / v;
        out.set_pixel(x, y, clamp_to_byte(img.at(x, y, 0) * s), clamp_to_byte(img.at(x, y, 1) * s),
                      clamp_to_byte(img.at(x, y, 2) * s));
      }
    }
  }
  return out;
}

/// Gray-world color correction.
inline RasterImage color_correct(const RasterImage& img) {
  std::array<double, 3> mean{};
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) mean[c] += img.at(x, y, c);
  for (auto& m : mean) m /= static_cast<double>(img.pixel_count());
  const double target = (mean[0] + mean[1] + mean[2]) / 3.0;
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  for (int c = 0; c < 3; ++c)
    if (mean[c] > 0.0) scale[c] = target / mean[c];

  RasterImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = clamp_to_byte(img.at(x, y, c) * scale[c]);
  return out;
}

/// Joint affine stretch of all channels so min -> 0 and max -> 255.
inline RasterImage normalize(const RasterImage& img) {
  const auto [lo_it, hi_it] = std::minmax_element(img.data().begin(), img.data().end());
  const int lo = *lo_it, hi = *hi_it;
  if (lo == hi) return img;
  RasterImage out = img;
  for (auto& v : out.data()) v = clamp_to_byte((v - lo) * 255.0 / (hi - lo));
  return out;
}

namespace detail {

/// Linear-interpolated percentile of a channel from its 256-bin histogram.
inline double channel_percentile(const std::array<std::size_t, 256>& hist, std::size_t n, double pct) {
  const double pos = pct / 100.0 * static_cast<double>(n - 1);
  const auto lower = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lower);
  auto order_stat = [&](std::size_t k) {
    std::size_t acc = 0;
    for (int v = 0; v < 256; ++v) {
      acc += hist[v];
      if (acc > k) return static_cast<double>(v);
    }
    return 255.0;
  };
  const double a = order_stat(lower);
  return frac > 0.0 ? a + frac * (order_stat(std::min(lower + 1, n - 1)) - a) : a;
}

}  // namespace detail

/// Per-channel linear stretch mapping the low/high percentile values to
/// 0/255, clamping outside. Constant channels are left alone.
inline RasterImage channel_stretch(const RasterImage& img, double low_pct, double high_pct) {
  detail::require(0.0 <= low_pct && low_pct < high_pct && high_pct <= 100.0,
                  "stretch percentiles must satisfy 0 <= low < high <= 100");
  RasterImage out = img;
  const std::size_t n = img.pixel_count();
  for (int c = 0; c < 3; ++c) {
    std::array<std::size_t, 256> hist{};
    for (std::size_t i = 0; i < n; ++i) ++hist[img.data()[i * 3 + c]];
    const double lo = detail::channel_percentile(hist, n, low_pct);
    const double hi = detail::channel_percentile(hist, n, high_pct);
    if (hi <= lo) continue;
    for (std::size_t i = 0; i < n; ++i) {
      auto& v = out.data()[i * 3 + c];
      v = clamp_to_byte((v - lo) * 255.0 / (hi - lo));
    }
  }
  return out;
}

inline RasterImage enhance(const RasterImage& img, const EnhanceConfig& cfg) {
  cfg.validate();
  RasterImage cur = img;
  for (auto step : cfg.order) {
    switch (step) {
      case EnhanceStep::color_correction:
        if (cfg.color_correction) cur = color_correct(cur);
        break;
      case EnhanceStep::normalization:
        if (cfg.normalization) cur = normalize(cur);
        break;
      case EnhanceStep::channel_stretch:
        if (cfg.stretch.enabled) cur = channel_stretch(cur, cfg.stretch.low_percentile, cfg.stretch.high_percentile);
        break;
      case EnhanceStep::clahs:
        cur = clahs(cur, cfg.clahs);
        break;
    }
  }
  return cur;
}

}  // namespace reeftex
