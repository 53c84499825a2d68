#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"

namespace reeftex {

/// 8-bit RGB pixel grid, row-major, channels interleaved.
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage() = default;

  RasterImage(int width, int height, std::uint8_t fill = 0) : width_(width), height_(height) {
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * height * kChannels, fill);
  }

  RasterImage(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    detail::require(data_.size() == static_cast<std::size_t>(width) * height * kChannels,
                    "raster data length does not match width*height*3");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const noexcept { return data_.empty(); }

  std::uint8_t& at(int x, int y, int c) { return data_[index(x, y) + c]; }
  std::uint8_t at(int x, int y, int c) const { return data_[index(x, y) + c]; }

  void set_pixel(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const auto i = index(x, y);
    data_[i] = r;
    data_[i + 1] = g;
    data_[i + 2] = b;
  }

  const std::vector<std::uint8_t>& data() const noexcept { return data_; }
  std::vector<std::uint8_t>& data() noexcept { return data_; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  static void check_dims(int w, int h) { detail::require(w > 0 && h > 0, "raster dimensions must be positive"); }

  std::size_t index(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Real-valued working plane (gray levels, hue degrees, opponent values).
class PlaneF {
 public:
  PlaneF() = default;
  PlaneF(int width, int height, double fill = 0.0) : width_(width), height_(height) {
    detail::require(width > 0 && height > 0, "plane dimensions must be positive");
    values_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  friend bool operator==(const PlaneF&, const PlaneF&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

inline std::uint8_t clamp_to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

/// BT.601 luma scaled to [0, 1].
inline PlaneF to_gray(const RasterImage& img) {
  PlaneF out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(x, y) = (0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2)) / 255.0;
  return out;
}

struct HsvPixel {
  double hue;         // degrees in [0, 360)
  double saturation;  // [0, 1]
  double value;       // [0, 1]
};

/// Hexcone HSV. Achromatic pixels get hue 0 and saturation 0.
inline HsvPixel rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const int mx = std::max({r8, g8, b8});
  const int mn = std::min({r8, g8, b8});
  const int chroma = mx - mn;
  HsvPixel p{0.0, 0.0, mx / 255.0};
  if (mx == 0 || chroma == 0) return p;
  p.saturation = static_cast<double>(chroma) / mx;
  const double r = r8, g = g8, b = b8, c = chroma;
  double h;
  if (mx == r8)
    h = 60.0 * ((g - b) / c);
  else if (mx == g8)
    h = 60.0 * ((b - r) / c + 2.0);
  else
    h = 60.0 * ((r - g) / c + 4.0);
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  p.hue = h;
  return p;
}

/// Inverse hexcone map, returning unrounded channels in [0, 255].
inline std::array<double, 3> hsv_to_rgb_real(const HsvPixel& p) {
  const double v = p.value * 255.0;
  const double c = v * p.saturation;
  double hp = p.hue / 60.0;
  hp -= 6.0 * std::floor(hp / 6.0);
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (std::min(5, static_cast<int>(hp))) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

struct HsvPlanes {
  PlaneF hue;
  PlaneF saturation;
  PlaneF value;
};

inline HsvPlanes to_hsv(const RasterImage& img) {
  HsvPlanes out{PlaneF(img.width(), img.height()), PlaneF(img.width(), img.height()),
                PlaneF(img.width(), img.height())};
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const auto p = rgb_to_hsv(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
      out.hue.at(x, y) = p.hue;
      out.saturation.at(x, y) = p.saturation;
      out.value.at(x, y) = p.value;
    }
  return out;
}

inline RasterImage from_hsv(const HsvPlanes& hsv) {
  RasterImage out(hsv.hue.width(), hsv.hue.height());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const auto rgb = hsv_to_rgb_real({hsv.hue.at(x, y), hsv.saturation.at(x, y), hsv.value.at(x, y)});
      out.set_pixel(x, y, clamp_to_byte(rgb[0]), clamp_to_byte(rgb[1]), clamp_to_byte(rgb[2]));
    }
  return out;
}

struct OpponentPlanes {
  PlaneF o1;  // (r - g) / sqrt(2)
  PlaneF o2;  // (r + g - 2b) / sqrt(6)
};

inline OpponentPlanes to_opponent(const RasterImage& img) {
  static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  static const double inv_sqrt6 = 1.0 / std::sqrt(6.0);
  OpponentPlanes out{PlaneF(img.width(), img.height()), PlaneF(img.width(), img.height())};
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double r = img.at(x, y, 0) / 255.0;
      const double g = img.at(x, y, 1) / 255.0;
      const double b = img.at(x, y, 2) / 255.0;
      out.o1.at(x, y) = (r - g) * inv_sqrt2;
      out.o2.at(x, y) = (r + g - 2.0 * b) * inv_sqrt6;
    }
  return out;
}

}  // namespace reeftex
