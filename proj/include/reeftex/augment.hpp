#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "error.hpp"
#include "image_io.hpp"
#include "raster.hpp"
#include "rng.hpp"

namespace reeftex {

/// Label-preserving distortions. A transform is enabled when its parameter
/// is present; `multiplier` augmented copies are drawn per training image.
struct AugmentSpec {
  std::optional<double> shift;     // max fraction of width/height, in [0, 1)
  std::optional<double> zoom;      // scale drawn from [1 - zoom, 1 + zoom], zoom in [0, 1)
  std::optional<double> rotation;  // max angle in degrees, in [0, 360)
  bool flip = false;               // horizontal flip with probability 1/2
  int multiplier = 0;
  std::uint64_t seed = 1;
  bool nonnegative_shift_only = false;

  bool any_enabled() const { return shift || zoom || rotation || flip; }

  void validate() const {
    detail::require(multiplier >= 0, "augmentation multiplier must be non-negative");
    detail::require(!shift || (*shift >= 0.0 && *shift < 1.0), "shift must be in [0, 1)");
    detail::require(!zoom || (*zoom >= 0.0 && *zoom < 1.0), "zoom must be in [0, 1)");
    detail::require(!rotation || (*rotation >= 0.0 && *rotation < 360.0), "rotation must be in [0, 360)");
    detail::require(multiplier == 0 || any_enabled(), "augmentation multiplier > 0 needs an enabled transform");
  }
};

namespace detail {

/// Bilinear sample with coordinates clamped to the image, i.e. the border
/// replicates the limit pixels.
inline double sample_replicate(const RasterImage& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0, fy = y - y0;
  const double a = img.at(x0, y0, c), b = img.at(x1, y0, c);
  const double cc = img.at(x0, y1, c), d = img.at(x1, y1, c);
  const double top = a + fx * (b - a);
  const double bot = cc + fx * (d - cc);
  return top + fy * (bot - top);
}

template <typename Map>
RasterImage resample(const RasterImage& img, Map&& source_of) {
  RasterImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const auto [sx, sy] = source_of(x, y);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = clamp_to_byte(sample_replicate(img, sx, sy, c));
    }
  return out;
}

}  // namespace detail

/// Translates by round(fx * width), round(fy * height) pixels; vacated
/// pixels take the nearest edge value.
inline RasterImage shift(const RasterImage& img, double fx, double fy) {
  const int dx = static_cast<int>(std::lround(fx * img.width()));
  const int dy = static_cast<int>(std::lround(fy * img.height()));
  if (dx == 0 && dy == 0) return img;
  RasterImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    const int sy = std::clamp(y - dy, 0, img.height() - 1);
    for (int x = 0; x < img.width(); ++x) {
      const int sx = std::clamp(x - dx, 0, img.width() - 1);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

/// Bilinear rescale by `scale` about the image centre, keeping the original
/// size: scale > 1 crops the centre, scale < 1 pads by replication.
inline RasterImage zoom(const RasterImage& img, double scale) {
  detail::require(scale > 0.0, "zoom scale must be positive");
  if (scale == 1.0) return img;
  const double cx = 0.5 * (img.width() - 1), cy = 0.5 * (img.height() - 1);
  return detail::resample(img, [&](int x, int y) {
    return std::pair{(x - cx) / scale + cx, (y - cy) / scale + cy};
  });
}

/// Counter-clockwise (as displayed) rotation about the centre with bilinear
/// interpolation and replicate borders. Quarter turns are exact.
inline RasterImage rotate(const RasterImage& img, double degrees) {
  detail::require(degrees >= 0.0 && degrees < 360.0, "rotation angle must be in [0, 360)");
  if (degrees == 0.0) return img;
  double c, s;
  if (degrees == 90.0) {
    c = 0.0;
    s = 1.0;
  } else if (degrees == 180.0) {
    c = -1.0;
    s = 0.0;
  } else if (degrees == 270.0) {
    c = 0.0;
    s = -1.0;
  } else {
    const double rad = degrees * std::numbers::pi / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
  }
  const double cx = 0.5 * (img.width() - 1), cy = 0.5 * (img.height() - 1);
  return detail::resample(img, [&](int x, int y) {
    const double dx = x - cx, dy = y - cy;
    return std::pair{cx + c * dx - s * dy, cy + s * dx + c * dy};
  });
}

inline RasterImage hflip(const RasterImage& img) {
  RasterImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(img.width() - 1 - x, y, c);
  return out;
}

/// Parameters drawn for one augmented copy.
struct AugmentDraw {
  double shift_x = 0.0;
  double shift_y = 0.0;
  double scale = 1.0;
  double angle = 0.0;
  bool flip = false;
};

/// The draw for (spec.seed, stable_id, draw_index). All seven variates are
/// always consumed in a fixed order so enabling one transform never changes
/// another's values.
inline AugmentDraw draw_augmentation(const AugmentSpec& spec, std::uint64_t stable_id, std::uint64_t draw_index) {
  RandomStream rng{spec.seed, stable_id, draw_index};
  const double sx = spec.shift.value_or(0.0);
  const double zx = spec.zoom.value_or(0.0);
  const double rx = spec.rotation.value_or(0.0);
  AugmentDraw d;
  const double u = rng.uniform(0.0, sx);
  const bool u_neg = rng.coin();
  const double v = rng.uniform(0.0, sx);
  const bool v_neg = rng.coin();
  const double scale = rng.uniform(1.0 - zx, 1.0 + zx);
  const double angle = rng.uniform(0.0, rx);
  const bool flip = rng.coin();
  if (spec.shift) {
    d.shift_x = (u_neg && !spec.nonnegative_shift_only) ? -u : u;
    d.shift_y = (v_neg && !spec.nonnegative_shift_only) ? -v : v;
  }
  if (spec.zoom) d.scale = scale;
  if (spec.rotation) d.angle = angle;
  d.flip = spec.flip && flip;
  return d;
}

/// Applies a draw in the order rotate -> zoom -> shift -> flip.
inline RasterImage apply_augmentation(const RasterImage& img, const AugmentDraw& d) {
  RasterImage out = img;
  if (d.angle != 0.0) out = rotate(out, d.angle);
  if (d.scale != 1.0) out = zoom(out, d.scale);
  if (d.shift_x != 0.0 || d.shift_y != 0.0) out = shift(out, d.shift_x, d.shift_y);
  if (d.flip) out = hflip(out);
  return out;
}

inline RasterImage sample_augmented(const RasterImage& img, const AugmentSpec& spec, std::uint64_t stable_id,
                                    std::uint64_t draw_index) {
  spec.validate();
  return apply_augmentation(img, draw_augmentation(spec, stable_id, draw_index));
}

/// Magnitudes shown for transforms the spec leaves disabled.
inline constexpr double kPreviewShift = 0.2;
inline constexpr double kPreviewZoom = 0.2;
inline constexpr double kPreviewRotation = 2.0;

/// Original, shift, zoom, rotation and flip panels, each transform at its
/// extreme setting (shift x in both axes, zoom 1 + x, rotation x). Disabled
/// transforms use the preview magnitudes.
inline std::vector<RasterImage> augmentation_panels(const RasterImage& img, const AugmentSpec& spec) {
  spec.validate();
  const double s = spec.shift.value_or(kPreviewShift);
  return {img, shift(img, s, s), zoom(img, 1.0 + spec.zoom.value_or(kPreviewZoom)),
          rotate(img, spec.rotation.value_or(kPreviewRotation)), hflip(img)};
}

}  // namespace reeftex
