#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "error.hpp"
#include "raster.hpp"

namespace reeftex {

struct GaborConfig {
  int scales = 4;
  int orientations = 6;
  int kernel_size = 15;         // odd
  double max_frequency = 0.25;  // cycles per pixel of the finest scale
  double scale_ratio = std::numbers::sqrt2;

  void validate() const {
    detail::require(scales > 0 && orientations > 0, "Gabor bank shape must be positive");
    detail::require(kernel_size >= 3 && kernel_size % 2 == 1, "Gabor kernel size must be odd and >= 3");
    detail::require(max_frequency > 0.0 && max_frequency <= 0.5, "Gabor max frequency must be in (0, 0.5]");
    detail::require(scale_ratio > 1.0, "Gabor scale ratio must exceed 1");
  }

  std::size_t filter_count() const { return static_cast<std::size_t>(scales) * orientations; }
};

struct GaborFilterSpec {
  double frequency;  // cycles per pixel
  double theta;      // radians
  double sigma;      // envelope std-dev, pixels
};

/// Log-spaced frequencies f_s = f_max / ratio^s, orientations o * pi / O,
/// one-octave envelopes (sigma = 0.56 / f). Scale-major order.
inline std::vector<GaborFilterSpec> gabor_bank(const GaborConfig& cfg) {
  cfg.validate();
  std::vector<GaborFilterSpec> bank;
  for (int s = 0; s < cfg.scales; ++s) {
    const double f = cfg.max_frequency / std::pow(cfg.scale_ratio, s);
    for (int o = 0; o < cfg.orientations; ++o)
      bank.push_back({f, std::numbers::pi * o / cfg.orientations, 0.56 / f});
  }
  return bank;
}

using GaborKernel = std::vector<std::complex<double>>;  // size x size, row-major, (u, v) from -r..r

/// Explicit 2-D kernel: envelope-normalized complex Gabor minus its mean.
inline GaborKernel make_gabor_kernel(const GaborFilterSpec& spec, int size) {
  const int r = size / 2;
  GaborKernel k(static_cast<std::size_t>(size) * size);
  double z = 0.0;
  for (int v = -r; v <= r; ++v)
    for (int u = -r; u <= r; ++u) z += std::exp(-(u * u + v * v) / (2.0 * spec.sigma * spec.sigma));
  std::complex<double> mean = 0.0;
  for (int v = -r; v <= r; ++v)
    for (int u = -r; u <= r; ++u) {
      const double env = std::exp(-(u * u + v * v) / (2.0 * spec.sigma * spec.sigma)) / z;
      const double phase =
          2.0 * std::numbers::pi * spec.frequency * (u * std::cos(spec.theta) + v * std::sin(spec.theta));
      const auto val = env * std::polar(1.0, phase);
      k[static_cast<std::size_t>(v + r) * size + (u + r)] = val;
      mean += val;
    }
  mean /= static_cast<double>(k.size());
  for (auto& c : k) c -= mean;
  return k;
}

/// Reflect-101 index (dcb|abcd|cba).
inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

/// Row-wise box sums over padded rows, shared by every filter of one size.
inline std::vector<double> gabor_box_rows(const PlaneF& gray, int size) {
  const int r = size / 2;
  const int w = gray.width(), h = gray.height();
  const int hp = h + 2 * r;
  std::vector<double> boxes(static_cast<std::size_t>(hp) * w);
  for (int yp = 0; yp < hp; ++yp) {
    const int y = reflect101(yp - r, h);
    for (int x = 0; x < w; ++x) {
      double box = 0.0;
      for (int u = -r; u <= r; ++u) box += gray.at(reflect101(x + u, w), y);
      boxes[static_cast<std::size_t>(yp) * w + x] = box;
    }
  }
  return boxes;
}

/// Response magnitude |sum_{u,v} k(u,v) I(x+u, y+v)| with reflect-101
/// padding.
///
/// The envelope-times-carrier part of the kernel factors into a row filter
/// a(u) and a column filter b(v); the mean correction is a box sum. Both are
/// applied separably, which equals the explicit 2-D kernel up to rounding.
inline PlaneF gabor_magnitude(const PlaneF& gray, const GaborFilterSpec& spec, int size,
                              const std::vector<double>* box_rows = nullptr) {
  const int r = size / 2;
  const int w = gray.width(), h = gray.height();
  if (size > w || size > h) throw ValidationError("Gabor kernel larger than the image");

  std::vector<std::complex<double>> a(size), b(size);
  std::complex<double> sum_a = 0.0, sum_b = 0.0;
  double z_row = 0.0;
  for (int t = -r; t <= r; ++t) {
    const double env = std::exp(-(t * t) / (2.0 * spec.sigma * spec.sigma));
    z_row += env;
    a[t + r] = env * std::polar(1.0, 2.0 * std::numbers::pi * spec.frequency * t * std::cos(spec.theta));
    b[t + r] = env * std::polar(1.0, 2.0 * std::numbers::pi * spec.frequency * t * std::sin(spec.theta));
    sum_a += a[t + r];
    sum_b += b[t + r];
  }
  const double z = z_row * z_row;
  const std::complex<double> mean = sum_a * sum_b / (z * static_cast<double>(size) * size);

  // Horizontal pass over padded rows: rows index y_pad in [0, h + 2r).
  const int hp = h + 2 * r;
  std::vector<std::complex<double>> horiz(static_cast<std::size_t>(hp) * w);
  for (int yp = 0; yp < hp; ++yp) {
    const int y = reflect101(yp - r, h);
    for (int x = 0; x < w; ++x) {
      std::complex<double> acc = 0.0;
      for (int u = -r; u <= r; ++u) acc += a[u + r] * gray.at(reflect101(x + u, w), y);
      horiz[static_cast<std::size_t>(yp) * w + x] = acc;
    }
  }
  std::vector<double> local_box;
  if (!box_rows) local_box = gabor_box_rows(gray, size);
  const std::vector<double>& boxes = box_rows ? *box_rows : local_box;

  PlaneF out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::complex<double> acc = 0.0;
      double box = 0.0;
      for (int v = -r; v <= r; ++v) {
        const std::size_t idx = static_cast<std::size_t>(y + v + r) * w + x;
        acc += b[v + r] * horiz[idx];
        box += boxes[idx];
      }
      out.at(x, y) = std::abs(acc / z - mean * box);
    }
  return out;
}

/// Mean and standard deviation of each filter's response magnitude,
/// interleaved (mean_0, std_0, mean_1, ...), filters in gabor_bank order.
inline std::vector<double> gabor_features(const PlaneF& gray, const GaborConfig& cfg = {}) {
  cfg.validate();
  if (cfg.kernel_size > gray.width() || cfg.kernel_size > gray.height())
    throw ValidationError("Gabor kernel larger than the image");
  const auto boxes = gabor_box_rows(gray, cfg.kernel_size);
  std::vector<double> out;
  out.reserve(2 * cfg.filter_count());
  for (const auto& spec : gabor_bank(cfg)) {
    const auto mag = gabor_magnitude(gray, spec, cfg.kernel_size, &boxes);
    double sum = 0.0, sq = 0.0;
    for (double m : mag.values()) {
      sum += m;
      sq += m * m;
    }
    const double n = static_cast<double>(mag.size());
    const double mean = sum / n;
    out.push_back(mean);
    out.push_back(std::sqrt(std::max(0.0, sq / n - mean * mean)));
  }
  return out;
}

}  // namespace reeftex
