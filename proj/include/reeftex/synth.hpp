#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "error.hpp"
#include "image_io.hpp"
#include "parallel.hpp"
#include "raster.hpp"
#include "rng.hpp"

namespace reeftex {

// Synthetic texture collections with a given class schema, for smoke runs
// and tests when the real image sets are not available. Each class has its
// own colour, grating orientation and frequency, blob density and noise
// level; each image draws its own phase and small parameter jitter.

struct SynthOptions {
  int size = 64;
  std::uint64_t seed = 7;
  double jitter = 0.5;   // relative per-image parameter jitter
  double noise = 40.0;   // pixel noise amplitude in intensity steps
};

struct SynthClassStyle {
  double r, g, b;
  double angle;
  double frequency;
  double blob_rate;
  double contrast;
};

inline SynthClassStyle synth_class_style(std::uint64_t seed, int class_index) {
  RandomStream rng{seed, 0x73747966ULL, static_cast<std::uint64_t>(class_index)};
  const double hue = rng.uniform();
  const auto rgb = hsv_to_rgb_real({hue * 360.0, rng.uniform(0.35, 0.85), rng.uniform(0.45, 0.9)});
  return {rgb[0] / 255.0,
          rgb[1] / 255.0,
          rgb[2] / 255.0,
          rng.uniform(0.0, std::numbers::pi),
          rng.uniform(0.04, 0.3),
          rng.uniform(0.0, 0.004),
          rng.uniform(0.2, 0.6)};
}

inline RasterImage synth_image(const SynthOptions& o, int class_index, int image_index) {
  const auto style = synth_class_style(o.seed, class_index);
  RandomStream rng{o.seed, static_cast<std::uint64_t>(class_index), static_cast<std::uint64_t>(image_index)};
  auto jit = [&](double v) { return v * (1.0 + o.jitter * rng.uniform(-1.0, 1.0)); };
  const double angle = style.angle + o.jitter * rng.uniform(-0.5, 0.5);
  const double freq = jit(style.frequency);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double contrast = jit(style.contrast);
  const double gain = jit(1.0);
  const int blobs = static_cast<int>(std::lround(style.blob_rate * o.size * o.size));
  std::vector<std::array<double, 3>> centres(static_cast<std::size_t>(blobs));
  for (auto& c : centres) c = {rng.uniform(0.0, o.size), rng.uniform(0.0, o.size), rng.uniform(1.5, 5.0)};

  const double ca = std::cos(angle), sa = std::sin(angle);
  RasterImage img(o.size, o.size);
  for (int y = 0; y < o.size; ++y)
    for (int x = 0; x < o.size; ++x) {
      double t = std::sin(2.0 * std::numbers::pi * freq * (x * ca + y * sa) + phase);
      double blob = 0.0;
      for (const auto& c : centres) {
        const double dx = x - c[0], dy = y - c[1];
        blob += std::exp(-(dx * dx + dy * dy) / (2.0 * c[2] * c[2]));
      }
      const double shade = gain * (1.0 - contrast + contrast * t) * (1.0 - 0.4 * std::min(blob, 1.0));
      const double rgb[3] = {style.r, style.g, style.b};
      for (int ch = 0; ch < 3; ++ch)
        img.at(x, y, ch) = clamp_to_byte(255.0 * rgb[ch] * shade + o.noise * rng.uniform(-1.0, 1.0));
    }
  return img;
}

/// Writes root/<class label>/img_NNNN.png for every class of the schema and
/// returns the number of images written.
inline std::size_t write_synthetic_dataset(const std::filesystem::path& root, const ClassSchema& schema,
                                           const SynthOptions& o, unsigned threads = 1) {
  detail::require(o.size >= 8, "synthetic image size must be at least 8");
  namespace fs = std::filesystem;
  std::vector<std::pair<int, int>> jobs;
  for (std::size_t c = 0; c < schema.classes.size(); ++c) {
    std::error_code ec;
    fs::create_directories(root / schema.classes[c].label, ec);
    if (ec) throw IoError("cannot create " + (root / schema.classes[c].label).string() + ": " + ec.message());
    for (int i = 0; i < schema.classes[c].count; ++i) jobs.emplace_back(static_cast<int>(c), i);
  }
  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const auto [c, i] = jobs[j];
    char name[32];
    std::snprintf(name, sizeof name, "img_%04d.png", i);
    save_png(root / schema.classes[static_cast<std::size_t>(c)].label / name, synth_image(o, c, i));
  });
  return jobs.size();
}

}  // namespace reeftex
