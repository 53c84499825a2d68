#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "error.hpp"
#include "raster.hpp"

namespace reeftex {

struct ClbpConfig {
  int points = 8;
  double radius = 1.0;

  void validate() const {
    detail::require(points == 4 || points == 8 || points == 16, "CLBP points must be 4, 8 or 16");
    detail::require(radius > 0.0, "CLBP radius must be positive");
  }

  int riu2_values() const { return points + 2; }
  std::size_t histogram_length() const {
    return static_cast<std::size_t>(riu2_values()) * riu2_values() * 2;
  }
};

/// Rotation-invariant uniform mapping: codes with at most two circular 0/1
/// transitions map to their popcount, every other code to P + 1.
inline int riu2(std::uint32_t code, int points) {
  const std::uint32_t mask = points == 32 ? ~0u : ((1u << points) - 1u);
  code &= mask;
  const std::uint32_t rotated = ((code >> 1) | (code << (points - 1))) & mask;
  const int transitions = std::popcount(code ^ rotated);
  return transitions <= 2 ? std::popcount(code) : points + 1;
}

namespace detail {

struct NeighbourSample {
  int x0, y0;      // top-left corner of the interpolation cell (relative)
  double fx, fy;   // fractional position inside the cell
};

inline double snap(double v) {
  const double r = std::round(v);
  return std::fabs(v - r) < 1e-9 ? r : v;
}

inline std::vector<NeighbourSample> circle_samples(int points, double radius) {
  std::vector<NeighbourSample> out;
  for (int p = 0; p < points; ++p) {
    const double a = 2.0 * std::numbers::pi * p / points;
    const double dx = snap(radius * std::cos(a));
    const double dy = snap(-radius * std::sin(a));
    const int x0 = static_cast<int>(std::floor(dx));
    const int y0 = static_cast<int>(std::floor(dy));
    out.push_back({x0, y0, dx - x0, dy - y0});
  }
  return out;
}

/// Bilinear sample written as a + t(b - a) so a constant neighbourhood
/// reproduces its value exactly.
inline double sample(const PlaneF& g, int x, int y, const NeighbourSample& s) {
  const double a = g.at(x + s.x0, y + s.y0);
  if (s.fx == 0.0 && s.fy == 0.0) return a;
  const double b = s.fx == 0.0 ? a : g.at(x + s.x0 + 1, y + s.y0);
  const double top = a + s.fx * (b - a);
  if (s.fy == 0.0) return top;
  const double c = g.at(x + s.x0, y + s.y0 + 1);
  const double d = s.fx == 0.0 ? c : g.at(x + s.x0 + 1, y + s.y0 + 1);
  const double bot = c + s.fx * (d - c);
  return top + s.fy * (bot - top);
}

}  // namespace detail

/// Completed LBP joint histogram of (sign riu2, magnitude riu2, centre bit),
/// L1-normalized, indexed ((s * (P+2)) + m) * 2 + c.
///
/// Only pixels whose whole circle lies inside the plane are coded. The
/// magnitude threshold is the mean |g_p - g_c| over all coded pixels and
/// neighbours; the centre threshold is the mean of the whole plane. Ties
/// g_p == g_c set the sign bit.
inline std::vector<double> clbp_histogram(const PlaneF& gray, const ClbpConfig& cfg = {}) {
  cfg.validate();
  const int margin = static_cast<int>(std::ceil(cfg.radius - 1e-9));
  const int w = gray.width(), h = gray.height();
  if (w < 2 * margin + 1 || h < 2 * margin + 1)
    throw ValidationError("plane smaller than the CLBP neighbourhood");

  const int P = cfg.points;
  const auto samples = detail::circle_samples(P, cfg.radius);
  const int cw = w - 2 * margin, ch = h - 2 * margin;
  std::vector<double> diffs(static_cast<std::size_t>(cw) * ch * P);

  long double abs_sum = 0.0L;
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x) {
      const double gc = gray.at(x + margin, y + margin);
      double* d = &diffs[(static_cast<std::size_t>(y) * cw + x) * P];
      for (int p = 0; p < P; ++p) {
        d[p] = detail::sample(gray, x + margin, y + margin, samples[p]) - gc;
        abs_sum += std::fabs(d[p]);
      }
    }
  const double mag_threshold = static_cast<double>(abs_sum / static_cast<long double>(diffs.size()));

  long double grey_sum = 0.0L;
  for (double v : gray.values()) grey_sum += v;
  const double grey_mean = static_cast<double>(grey_sum / static_cast<long double>(gray.size()));

  const int V = cfg.riu2_values();
  std::vector<double> hist(cfg.histogram_length(), 0.0);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x) {
      const double* d = &diffs[(static_cast<std::size_t>(y) * cw + x) * P];
      std::uint32_t s_code = 0, m_code = 0;
      for (int p = 0; p < P; ++p) {
        if (d[p] >= 0.0) s_code |= 1u << p;
        if (std::fabs(d[p]) >= mag_threshold) m_code |= 1u << p;
      }
      const int c_bit = gray.at(x + margin, y + margin) >= grey_mean ? 1 : 0;
      hist[(static_cast<std::size_t>(riu2(s_code, P)) * V + riu2(m_code, P)) * 2 + c_bit] += 1.0;
    }
  const double n = static_cast<double>(cw) * ch;
  for (auto& v : hist) v /= n;
  return hist;
}

}  // namespace reeftex
