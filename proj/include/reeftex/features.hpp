#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "clbp.hpp"
#include "color_descriptors.hpp"
#include "enhance.hpp"
#include "error.hpp"
#include "gabor.hpp"
#include "glcm.hpp"
#include "raster.hpp"

namespace reeftex {

enum class BlockKind { histogram, statistic };

struct FeatureBlock {
  std::string name;
  BlockKind kind = BlockKind::histogram;
  std::vector<double> values;
  friend bool operator==(const FeatureBlock&, const FeatureBlock&) = default;
};

struct BlockLayout {
  std::string name;
  BlockKind kind = BlockKind::histogram;
  std::size_t offset = 0;
  std::size_t length = 0;
  friend bool operator==(const BlockLayout&, const BlockLayout&) = default;
};

/// Concatenation of named descriptor blocks.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<FeatureBlock> blocks) : blocks_(std::move(blocks)) {}

  const std::vector<FeatureBlock>& blocks() const noexcept { return blocks_; }
  std::vector<FeatureBlock>& blocks() noexcept { return blocks_; }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.values.size();
    return n;
  }

  const FeatureBlock* find(std::string_view name) const {
    for (const auto& b : blocks_)
      if (b.name == name) return &b;
    return nullptr;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(size());
    for (const auto& b : blocks_) out.insert(out.end(), b.values.begin(), b.values.end());
    return out;
  }

  std::vector<BlockLayout> layout() const {
    std::vector<BlockLayout> out;
    std::size_t offset = 0;
    for (const auto& b : blocks_) {
      out.push_back({b.name, b.kind, offset, b.values.size()});
      offset += b.values.size();
    }
    return out;
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<FeatureBlock> blocks_;
};

inline const char* to_string(BlockKind k) { return k == BlockKind::histogram ? "histogram" : "statistic"; }

struct FeatureConfig {
  bool hue_enabled = true;
  int hue_bins = 36;
  bool opponent_enabled = true;
  int opponent_bins = 36;
  bool glcm_enabled = true;
  GlcmConfig glcm;
  bool clbp_enabled = true;
  ClbpConfig clbp;
  bool gabor_enabled = true;
  GaborConfig gabor;

  void validate() const {
    detail::require(hue_bins > 0 && opponent_bins > 0, "histogram bin counts must be positive");
    glcm.validate();
    clbp.validate();
    gabor.validate();
    detail::require(hue_enabled || opponent_enabled || glcm_enabled || clbp_enabled || gabor_enabled,
                    "at least one descriptor must be enabled");
  }

  /// Block layout every extracted vector will have.
  std::vector<BlockLayout> layout() const {
    std::vector<BlockLayout> out;
    std::size_t offset = 0;
    auto add = [&](const char* name, BlockKind kind, std::size_t len) {
      out.push_back({name, kind, offset, len});
      offset += len;
    };
    if (hue_enabled) add("hue", BlockKind::histogram, hue_bins);
    if (opponent_enabled) add("opponent", BlockKind::histogram, opponent_bins);
    if (glcm_enabled) add("glcm", BlockKind::statistic, glcm.offset_count() * kHaralickStatCount);
    if (clbp_enabled) add("clbp", BlockKind::histogram, clbp.histogram_length());
    if (gabor_enabled) add("gabor", BlockKind::statistic, 2 * gabor.filter_count());
    return out;
  }

  std::size_t length() const {
    std::size_t n = 0;
    for (const auto& b : layout()) n += b.length;
    return n;
  }
};

/// Descriptors of an already-enhanced image, in the fixed order hue,
/// opponent, glcm, clbp, gabor.
inline FeatureVector describe(const RasterImage& img, const FeatureConfig& cfg) {
  cfg.validate();
  std::vector<FeatureBlock> blocks;
  if (cfg.hue_enabled) blocks.push_back({"hue", BlockKind::histogram, hue_histogram(img, cfg.hue_bins)});
  if (cfg.opponent_enabled)
    blocks.push_back({"opponent", BlockKind::histogram, opponent_angle_histogram(img, cfg.opponent_bins)});
  if (cfg.glcm_enabled || cfg.clbp_enabled || cfg.gabor_enabled) {
    const auto gray = to_gray(img);
    if (cfg.glcm_enabled) blocks.push_back({"glcm", BlockKind::statistic, glcm_features(gray, cfg.glcm)});
    if (cfg.clbp_enabled) blocks.push_back({"clbp", BlockKind::histogram, clbp_histogram(gray, cfg.clbp)});
    if (cfg.gabor_enabled) blocks.push_back({"gabor", BlockKind::statistic, gabor_features(gray, cfg.gabor)});
  }
  for (const auto& b : blocks)
    for (double v : b.values)
      if (!std::isfinite(v)) throw InvariantError("non-finite value in feature block " + b.name);
  return FeatureVector(std::move(blocks));
}

/// Enhancement followed by every enabled descriptor.
inline FeatureVector extract(const RasterImage& img, const EnhanceConfig& enhance_cfg,
                             const FeatureConfig& feature_cfg) {
  return describe(enhance(img, enhance_cfg), feature_cfg);
}

}  // namespace reeftex
