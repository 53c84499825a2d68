#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "error.hpp"
#include "raster.hpp"

namespace reeftex {

// PNG/JPEG codecs come from OpenCV's imgcodecs; only the byte shuffling to
// and from RasterImage lives here.

inline RasterImage from_bgr_mat(const cv::Mat& bgr) {
  RasterImage img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) img.set_pixel(x, y, row[x][2], row[x][1], row[x][0]);
  }
  return img;
}

inline cv::Mat to_bgr_mat(const RasterImage& img) {
  cv::Mat bgr(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width(); ++x)
      row[x] = cv::Vec3b(img.at(x, y, 2), img.at(x, y, 1), img.at(x, y, 0));
  }
  return bgr;
}

/// Decodes a PNG or JPEG file to 8-bit RGB. Grayscale files are replicated
/// across the three channels; alpha is dropped.
inline RasterImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw IoError("cannot read image: " + path.string());
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw IoError("cannot decode image: " + path.string() + " (" + e.what() + ")");
  }
  if (bgr.empty() || bgr.type() != CV_8UC3) throw IoError("cannot decode image: " + path.string());
  return from_bgr_mat(bgr);
}

inline void save_png(const std::filesystem::path& path, const RasterImage& img) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), to_bgr_mat(img), {cv::IMWRITE_PNG_COMPRESSION, 6});
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok) throw IoError("cannot write PNG: " + path.string());
}

inline bool is_image_file(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Side-by-side panel strip with a 2 px white gutter, used by the previews.
inline RasterImage contact_sheet(const std::vector<RasterImage>& panels) {
  detail::require(!panels.empty(), "contact sheet needs at least one panel");
  constexpr int gutter = 2;
  int width = 0, height = 0;
  for (const auto& p : panels) {
    width += p.width();
    height = std::max(height, p.height());
  }
  width += gutter * static_cast<int>(panels.size() - 1);
  RasterImage sheet(width, height, 255);
  int x0 = 0;
  for (const auto& p : panels) {
    for (int y = 0; y < p.height(); ++y)
      for (int x = 0; x < p.width(); ++x)
        for (int c = 0; c < 3; ++c) sheet.at(x0 + x, y, c) = p.at(x, y, c);
    x0 += p.width() + gutter;
  }
  return sheet;
}

}  // namespace reeftex
