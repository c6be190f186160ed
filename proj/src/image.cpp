#include "docsynth/image.hpp"

#include <cmath>
#include <string>

namespace docsynth {

namespace {

std::string where(std::size_t i, int width) {
  return "(" + std::to_string(i % static_cast<std::size_t>(width)) + ", " +
         std::to_string(i / static_cast<std::size_t>(width)) + ")";
}

bool unit_interval(float v) { return v >= 0.0f && v <= 1.0f; }

}  // namespace

void check_raster(const Raster& img) {
  const auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i)
    if (!unit_interval(px[i])) fail_validation("raster value outside [0,1] at " + where(i, img.width()));
}

void check_rgb(const RgbRaster& img) {
  const auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i)
    if (!unit_interval(px[i].r) || !unit_interval(px[i].g) || !unit_interval(px[i].b))
      fail_validation("rgb value outside [0,1] at " + where(i, img.width()));
}

void check_labels(const LabelImage& img) {
  const auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i)
    if (px[i] >= kNumClasses) fail_validation("label value outside {0,1,2} at " + where(i, img.width()));
}

void check_confidence(const ConfidenceMap& img, double tolerance) {
  const auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    double sum = 0.0;
    for (const float p : px[i]) {
      if (!(p >= 0.0f)) fail_validation("negative or non-finite probability at " + where(i, img.width()));
      sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance) fail_validation("probabilities do not sum to 1 at " + where(i, img.width()));
  }
}

Raster to_grayscale(const RgbRaster& img) {
  Raster out(img.height(), img.width());
  const auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double v = 0.299 * src[i].r + 0.587 * src[i].g + 0.114 * src[i].b;
    dst[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

RgbRaster to_rgb(const Raster& img) {
  RgbRaster out(img.height(), img.width());
  const auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = Rgb{src[i], src[i], src[i]};
  return out;
}

Raster downsample_box(const Raster& img, int target_height, int target_width) {
  require(target_height > 0 && target_width > 0, "downsample_box: empty target");
  require(img.height() % target_height == 0 && img.width() % target_width == 0,
          "downsample_box: source size is not an integer multiple of the target size");
  const int fy = img.height() / target_height;
  const int fx = img.width() / target_width;
  const double inv = 1.0 / (static_cast<double>(fy) * fx);
  Raster out(target_height, target_width);
  for (int ty = 0; ty < target_height; ++ty) {
    for (int tx = 0; tx < target_width; ++tx) {
      double sum = 0.0;
      for (int y = ty * fy; y < (ty + 1) * fy; ++y)
        for (int x = tx * fx; x < (tx + 1) * fx; ++x) sum += img(y, x);
      out(ty, tx) = static_cast<float>(std::clamp(sum * inv, 0.0, 1.0));
    }
  }
  return out;
}

Raster reflect_pad(const Raster& img, int pad) {
  require(pad >= 0, "reflect_pad: negative pad");
  Raster out(img.height() + 2 * pad, img.width() + 2 * pad);
  for (int y = 0; y < out.height(); ++y) {
    const auto src = img.row(reflect_index(y - pad, img.height()));
    auto dst = out.row(y);
    for (int x = 0; x < out.width(); ++x) dst[x] = src[reflect_index(x - pad, img.width())];
  }
  return out;
}

std::array<std::size_t, kNumClasses> class_histogram(const LabelImage& labels) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto v : labels.pixels())
    if (v < kNumClasses) ++counts[v];
  return counts;
}

}  // namespace docsynth
