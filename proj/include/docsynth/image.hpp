#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "docsynth/error.hpp"

namespace docsynth {

/// Dense row-major 2-D grid, top-left origin, y pointing down.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int height, int width, T fill = T{})
      : height_(height), width_(width), values_(checked_count(height, width), fill) {}
  Image(int height, int width, std::vector<T> values)
      : height_(height), width_(width), values_(std::move(values)) {
    require(values_.size() == checked_count(height, width), "image value count does not match dimensions");
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(int y, int x) { return values_[index(y, x)]; }
  const T& operator()(int y, int x) const { return values_[index(y, x)]; }

  std::span<T> pixels() noexcept { return values_; }
  std::span<const T> pixels() const noexcept { return values_; }
  std::span<T> row(int y) { return std::span<T>(values_).subspan(index(y, 0), width_); }
  std::span<const T> row(int y) const { return std::span<const T>(values_).subspan(index(y, 0), width_); }

  bool same_shape(const auto& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  bool operator==(const Image&) const = default;

 private:
  static std::size_t checked_count(int height, int width) {
    require(height >= 0 && width >= 0, "image dimensions must be nonnegative");
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> values_;
};

struct Rgb {
  float r = 0.0f;
  float g = 0.0f;
  float b = 0.0f;
  bool operator==(const Rgb&) const = default;
};

enum Label : std::uint8_t { kBackground = 0, kPrinted = 1, kHandwritten = 2 };
inline constexpr int kNumClasses = 3;

using Probabilities = std::array<float, kNumClasses>;

/// Grayscale intensities in [0,1].
using Raster = Image<float>;
/// Three channels per pixel, each in [0,1].
using RgbRaster = Image<Rgb>;
/// Per-pixel class id in {0 background, 1 printed, 2 handwritten}.
using LabelImage = Image<std::uint8_t>;
/// Per-pixel class probabilities; each 3-vector sums to 1.
using ConfidenceMap = Image<Probabilities>;

// Invariant checks; each throws a Validation error naming the first bad pixel.
void check_raster(const Raster& img);
void check_rgb(const RgbRaster& img);
void check_labels(const LabelImage& img);
void check_confidence(const ConfidenceMap& img, double tolerance = 1e-6);

/// ITU-R BT.601 luminance.
Raster to_grayscale(const RgbRaster& img);

/// Gray raster replicated into three channels.
RgbRaster to_rgb(const Raster& img);

/// Replicates every cell into a factor x factor block. Target must be an integer multiple of the source.
template <typename T>
Image<T> upsample_nearest(const Image<T>& img, int target_height, int target_width) {
  require(img.height() > 0 && img.width() > 0, "upsample_nearest: empty source");
  require(target_height % img.height() == 0 && target_width % img.width() == 0,
          "upsample_nearest: target size is not an integer multiple of the source size");
  const int fy = target_height / img.height();
  const int fx = target_width / img.width();
  require(fy >= 1 && fx >= 1, "upsample_nearest: target smaller than source");
  Image<T> out(target_height, target_width);
  for (int y = 0; y < target_height; ++y) {
    const auto src = img.row(y / fy);
    auto dst = out.row(y);
    for (int x = 0; x < target_width; ++x) dst[x] = src[x / fx];
  }
  return out;
}

template <typename T>
Image<T> upsample_nearest(const Image<T>& img, int target_size) {
  return upsample_nearest(img, target_size, target_size);
}

/// Block mean. Source must be an integer multiple of the target.
Raster downsample_box(const Raster& img, int target_height, int target_width);
inline Raster downsample_box(const Raster& img, int target_size) {
  return downsample_box(img, target_size, target_size);
}

/// Index into a reflected signal of length n (-1 -> 1, n -> n-2); any offset is folded back into range.
inline int reflect_index(int i, int n) noexcept {
  if (i >= 0 && i < n) return i;
  if (n <= 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Copy of `img` extended by `pad` reflected pixels on every side.
Raster reflect_pad(const Raster& img, int pad);

/// Crops [y0, y0+h) x [x0, x0+w); the region must lie inside the image.
template <typename T>
Image<T> crop(const Image<T>& img, int y0, int x0, int h, int w) {
  require(y0 >= 0 && x0 >= 0 && h >= 0 && w >= 0 && y0 + h <= img.height() && x0 + w <= img.width(),
          "crop region outside image");
  Image<T> out(h, w);
  for (int y = 0; y < h; ++y) {
    const auto src = img.row(y0 + y).subspan(x0, w);
    std::copy(src.begin(), src.end(), out.row(y).begin());
  }
  return out;
}

/// Per-class pixel counts.
std::array<std::size_t, kNumClasses> class_histogram(const LabelImage& labels);

}  // namespace docsynth
