#include "docsynth/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

namespace docsynth {

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::vector<std::uint8_t> encode(std::vector<std::uint8_t> pixels, int height, int width, png_uint_32 format) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = PNG_IMAGE_PNG_SIZE_MAX(image);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr))
    fail_runtime(std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> decode(const std::filesystem::path& path, png_uint_32 format, int& height, int& width) {
  const auto bytes = read_bytes(path);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    fail_runtime("png decode failed for " + path.string() + ": " + image.message);
  image.format = format;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    fail_runtime("png decode failed for " + path.string() + ": " + image.message);
  }
  height = static_cast<int>(image.height);
  width = static_cast<int>(image.width);
  return pixels;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& img) {
  std::vector<std::uint8_t> px(img.size());
  std::transform(img.pixels().begin(), img.pixels().end(), px.begin(), to_byte);
  return encode(std::move(px), img.height(), img.width(), PNG_FORMAT_GRAY);
}

std::vector<std::uint8_t> encode_png(const RgbRaster& img) {
  std::vector<std::uint8_t> px;
  px.reserve(3 * img.size());
  for (const auto& p : img.pixels()) {
    px.push_back(to_byte(p.r));
    px.push_back(to_byte(p.g));
    px.push_back(to_byte(p.b));
  }
  return encode(std::move(px), img.height(), img.width(), PNG_FORMAT_RGB);
}

std::vector<std::uint8_t> encode_png(const LabelImage& labels) {
  check_labels(labels);
  return encode(std::vector<std::uint8_t>(labels.pixels().begin(), labels.pixels().end()), labels.height(),
                labels.width(), PNG_FORMAT_GRAY);
}

void write_png(const std::filesystem::path& path, const Raster& img) { write_bytes(path, encode_png(img)); }
void write_png(const std::filesystem::path& path, const RgbRaster& img) { write_bytes(path, encode_png(img)); }
void write_png(const std::filesystem::path& path, const LabelImage& labels) {
  write_bytes(path, encode_png(labels));
}

Raster read_gray_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto px = decode(path, PNG_FORMAT_GRAY, h, w);
  Raster out(h, w);
  std::transform(px.begin(), px.end(), out.pixels().begin(),
                 [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
  return out;
}

RgbRaster read_rgb_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto px = decode(path, PNG_FORMAT_RGB, h, w);
  RgbRaster out(h, w);
  auto dst = out.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = Rgb{px[3 * i] / 255.0f, px[3 * i + 1] / 255.0f, px[3 * i + 2] / 255.0f};
  return out;
}

LabelImage read_label_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto px = decode(path, PNG_FORMAT_GRAY, h, w);
  LabelImage out(h, w, std::move(px));
  check_labels(out);
  return out;
}

Raster quantize8(const Raster& img) {
  Raster out = img;
  for (auto& v : out.pixels()) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

RgbRaster quantize8(const RgbRaster& img) {
  RgbRaster out = img;
  for (auto& p : out.pixels()) {
    p.r = static_cast<float>(to_byte(p.r)) / 255.0f;
    p.g = static_cast<float>(to_byte(p.g)) / 255.0f;
    p.b = static_cast<float>(to_byte(p.b)) / 255.0f;
  }
  return out;
}

RgbRaster colorize(const LabelImage& labels) {
  static constexpr Rgb kPalette[kNumClasses] = {
      {0.0f, 0.0f, 0.0f},
      {1.0f, 0.55f, 0.0f},
      {0.0f, 0.35f, 1.0f},
  };
  check_labels(labels);
  RgbRaster out(labels.height(), labels.width());
  std::transform(labels.pixels().begin(), labels.pixels().end(), out.pixels().begin(),
                 [](std::uint8_t v) { return kPalette[v]; });
  return out;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_runtime("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail_runtime("write failed for " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_runtime("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail_runtime("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail_runtime("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace docsynth
