#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "docsynth/image.hpp"

namespace docsynth {

// 8-bit PNG persistence. Gray rasters store round(v * 255); label images store
// the raw class ids {0,1,2}.
std::vector<std::uint8_t> encode_png(const Raster& img);
std::vector<std::uint8_t> encode_png(const RgbRaster& img);
std::vector<std::uint8_t> encode_png(const LabelImage& labels);

void write_png(const std::filesystem::path& path, const Raster& img);
void write_png(const std::filesystem::path& path, const RgbRaster& img);
void write_png(const std::filesystem::path& path, const LabelImage& labels);

Raster read_gray_png(const std::filesystem::path& path);
RgbRaster read_rgb_png(const std::filesystem::path& path);
LabelImage read_label_png(const std::filesystem::path& path);

/// Rounds every value to the nearest 8-bit level, matching what a PNG round trip yields.
Raster quantize8(const Raster& img);
RgbRaster quantize8(const RgbRaster& img);

/// Visualization palette: black background, orange printed, blue handwritten.
RgbRaster colorize(const LabelImage& labels);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace docsynth
