#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "docsynth/image.hpp"
#include "docsynth/rng.hpp"

namespace docsynth {

inline constexpr int kPatchSize = 256;
inline constexpr int kFeatureChannels = 8;
inline constexpr int kFeatureLayerCount = 8;
/// Layer i has size kLayerSizes[i]: two layers per resolution, ascending.
inline constexpr int kLayerSizes[kFeatureLayerCount] = {32, 32, 64, 64, 128, 128, 256, 256};

/// Minimum gray-level gap between any ink pixel and the paper beneath it.
inline constexpr double kInkContrastMargin = 0.3;

struct GenConfig {
  double printed_density = 0.35;         // probability that a text row carries printed glyphs
  double handwriting_probability = 0.4;  // probability of one handwritten block per patch
  double feature_noise_sigma = 0.05;     // Gaussian noise added to every feature channel
  double background_texture_level = 0.5; // paper texture amplitude

  void validate() const;
  bool operator==(const GenConfig&) const = default;
};

/// One generator layer: channels x size x size values, channel-major then row-major.
struct FeatureLayer {
  int size = 0;
  int channels = 0;
  std::vector<float> values;

  float at(int channel, int y, int x) const {
    return values[(static_cast<std::size_t>(channel) * size + y) * size + x];
  }
  float& at(int channel, int y, int x) { return values[(static_cast<std::size_t>(channel) * size + y) * size + x]; }
  bool operator==(const FeatureLayer&) const = default;
};

/// Intermediate activations of the generator: eight layers, two per size in {32, 64, 128, 256}.
struct FeatureStack {
  std::vector<FeatureLayer> layers;

  void validate() const;
  bool operator==(const FeatureStack&) const = default;
};

struct GeneratedPatch {
  RgbRaster image;
  LabelImage labels;
  FeatureStack features;
};

struct GeneratedDocument {
  RgbRaster image;
  LabelImage labels;
};

GeneratedPatch generate_patch(GenSeed seed, const GenConfig& config);

/// Full page with printed paragraphs and optional handwritten notes. Both sides must be >= 256.
GeneratedDocument generate_document(GenSeed seed, const GenConfig& config, int height, int width);

/// Channel of semantic layer `layer_index` (a 64 or 128 layer) that carries the indicator of `label`.
int class_channel(int layer_index, Label label);

/// Text-dominant downsampling: a cell takes the text class with the most ink
/// pixels, falling back to background only when the cell holds no ink. Ties go to printed.
LabelImage downsample_labels(const LabelImage& labels, int target_size);

// Binary layout: "FSTK", u16 version, u16 layer count, then per layer u16 size,
// u16 channels and channels*size^2 little-endian float32 values.
std::vector<std::uint8_t> encode_feature_stack(const FeatureStack& stack);
FeatureStack decode_feature_stack(std::span<const std::uint8_t> bytes);
void write_feature_stack(const std::filesystem::path& path, const FeatureStack& stack);
FeatureStack read_feature_stack(const std::filesystem::path& path);

}  // namespace docsynth
