#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "docsynth/augment.hpp"
#include "docsynth/datasynth.hpp"
#include "docsynth/image.hpp"
#include "docsynth/rng.hpp"

namespace docsynth {

/// Per-pixel descriptor: raw window x window intensities (reflect-101 padded),
/// box means over three centred squares, and the variance of the window.
struct FeatureSpec {
  int window = 15;
  std::array<int, 3> box_sides{3, 9, 27};

  int dim() const { return window * window + 4; }
  int pad() const;
  void validate() const;
  bool operator==(const FeatureSpec&) const = default;
};

/// Precomputes the padded image and integral table once per image.
class FeatureExtractor {
 public:
  FeatureExtractor(const Raster& image, const FeatureSpec& spec);

  int height() const { return height_; }
  int width() const { return width_; }
  const FeatureSpec& spec() const { return spec_; }
  void extract(int x, int y, std::span<float> out) const;

 private:
  double box_sum(int x0, int y0, int x1, int y1) const;  // padded coords, inclusive

  FeatureSpec spec_;
  int height_ = 0;
  int width_ = 0;
  int pad_ = 0;
  Raster padded_;
  std::vector<double> integral_;  // (padded h + 1) x (padded w + 1)
};

std::vector<float> extract_features(const Raster& image, int x, int y, const FeatureSpec& spec = {});

/// Fixed affine map applied to raw features before the network: intensities are
/// centred on 0.5, the variance is scaled by 4.
void normalize_features(std::span<float> features);

struct TrainConfig {
  double learning_rate = 0.01;
  int iterations = 20000;
  int batch_size = 128;  // pixels per step: 8 pixels x 16 patches
  std::uint64_t seed = 0;
  int hidden_width = 32;  // 0 = linear softmax classifier
  int pool_size = 64;     // augmented patches held in memory
  int refresh_interval = 1;
  FeatureSpec features;

  void validate() const;
};

struct TrainMeta {
  int iterations = 0;
  double learning_rate = 0.0;
  int batch_size = 0;
  std::uint64_t seed = 0;
  std::size_t patches = 0;
  double final_loss = 0.0;             // mean loss over the last window
  std::vector<double> window_losses;   // mean batch loss per 100 iterations
};

struct SegModel {
  FeatureSpec features;
  int hidden = 0;
  // hidden > 0: w1 dim x hidden, b1 hidden, w2 hidden x 3, b2 3.
  // hidden == 0: w1 dim x 3, b1 3, w2/b2 empty.
  std::vector<float> w1, b1, w2, b2;
  TrainMeta meta;

  int feature_dim() const { return features.dim(); }
  void validate() const;
};

/// Cosine annealing to zero: eta_t = 0.5 * eta0 * (1 + cos(pi t / T)).
double cosine_learning_rate(int t, int total, double eta0);

/// Flattened double-precision parameters in SegModel layout order.
struct Parameters {
  int dim = 0;
  int hidden = 0;
  std::vector<double> values;

  std::size_t count() const { return values.size(); }
};

/// Normalised feature rows with their class targets.
struct Batch {
  int dim = 0;
  std::vector<double> x;
  std::vector<int> y;
  std::size_t size() const { return y.size(); }
};

Parameters init_parameters(int dim, int hidden, GenSeed seed);
/// Mean softmax cross-entropy; fills `gradient` (same layout) when non-null.
double batch_loss(const Parameters& params, const Batch& batch, std::vector<double>* gradient);
SegModel to_model(const Parameters& params, const FeatureSpec& spec, TrainMeta meta = {});
Parameters from_model(const SegModel& model);

/// In-memory training pair; gray image plus label map.
struct TrainingPatch {
  Raster image;
  LabelImage labels;
};

std::vector<TrainingPatch> load_training_patches(const DatasetManifest& manifest);

/// Mini-batch gradient descent on class-balanced pixels drawn from augmented patches.
SegModel train(std::span<const TrainingPatch> patches, const TrainConfig& config, const AugmentConfig& augment);
SegModel train(const DatasetManifest& manifest, const TrainConfig& config, const AugmentConfig& augment);

/// Softmax probabilities for every pixel of a 256 x 256 grayscale patch.
ConfidenceMap predict_patch(const SegModel& model, const Raster& image);

/// Probabilities for one normalised feature vector (double precision reference path).
Probabilities predict_features(const SegModel& model, std::span<const float> normalized);

// "SEGM", u16 version, u16 window, 3 x u16 box sides, u16 hidden, u16 classes,
// u32 feature dim, then w1, b1, w2, b2 as little-endian float32.
std::vector<std::uint8_t> encode_model(const SegModel& model);
SegModel decode_model(std::span<const std::uint8_t> bytes);
std::string model_metadata_json(const SegModel& model);
/// Writes `path` and a `.json` sidecar next to it.
void save_model(const std::filesystem::path& path, const SegModel& model);
SegModel load_model(const std::filesystem::path& path);

}  // namespace docsynth
