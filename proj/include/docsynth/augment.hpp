#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "docsynth/image.hpp"
#include "docsynth/rng.hpp"

namespace docsynth {

struct AugmentConfig {
  double op_probability = 0.5;  // crop, shear, shift, distortion, rotation, contrast each
  double inversion_probability = 0.2;
  double max_rotation_deg = 10.0;
  double max_shear = 0.1;
  double max_shift_fraction = 0.08;
  double min_crop_scale = 0.85;
  int distortion_grid = 4;
  double max_distortion_px = 3.0;
  double min_contrast = 0.7;
  double max_contrast = 1.3;

  /// All probabilities zero.
  static AugmentConfig disabled();
  void validate() const;
};

/// Output-to-source mapping shared by image and label: around the image centre,
/// q -> rotate(shear(crop_scale * q)) + shift, plus an interpolated displacement grid.
struct GeometricTransform {
  double crop_scale = 1.0;
  double shear = 0.0;
  double rotation_rad = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
  int grid = 0;                  // displacement grid has (grid+1)^2 nodes; 0 = none
  std::vector<double> grid_dx;
  std::vector<double> grid_dy;

  bool is_identity() const;
  /// Source coordinate sampled by output pixel (x, y).
  std::pair<double, double> source_of(double x, double y, int height, int width) const;
};

struct AugmentPlan {
  GeometricTransform geometry;
  std::optional<double> contrast_gain;
  bool invert = false;
};

AugmentPlan sample_augmentation(GenSeed seed, const AugmentConfig& config, int height, int width);

/// Image bilinear, labels nearest; pixels mapped from outside the canvas become 1.0 / background.
std::pair<Raster, LabelImage> apply_geometry(const Raster& image, const LabelImage& labels,
                                             const GeometricTransform& transform);

std::pair<Raster, LabelImage> apply_augmentation(const Raster& image, const LabelImage& labels,
                                                 const AugmentPlan& plan);

std::pair<Raster, LabelImage> augment(const Raster& image, const LabelImage& labels, GenSeed seed,
                                      const AugmentConfig& config);

}  // namespace docsynth
