#include "docsynth/augment.hpp"

#include <cmath>
#include <numbers>

namespace docsynth {

namespace {

constexpr float kFillIntensity = 1.0f;

float sample_bilinear(const Raster& img, double sx, double sy) {
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double tx = sx - x0;
  const double ty = sy - y0;
  const auto at = [&](int y, int x) -> double {
    if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return kFillIntensity;
    return img(y, x);
  };
  const double top = at(y0, x0) * (1 - tx) + (tx > 0 ? at(y0, x0 + 1) * tx : 0.0);
  if (ty == 0) return static_cast<float>(top);
  const double bottom = at(y0 + 1, x0) * (1 - tx) + (tx > 0 ? at(y0 + 1, x0 + 1) * tx : 0.0);
  return static_cast<float>(std::clamp(top * (1 - ty) + bottom * ty, 0.0, 1.0));
}

}  // namespace

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig c;
  c.op_probability = 0.0;
  c.inversion_probability = 0.0;
  return c;
}

void AugmentConfig::validate() const {
  const auto unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  require(unit(op_probability) && unit(inversion_probability), "augment probabilities must lie in [0,1]");
  require(max_rotation_deg >= 0 && max_shear >= 0 && max_shift_fraction >= 0 && max_distortion_px >= 0,
          "augment ranges must be nonnegative");
  require(min_crop_scale > 0 && min_crop_scale <= 1, "min_crop_scale must lie in (0,1]");
  require(distortion_grid >= 1, "distortion_grid must be >= 1");
  require(min_contrast > 0 && min_contrast <= max_contrast, "contrast range is invalid");
}

bool GeometricTransform::is_identity() const {
  return crop_scale == 1.0 && shear == 0.0 && rotation_rad == 0.0 && shift_x == 0.0 && shift_y == 0.0 && grid == 0;
}

std::pair<double, double> GeometricTransform::source_of(double x, double y, int height, int width) const {
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  double qx = (x - cx) * crop_scale;
  double qy = (y - cy) * crop_scale;
  qx += shear * qy;
  const double c = std::cos(rotation_rad), s = std::sin(rotation_rad);
  const double rx = c * qx - s * qy;
  const double ry = s * qx + c * qy;
  double sx = cx + rx + shift_x;
  double sy = cy + ry + shift_y;
  if (grid > 0) {
    const double gx = width > 1 ? x / (width - 1) * grid : 0.0;
    const double gy = height > 1 ? y / (height - 1) * grid : 0.0;
    const int ix = std::min(static_cast<int>(gx), grid - 1);
    const int iy = std::min(static_cast<int>(gy), grid - 1);
    const double tx = gx - ix, ty = gy - iy;
    const auto node = [&](const std::vector<double>& v, int r, int col) { return v[r * (grid + 1) + col]; };
    const auto interp = [&](const std::vector<double>& v) {
      return (node(v, iy, ix) * (1 - tx) + node(v, iy, ix + 1) * tx) * (1 - ty) +
             (node(v, iy + 1, ix) * (1 - tx) + node(v, iy + 1, ix + 1) * tx) * ty;
    };
    sx += interp(grid_dx);
    sy += interp(grid_dy);
  }
  return {sx, sy};
}

AugmentPlan sample_augmentation(GenSeed seed, const AugmentConfig& config, int height, int width) {
  config.validate();
  auto rng = make_stream(seed, "augment");
  AugmentPlan plan;
  auto& g = plan.geometry;
  const double p = config.op_probability;
  if (bernoulli(rng, p)) g.crop_scale = uniform(rng, config.min_crop_scale, 1.0);
  if (bernoulli(rng, p)) g.shear = uniform(rng, -config.max_shear, config.max_shear);
  if (bernoulli(rng, p)) {
    g.shift_x = uniform(rng, -config.max_shift_fraction, config.max_shift_fraction) * width;
    g.shift_y = uniform(rng, -config.max_shift_fraction, config.max_shift_fraction) * height;
  }
  if (bernoulli(rng, p)) {
    g.grid = config.distortion_grid;
    const std::size_t nodes = static_cast<std::size_t>(g.grid + 1) * (g.grid + 1);
    g.grid_dx.resize(nodes);
    g.grid_dy.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
      g.grid_dx[i] = uniform(rng, -config.max_distortion_px, config.max_distortion_px);
      g.grid_dy[i] = uniform(rng, -config.max_distortion_px, config.max_distortion_px);
    }
  }
  if (bernoulli(rng, p))
    g.rotation_rad = uniform(rng, -config.max_rotation_deg, config.max_rotation_deg) * std::numbers::pi / 180.0;
  if (bernoulli(rng, p)) plan.contrast_gain = uniform(rng, config.min_contrast, config.max_contrast);
  plan.invert = bernoulli(rng, config.inversion_probability);
  return plan;
}

std::pair<Raster, LabelImage> apply_geometry(const Raster& image, const LabelImage& labels,
                                             const GeometricTransform& transform) {
  require(image.same_shape(labels), "image and label dimensions differ");
  if (transform.is_identity()) return {image, labels};
  const int h = image.height(), w = image.width();
  Raster out_img(h, w);
  LabelImage out_lbl(h, w, kBackground);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto [sx, sy] = transform.source_of(x, y, h, w);
      out_img(y, x) = sample_bilinear(image, sx, sy);
      const long nx = std::lround(sx), ny = std::lround(sy);
      if (nx >= 0 && ny >= 0 && nx < w && ny < h) out_lbl(y, x) = labels(static_cast<int>(ny), static_cast<int>(nx));
    }
  }
  return {std::move(out_img), std::move(out_lbl)};
}

std::pair<Raster, LabelImage> apply_augmentation(const Raster& image, const LabelImage& labels,
                                                 const AugmentPlan& plan) {
  auto [img, lbl] = apply_geometry(image, labels, plan.geometry);
  if (plan.contrast_gain) {
    double mean = 0.0;
    for (const float v : img.pixels()) mean += v;
    mean /= std::max<std::size_t>(1, img.size());
    for (auto& v : img.pixels())
      v = static_cast<float>(std::clamp(mean + *plan.contrast_gain * (v - mean), 0.0, 1.0));
  }
  if (plan.invert)
    for (auto& v : img.pixels()) v = 1.0f - v;
  return {std::move(img), std::move(lbl)};
}

std::pair<Raster, LabelImage> augment(const Raster& image, const LabelImage& labels, GenSeed seed,
                                      const AugmentConfig& config) {
  require(image.same_shape(labels), "image and label dimensions differ");
  return apply_augmentation(image, labels, sample_augmentation(seed, config, image.height(), image.width()));
}

}  // namespace docsynth
