#include "docsynth/inference.hpp"

#include <algorithm>
#include <cmath>
#include <string>


namespace docsynth {

namespace {

void check_overlap(double overlap_factor) {
  require(std::isfinite(overlap_factor) && overlap_factor >= 0.0 && overlap_factor < 1.0,
          "overlap factor must be in [0, 1)");
}

float max_probability(const Probabilities& p) { return std::max({p[0], p[1], p[2]}); }

int argmax(const Probabilities& p) {
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c)
    if (p[c] > p[best]) best = c;
  return best;
}

}  // namespace

std::vector<int> tile_offsets(int extent, int patch_size, double overlap_factor) {
  check_overlap(overlap_factor);
  require(patch_size >= 1, "patch size must be >= 1");
  require(extent >= 1, "document extent must be >= 1");
  if (extent <= patch_size) return {0};
  const int stride = std::max(1, static_cast<int>(std::lround(patch_size * (1.0 - overlap_factor))));
  std::vector<int> offsets;
  for (int off = 0; off + patch_size <= extent; off += stride) offsets.push_back(off);
  if (offsets.back() + patch_size < extent) offsets.push_back(extent - patch_size);
  return offsets;
}

std::vector<TilePatch> tile(const Raster& document, int patch_size, double overlap_factor) {
  check_raster(document);
  const auto ys = tile_offsets(document.height(), patch_size, overlap_factor);
  const auto xs = tile_offsets(document.width(), patch_size, overlap_factor);
  std::vector<TilePatch> out;
  out.reserve(ys.size() * xs.size());
  for (const int y : ys) {
    for (const int x : xs) {
      Raster p(patch_size, patch_size);
      for (int r = 0; r < patch_size; ++r) {
        const int sy = reflect_index(y + r, document.height());
        for (int c = 0; c < patch_size; ++c) p(r, c) = document(sy, reflect_index(x + c, document.width()));
      }
      out.push_back({std::move(p), x, y});
    }
  }
  return out;
}

ConfidenceMap reassemble(const std::vector<PatchPrediction>& predictions, int height, int width) {
  require(height >= 1 && width >= 1, "document dimensions must be positive");
  ConfidenceMap out(height, width);
  Image<float> best(height, width, -1.0f);
  for (const auto& pred : predictions) {
    const auto& conf = pred.confidence;
    const int y0 = std::max(0, pred.y), y1 = std::min(height, pred.y + conf.height());
    const int x0 = std::max(0, pred.x), x1 = std::min(width, pred.x + conf.width());
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const auto& p = conf(y - pred.y, x - pred.x);
        const float m = max_probability(p);
        if (m > best(y, x)) {
          best(y, x) = m;
          out(y, x) = p;
        }
      }
    }
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (best(y, x) < 0.0f)
        fail_validation("pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") is not covered by any patch");
  return out;
}

void PostprocessParams::validate() const {
  require(std::isfinite(min_confidence) && min_confidence >= 0.0 && min_confidence <= 1.0,
          "min_confidence must be in [0, 1]");
  require(min_contour_area >= 0, "min_contour_area must be >= 0");
}

void InferenceParams::validate() const {
  check_overlap(overlap_factor);
  post.validate();
}

LabelImage postprocess(const ConfidenceMap& confidence, const PostprocessParams& params) {
  params.validate();
  require(!confidence.empty(), "cannot post-process an empty confidence map");
  const int h = confidence.height(), w = confidence.width();
  LabelImage labels(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto& p = confidence(y, x);
      const int c = argmax(p);
      labels(y, x) = static_cast<std::uint8_t>(c != kBackground && p[c] < params.min_confidence ? kBackground : c);
    }
  }
  if (params.min_contour_area <= 1) return labels;

  Image<std::uint8_t> seen(h, w, 0);
  std::vector<std::pair<int, int>> component, stack;
  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      const std::uint8_t cls = labels(sy, sx);
      if (cls == kBackground || seen(sy, sx)) continue;
      component.clear();
      stack.assign(1, {sy, sx});
      seen(sy, sx) = 1;
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        component.emplace_back(y, x);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= h || nx >= w || seen(ny, nx) || labels(ny, nx) != cls) continue;
            seen(ny, nx) = 1;
            stack.emplace_back(ny, nx);
          }
        }
      }
      if (static_cast<long>(component.size()) < params.min_contour_area)
        for (const auto& [y, x] : component) labels(y, x) = kBackground;
    }
  }
  return labels;
}

ConfidenceMap segment_confidence(const SegModel& model, const Raster& gray, double overlap_factor) {
  const auto tiles = tile(gray, kInferencePatchSize, overlap_factor);
  std::vector<PatchPrediction> preds(tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i)
    preds[i] = {predict_patch(model, tiles[i].patch), tiles[i].x, tiles[i].y};
  return reassemble(preds, gray.height(), gray.width());
}

LabelImage segment_document(const SegModel& model, const Raster& gray, const InferenceParams& params) {
  params.validate();
  return postprocess(segment_confidence(model, gray, params.overlap_factor), params.post);
}

LabelImage segment_document(const SegModel& model, const RgbRaster& document, const InferenceParams& params) {
  return segment_document(model, to_grayscale(document), params);
}

}  // namespace docsynth
