#pragma once

#include <vector>

#include "docsynth/image.hpp"
#include "docsynth/segmenter.hpp"

namespace docsynth {

inline constexpr int kInferencePatchSize = 256;

struct TilePatch {
  Raster patch;
  int x = 0;
  int y = 0;
};

/// Offsets along one axis: 0, stride, 2*stride, ... while the patch fits, plus a final
/// offset flush with the far edge.
std::vector<int> tile_offsets(int extent, int patch_size, double overlap_factor);

/// Documents smaller than the patch are reflect-padded up to it first.
std::vector<TilePatch> tile(const Raster& document, int patch_size, double overlap_factor);

struct PatchPrediction {
  ConfidenceMap confidence;
  int x = 0;
  int y = 0;
};

/// Per pixel, the covering patch with the largest max-class probability wins (earliest on ties)
/// and its full probability vector is copied. Patches may extend past the document.
ConfidenceMap reassemble(const std::vector<PatchPrediction>& predictions, int height, int width);

struct PostprocessParams {
  double min_confidence = 0.7;
  int min_contour_area = 50;

  void validate() const;
};

/// Argmax, confidence gate on text pixels, then per-class 8-connected components with
/// area < min_contour_area reset to background.
LabelImage postprocess(const ConfidenceMap& confidence, const PostprocessParams& params);

struct InferenceParams {
  double overlap_factor = 0.0;
  PostprocessParams post;

  void validate() const;
};

/// Tile, predict and reassemble; no post-processing.
ConfidenceMap segment_confidence(const SegModel& model, const Raster& gray, double overlap_factor);

LabelImage segment_document(const SegModel& model, const RgbRaster& document, const InferenceParams& params);
LabelImage segment_document(const SegModel& model, const Raster& gray, const InferenceParams& params);

}  // namespace docsynth
