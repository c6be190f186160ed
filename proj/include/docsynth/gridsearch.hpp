#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "docsynth/inference.hpp"
#include "docsynth/metrics.hpp"

namespace docsynth {

struct GridSpec {
  std::vector<double> overlap_factors;
  std::vector<double> min_confidences;
  std::vector<int> min_contour_areas;

  std::size_t size() const;
  void validate() const;
};

/// {0.0, 0.5} x {0.3, 0.7, 0.9} x {15, 30, 55}
GridSpec default_grid();

struct EvalDocument {
  Raster image;
  LabelImage truth;
};

struct GridResult {
  InferenceParams params;
  MetricsReport metrics;
};

struct GridSearchResult {
  InferenceParams best;
  MetricsReport best_metrics;
  std::vector<GridResult> table;  // overlap, confidence, area in ascending nesting order
};

/// Dataset-level mIoU for every grid point; predictions are computed once per overlap
/// factor and reused across the post-processing variants.
GridSearchResult grid_search(const SegModel& model, const std::vector<EvalDocument>& eval_set, const GridSpec& grid);

/// Same objective from precomputed confidence maps; one vector per overlap factor in grid order.
GridSearchResult grid_search_from_confidence(const std::vector<std::vector<ConfidenceMap>>& confidence_per_overlap,
                                             const std::vector<EvalDocument>& eval_set, const GridSpec& grid);

/// Runs the full pipeline for one configuration without caching.
MetricsReport evaluate_config(const SegModel& model, const std::vector<EvalDocument>& eval_set,
                              const InferenceParams& params);

nlohmann::ordered_json grid_result_to_json(const GridSearchResult& r);
std::string grid_table(const GridSearchResult& r);

}  // namespace docsynth
