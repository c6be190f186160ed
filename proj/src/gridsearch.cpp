#include "docsynth/gridsearch.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "docsynth/parallel.hpp"

namespace docsynth {

std::size_t GridSpec::size() const {
  return overlap_factors.size() * min_confidences.size() * min_contour_areas.size();
}

void GridSpec::validate() const {
  require(size() > 0, "grid must have at least one value per axis");
  for (const double o : overlap_factors) InferenceParams{o, {}}.validate();
  for (const double c : min_confidences) PostprocessParams{c, 0}.validate();
  for (const int a : min_contour_areas) PostprocessParams{0.0, a}.validate();
  const auto sorted_unique = [](auto v) {
    return std::is_sorted(v.begin(), v.end()) && std::adjacent_find(v.begin(), v.end()) == v.end();
  };
  require(sorted_unique(overlap_factors) && sorted_unique(min_confidences) && sorted_unique(min_contour_areas),
          "grid axes must be strictly ascending");
}

GridSpec default_grid() { return {{0.0, 0.5}, {0.3, 0.7, 0.9}, {15, 30, 55}}; }

GridSearchResult grid_search_from_confidence(const std::vector<std::vector<ConfidenceMap>>& confidence_per_overlap,
                                             const std::vector<EvalDocument>& eval_set, const GridSpec& grid) {
  grid.validate();
  require(!eval_set.empty(), "grid search needs a non-empty evaluation set");
  require(confidence_per_overlap.size() == grid.overlap_factors.size(), "one prediction set per overlap factor");
  for (const auto& v : confidence_per_overlap) require(v.size() == eval_set.size(), "prediction count mismatch");

  std::vector<InferenceParams> points;
  points.reserve(grid.size());
  for (const double o : grid.overlap_factors)
    for (const double c : grid.min_confidences)
      for (const int a : grid.min_contour_areas) points.push_back({o, {c, a}});

  GridSearchResult result;
  result.table.resize(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    const std::size_t oi = i / (grid.min_confidences.size() * grid.min_contour_areas.size());
    ConfusionCounts total;
    for (std::size_t d = 0; d < eval_set.size(); ++d)
      total += confusion(postprocess(confidence_per_overlap[oi][d], points[i].post), eval_set[d].truth);
    result.table[i] = {points[i], report(total)};
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.table.size(); ++i)
    if (result.table[i].metrics.miou > result.table[best].metrics.miou) best = i;
  result.best = result.table[best].params;
  result.best_metrics = result.table[best].metrics;
  return result;
}

GridSearchResult grid_search(const SegModel& model, const std::vector<EvalDocument>& eval_set, const GridSpec& grid) {
  grid.validate();
  require(!eval_set.empty(), "grid search needs a non-empty evaluation set");
  std::vector<std::vector<ConfidenceMap>> conf(grid.overlap_factors.size());
  for (std::size_t o = 0; o < grid.overlap_factors.size(); ++o)
    for (const auto& doc : eval_set) conf[o].push_back(segment_confidence(model, doc.image, grid.overlap_factors[o]));
  return grid_search_from_confidence(conf, eval_set, grid);
}

MetricsReport evaluate_config(const SegModel& model, const std::vector<EvalDocument>& eval_set,
                              const InferenceParams& params) {
  require(!eval_set.empty(), "cannot evaluate an empty set");
  ConfusionCounts total;
  for (const auto& doc : eval_set) total += confusion(segment_document(model, doc.image, params), doc.truth);
  return report(total);
}

nlohmann::ordered_json grid_result_to_json(const GridSearchResult& r) {
  const auto params_json = [](const InferenceParams& p) {
    return nlohmann::ordered_json{{"overlap_factor", p.overlap_factor},
                                  {"min_confidence", p.post.min_confidence},
                                  {"min_contour_area", p.post.min_contour_area}};
  };
  nlohmann::ordered_json j;
  j["objective"] = "miou";
  j["best"] = params_json(r.best);
  j["best_metrics"] = report_to_json(r.best_metrics);
  j["results"] = nlohmann::ordered_json::array();
  for (const auto& row : r.table) {
    auto e = params_json(row.params);
    e["metrics"] = report_to_json(row.metrics);
    j["results"].push_back(std::move(e));
  }
  return j;
}

std::string grid_table(const GridSearchResult& r) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof line, "%-8s %-9s %-5s | %-6s | %-6s %-6s %-6s\n", "overlap", "min_conf", "area", "mIoU",
                "IoU_bg", "IoU_pr", "IoU_hw");
  out << line;
  for (const auto& row : r.table) {
    const auto& m = row.metrics;
    std::snprintf(line, sizeof line, "%-8.1f %-9.1f %-5d | %.3f  | %.3f  %.3f  %.3f%s\n", row.params.overlap_factor,
                  row.params.post.min_confidence, row.params.post.min_contour_area, m.miou, m.classes[0].iou,
                  m.classes[1].iou, m.classes[2].iou,
                  row.params.overlap_factor == r.best.overlap_factor &&
                          row.params.post.min_confidence == r.best.post.min_confidence &&
                          row.params.post.min_contour_area == r.best.post.min_contour_area
                      ? "  *"
                      : "");
    out << line;
  }
  return out.str();
}

}  // namespace docsynth
