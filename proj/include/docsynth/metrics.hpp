#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include <json.hpp>

#include "docsynth/image.hpp"

namespace docsynth {

/// counts[g][p]: pixels with ground truth g predicted as p.
struct ConfusionCounts {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t total() const;
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(const LabelImage& pred, const LabelImage& truth);

struct ClassMetrics {
  double iou = 1.0;
  double precision = 1.0;
  double recall = 1.0;
};

/// Vacuous 0/0 ratios are reported as 1.0.
struct MetricsReport {
  std::array<ClassMetrics, kNumClasses> classes;
  double miou = 1.0;
};

MetricsReport report(const ConfusionCounts& counts);
/// Mean of the three class IoUs.
double mean_iou(const std::array<double, kNumClasses>& ious);

/// Micro-average: confusion counts summed over all pairs before the ratios are taken.
MetricsReport dataset_report(std::span<const LabelImage> predictions, std::span<const LabelImage> truths);

nlohmann::ordered_json report_to_json(const MetricsReport& r);
nlohmann::ordered_json confusion_to_json(const ConfusionCounts& c);
/// Aligned text table: mIoU, then IoU / Prec. / Recall per class.
std::string report_table(const MetricsReport& r);

}  // namespace docsynth
