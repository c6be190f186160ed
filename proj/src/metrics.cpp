#include "docsynth/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

namespace docsynth {

namespace {

constexpr std::array<const char*, kNumClasses> kClassNames{"background", "printed", "handwritten"};

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::uint64_t ConfusionCounts::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
  return t;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  for (int g = 0; g < kNumClasses; ++g)
    for (int p = 0; p < kNumClasses; ++p) counts[g][p] += other.counts[g][p];
  return *this;
}

ConfusionCounts confusion(const LabelImage& pred, const LabelImage& truth) {
  require(pred.same_shape(truth), "prediction and ground truth dimensions differ");
  check_labels(pred);
  check_labels(truth);
  ConfusionCounts c;
  const auto p = pred.pixels();
  const auto t = truth.pixels();
  for (std::size_t i = 0; i < p.size(); ++i) ++c.counts[t[i]][p[i]];
  return c;
}

double mean_iou(const std::array<double, kNumClasses>& ious) {
  return (ious[0] + ious[1] + ious[2]) / 3.0;
}

MetricsReport report(const ConfusionCounts& counts) {
  MetricsReport r;
  std::array<double, kNumClasses> ious{};
  for (int c = 0; c < kNumClasses; ++c) {
    const std::uint64_t tp = counts.counts[c][c];
    std::uint64_t fp = 0, fn = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += counts.counts[o][c];
      fn += counts.counts[c][o];
    }
    r.classes[c] = {ratio(tp, tp + fp + fn), ratio(tp, tp + fp), ratio(tp, tp + fn)};
    ious[c] = r.classes[c].iou;
  }
  r.miou = mean_iou(ious);
  return r;
}

MetricsReport dataset_report(std::span<const LabelImage> predictions, std::span<const LabelImage> truths) {
  require(predictions.size() == truths.size(), "prediction and ground truth counts differ");
  require(!predictions.empty(), "cannot evaluate an empty set");
  ConfusionCounts total;
  for (std::size_t i = 0; i < predictions.size(); ++i) total += confusion(predictions[i], truths[i]);
  return report(total);
}

nlohmann::ordered_json report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["miou"] = r.miou;
  for (int c = 0; c < kNumClasses; ++c)
    j["classes"][kClassNames[c]] = {
        {"iou", r.classes[c].iou}, {"precision", r.classes[c].precision}, {"recall", r.classes[c].recall}};
  j["convention"] = "0/0 ratios reported as 1.0";
  return j;
}

nlohmann::ordered_json confusion_to_json(const ConfusionCounts& c) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : c.counts) rows.push_back(row);
  return {{"rows", "ground truth"}, {"cols", "prediction"}, {"classes", kClassNames}, {"counts", rows}};
}

std::string report_table(const MetricsReport& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-7s | %-22s | %-22s | %-22s\n", "", "Background", "Printed", "Handwritten");
  out << line;
  std::snprintf(line, sizeof line, "%-7s | %-6s %-6s %-8s | %-6s %-6s %-8s | %-6s %-6s %-8s\n", "mIoU", "IoU", "Prec.",
                "Recall", "IoU", "Prec.", "Recall", "IoU", "Prec.", "Recall");
  out << line;
  out << fixed3(r.miou) << "  ";
  for (const auto& c : r.classes) {
    std::snprintf(line, sizeof line, " | %-6s %-6s %-8s", fixed3(c.iou).c_str(), fixed3(c.precision).c_str(),
                  fixed3(c.recall).c_str());
    out << line;
  }
  out << "\n";
  return out.str();
}

}  // namespace docsynth
