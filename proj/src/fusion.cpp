#include "docsynth/fusion.hpp"

#include <algorithm>
#include <array>

#include "docsynth/docgen.hpp"

namespace docsynth {

namespace {

struct Voter {
  const AssignmentMap* map;
  int factor;
  std::vector<std::uint8_t> table;  // cluster id -> label (structural: 1 = text)
};

std::uint8_t vote(const Voter& v, int y, int x) { return v.table[v.map->ids(y / v.factor, x / v.factor)]; }

std::uint8_t label_of(ClusterClass cls) {
  switch (cls) {
    case ClusterClass::Printed: return kPrinted;
    case ClusterClass::Handwritten: return kHandwritten;
    case ClusterClass::Text: return 1;
    default: return kBackground;
  }
}

}  // namespace

LabelImage fuse_labels(std::span<const AssignmentMap> assignments, const ClusterCatalog& catalog) {
  std::vector<Voter> structural, semantic;
  for (const auto& map : assignments) {
    const auto* ann = catalog.find(map.layer_id);
    if (ann == nullptr || ann->role == LayerRole::Ignored) continue;
    const int size = map.size();
    require(size > 0 && kPatchSize % size == 0, "assignment map size must divide 256");
    require(ann->size == 0 || ann->size == size,
            "layer " + std::to_string(map.layer_id) + " size differs from the catalog");
    std::vector<char> known(static_cast<std::size_t>(std::max(map.k, 0)), 0);
    for (const auto& entry : ann->clusters)
      if (entry.first >= 0 && entry.first < map.k) known[entry.first] = 1;
    for (const auto id : map.ids.pixels()) {
      if (id >= known.size() || !known[id])
        fail_validation("layer " + std::to_string(map.layer_id) + " cluster " + std::to_string(id) +
                        " has no catalog assignment");
    }
    for (const auto& [id, cls] : ann->clusters) {
      const bool ok = ann->role == LayerRole::Structural
                          ? (cls == ClusterClass::Background || cls == ClusterClass::Text)
                          : cls != ClusterClass::Text;
      if (!ok) fail_validation("layer " + std::to_string(map.layer_id) + " violates its role rules");
    }
    Voter v{&map, kPatchSize / size, std::vector<std::uint8_t>(known.size(), kBackground)};
    for (const auto& [id, cls] : ann->clusters)
      if (id >= 0 && id < map.k) v.table[id] = label_of(cls);
    (ann->role == LayerRole::Structural ? structural : semantic).push_back(std::move(v));
  }
  if (structural.empty()) fail_validation("fusion needs at least one structural layer");
  if (semantic.empty()) fail_validation("fusion needs at least one semantic layer");
  // Finest resolution first so the tie-break can stop at the first layer group that voted.
  std::stable_sort(semantic.begin(), semantic.end(), [](const Voter& a, const Voter& b) { return a.factor < b.factor; });

  LabelImage out(kPatchSize, kPatchSize, kBackground);
  for (int y = 0; y < kPatchSize; ++y) {
    for (int x = 0; x < kPatchSize; ++x) {
      const bool text =
          std::any_of(structural.begin(), structural.end(), [&](const Voter& v) { return vote(v, y, x) != 0; });
      if (!text) continue;
      std::array<int, kNumClasses> total{};
      std::array<int, kNumClasses> finest{};
      int finest_factor = 0;
      for (const auto& v : semantic) {
        const auto c = vote(v, y, x);
        if (c == kBackground) continue;
        ++total[c];
        if (finest_factor == 0) finest_factor = v.factor;
        if (v.factor == finest_factor) ++finest[c];
      }
      if (total[kPrinted] + total[kHandwritten] == 0) continue;
      std::uint8_t cls = kPrinted;
      if (total[kHandwritten] > total[kPrinted]) {
        cls = kHandwritten;
      } else if (total[kHandwritten] == total[kPrinted]) {
        cls = finest[kHandwritten] > finest[kPrinted] ? kHandwritten : kPrinted;
      }
      out(y, x) = cls;
    }
  }
  return out;
}

std::vector<AssignmentMap> assign_catalog_layers(const FeatureStack& stack, std::span<const ClusterModel> models,
                                                 const ClusterCatalog& catalog) {
  std::vector<AssignmentMap> maps;
  for (const auto& ann : catalog.layers) {
    if (ann.role == LayerRole::Ignored) continue;
    const auto model = std::find_if(models.begin(), models.end(),
                                    [&](const ClusterModel& m) { return m.layer_id == ann.layer_id; });
    require(model != models.end(), "no cluster model for layer " + std::to_string(ann.layer_id));
    require(ann.layer_id >= 0 && static_cast<std::size_t>(ann.layer_id) < stack.layers.size(),
            "catalog layer " + std::to_string(ann.layer_id) + " missing from the feature stack");
    maps.push_back(assign(*model, stack.layers[ann.layer_id]));
  }
  return maps;
}

ClusterCatalog build_oracle_catalog(std::span<const std::vector<AssignmentMap>> assignments,
                                    std::span<const LabelImage> truths) {
  require(!assignments.empty(), "oracle catalog needs at least one labelled patch");
  require(assignments.size() == truths.size(), "assignments and truths are not aligned");
  const auto& first = assignments.front();

  ClusterCatalog catalog;
  for (std::size_t l = 0; l < first.size(); ++l) {
    const int layer_id = first[l].layer_id;
    const int size = first[l].size();
    const int k = first[l].k;
    LayerAnnotation ann{layer_id, size, default_role_for_size(size), {}};
    if (ann.role != LayerRole::Ignored) {
      std::vector<std::array<std::size_t, kNumClasses>> votes(k, std::array<std::size_t, kNumClasses>{});
      for (std::size_t p = 0; p < assignments.size(); ++p) {
        require(assignments[p].size() == first.size(), "patches carry different layer sets");
        const auto& map = assignments[p][l];
        require(map.layer_id == layer_id && map.size() == size, "patches carry different layer sets");
        const LabelImage truth =
            size == truths[p].height() ? truths[p] : downsample_labels(truths[p], size);
        const auto ids = map.ids.pixels();
        const auto cls = truth.pixels();
        for (std::size_t i = 0; i < ids.size(); ++i) ++votes[ids[i]][cls[i]];
      }
      for (int id = 0; id < k; ++id) {
        const auto& v = votes[id];
        if (ann.role == LayerRole::Structural) {
          const bool text = v[kPrinted] + v[kHandwritten] > v[kBackground];
          ann.clusters[id] = text ? ClusterClass::Text : ClusterClass::Background;
        } else {
          // Strict > keeps the lowest class (background first) on ties.
          int best = 0;
          for (int c = 1; c < kNumClasses; ++c)
            if (v[c] > v[best]) best = c;
          ann.clusters[id] = best == kPrinted       ? ClusterClass::Printed
                             : best == kHandwritten ? ClusterClass::Handwritten
                                                    : ClusterClass::Background;
        }
      }
    }
    catalog.layers.push_back(std::move(ann));
  }
  return catalog;
}

}  // namespace docsynth
