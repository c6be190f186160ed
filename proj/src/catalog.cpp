#include "docsynth/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "docsynth/png_io.hpp"

namespace docsynth {

std::string_view to_string(LayerRole role) {
  switch (role) {
    case LayerRole::Structural: return "structural";
    case LayerRole::Semantic: return "semantic";
    case LayerRole::Ignored: return "ignored";
  }
  return "ignored";
}

std::string_view to_string(ClusterClass cls) {
  switch (cls) {
    case ClusterClass::Background: return "background";
    case ClusterClass::Printed: return "printed";
    case ClusterClass::Handwritten: return "handwritten";
    case ClusterClass::Text: return "text";
  }
  return "background";
}

LayerRole parse_layer_role(std::string_view text) {
  if (text == "structural") return LayerRole::Structural;
  if (text == "semantic") return LayerRole::Semantic;
  if (text == "ignored") return LayerRole::Ignored;
  fail_validation("unknown layer role '" + std::string(text) + "'");
}

ClusterClass parse_cluster_class(std::string_view text) {
  if (text == "background") return ClusterClass::Background;
  if (text == "printed") return ClusterClass::Printed;
  if (text == "handwritten") return ClusterClass::Handwritten;
  if (text == "text") return ClusterClass::Text;
  fail_validation("unknown cluster class '" + std::string(text) + "'");
}

const LayerAnnotation* ClusterCatalog::find(int layer_id) const {
  const auto it = std::find_if(layers.begin(), layers.end(), [&](const auto& l) { return l.layer_id == layer_id; });
  return it == layers.end() ? nullptr : &*it;
}

std::string ValidationReport::summary() const {
  std::string out;
  for (const auto& i : issues) {
    if (!out.empty()) out += "; ";
    out += i.code + ": " + i.message;
  }
  return out;
}

LayerRole default_role_for_size(int size) {
  if (size == 256) return LayerRole::Structural;
  if (size == 64 || size == 128) return LayerRole::Semantic;
  return LayerRole::Ignored;
}

ValidationReport validate_catalog(const ClusterCatalog& catalog, std::span<const ClusterModel> models) {
  ValidationReport report;
  const auto add = [&](std::string code, int layer, int cluster, std::string message) {
    report.issues.push_back({std::move(code), layer, cluster, std::move(message)});
  };
  std::set<int> seen;
  bool structural = false, semantic = false;
  for (const auto& layer : catalog.layers) {
    const std::string tag = "layer " + std::to_string(layer.layer_id);
    if (!seen.insert(layer.layer_id).second) add("duplicate-layer", layer.layer_id, -1, tag + " listed twice");
    structural |= layer.role == LayerRole::Structural;
    semantic |= layer.role == LayerRole::Semantic;
    const auto model = std::find_if(models.begin(), models.end(),
                                    [&](const ClusterModel& m) { return m.layer_id == layer.layer_id; });
    if (model == models.end()) {
      add("missing-model", layer.layer_id, -1, tag + " has no cluster model");
      continue;
    }
    for (const auto& [id, cls] : layer.clusters) {
      if (id < 0 || id >= model->k)
        add("out-of-range", layer.layer_id, id,
            tag + " cluster " + std::to_string(id) + " outside [0, " + std::to_string(model->k) + ")");
      const bool text_only = cls == ClusterClass::Text;
      const bool class_only = cls == ClusterClass::Printed || cls == ClusterClass::Handwritten;
      if ((layer.role == LayerRole::Structural && class_only) || (layer.role == LayerRole::Semantic && text_only))
        add("role-violation", layer.layer_id, id,
            tag + " (" + std::string(to_string(layer.role)) + ") cannot label cluster " + std::to_string(id) + " as " +
                std::string(to_string(cls)));
    }
    if (layer.role == LayerRole::Ignored) continue;
    for (int id = 0; id < model->k; ++id)
      if (!layer.clusters.contains(id))
        add("missing-assignment", layer.layer_id, id, tag + " cluster " + std::to_string(id) + " is unassigned");
  }
  if (!structural) add("missing-role", -1, -1, "catalog needs at least one structural layer");
  if (!semantic) add("missing-role", -1, -1, "catalog needs at least one semantic layer");
  return report;
}

std::string catalog_to_json(const ClusterCatalog& catalog) {
  auto layers = catalog.layers;
  std::sort(layers.begin(), layers.end(), [](const auto& a, const auto& b) { return a.layer_id < b.layer_id; });
  auto arr = nlohmann::ordered_json::array();
  for (const auto& l : layers) {
    auto clusters = nlohmann::ordered_json::array();
    for (const auto& [id, cls] : l.clusters)
      clusters.push_back(nlohmann::ordered_json{{"id", id}, {"class", to_string(cls)}});
    arr.push_back(nlohmann::ordered_json{
        {"layer_id", l.layer_id}, {"size", l.size}, {"role", to_string(l.role)}, {"clusters", clusters}});
  }
  return nlohmann::ordered_json{{"layers", arr}}.dump(2) + "\n";
}

ClusterCatalog catalog_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ClusterCatalog catalog;
    for (const auto& l : j.at("layers")) {
      LayerAnnotation a;
      a.layer_id = l.at("layer_id").get<int>();
      a.size = l.at("size").get<int>();
      a.role = parse_layer_role(l.at("role").get<std::string>());
      for (const auto& c : l.at("clusters")) {
        const int id = c.at("id").get<int>();
        if (!a.clusters.emplace(id, parse_cluster_class(c.at("class").get<std::string>())).second)
          fail_validation("layer " + std::to_string(a.layer_id) + " assigns cluster " + std::to_string(id) + " twice");
      }
      catalog.layers.push_back(std::move(a));
    }
    return catalog;
  } catch (const nlohmann::json::exception& e) {
    fail_validation(std::string("malformed catalog: ") + e.what());
  }
}

void save_catalog(const std::filesystem::path& path, const ClusterCatalog& catalog) {
  write_file_atomic(path, catalog_to_json(catalog));
}

ClusterCatalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_runtime("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return catalog_from_json(ss.str());
}

RgbRaster render_overlay(const RgbRaster& patch, const AssignmentMap& assignment, int cluster_id, Rgb tint) {
  require(cluster_id >= 0 && cluster_id < assignment.k, "cluster id outside the model's range");
  const auto ids = upsample_nearest(assignment.ids, patch.height(), patch.width());
  RgbRaster out = patch;
  auto px = out.pixels();
  const auto src = ids.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (src[i] != cluster_id) continue;
    px[i] = Rgb{0.5f * px[i].r + 0.5f * tint.r, 0.5f * px[i].g + 0.5f * tint.g, 0.5f * px[i].b + 0.5f * tint.b};
  }
  return out;
}

}  // namespace docsynth
