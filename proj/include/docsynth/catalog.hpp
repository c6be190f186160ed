#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docsynth/clustering.hpp"
#include "docsynth/image.hpp"

namespace docsynth {

enum class LayerRole { Structural, Semantic, Ignored };

/// Structural layers only distinguish Background and Text; semantic layers use the three label classes.
enum class ClusterClass { Background, Printed, Handwritten, Text };

std::string_view to_string(LayerRole role);
std::string_view to_string(ClusterClass cls);
LayerRole parse_layer_role(std::string_view text);
ClusterClass parse_cluster_class(std::string_view text);

struct LayerAnnotation {
  int layer_id = 0;
  int size = 0;
  LayerRole role = LayerRole::Ignored;
  std::map<int, ClusterClass> clusters;
  bool operator==(const LayerAnnotation&) const = default;
};

struct ClusterCatalog {
  std::vector<LayerAnnotation> layers;

  const LayerAnnotation* find(int layer_id) const;
  bool operator==(const ClusterCatalog&) const = default;
};

struct ValidationIssue {
  std::string code;  // missing-model, missing-assignment, out-of-range, role-violation, missing-role, duplicate-layer, size-mismatch
  int layer_id = -1;
  int cluster_id = -1;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  std::string summary() const;
};

ValidationReport validate_catalog(const ClusterCatalog& catalog, std::span<const ClusterModel> models);

/// Canonical JSON: layers ordered by id, clusters by id, fixed indentation.
std::string catalog_to_json(const ClusterCatalog& catalog);
ClusterCatalog catalog_from_json(std::string_view text);
void save_catalog(const std::filesystem::path& path, const ClusterCatalog& catalog);
ClusterCatalog load_catalog(const std::filesystem::path& path);

/// Role implied by layer size: 256 structural, 64/128 semantic, anything else ignored.
LayerRole default_role_for_size(int size);

/// Tints the pixels of `cluster_id` at 50% opacity; the assignment map is upsampled to the patch size.
RgbRaster render_overlay(const RgbRaster& patch, const AssignmentMap& assignment, int cluster_id,
                         Rgb tint = Rgb{1.0f, 0.0f, 1.0f});

}  // namespace docsynth
