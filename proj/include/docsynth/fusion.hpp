#pragma once

#include <span>
#include <vector>

#include "docsynth/catalog.hpp"
#include "docsynth/clustering.hpp"
#include "docsynth/image.hpp"

namespace docsynth {

/// Label synthesis from annotated cluster maps:
///  1. text mask = union over structural layers of pixels whose cluster is Text;
///  2. each semantic layer casts one vote per masked pixel (nearest upsampling), background votes dropped;
///  3. majority wins; a tie is settled by the votes of the highest-resolution semantic
///     layer that voted at all, and a remaining tie goes to printed;
///  4. masked pixels without votes and everything outside the mask stay background.
/// Maps of layers absent from the catalog (or marked ignored) are skipped.
LabelImage fuse_labels(std::span<const AssignmentMap> assignments, const ClusterCatalog& catalog);

/// Assignment maps of every non-ignored catalog layer for one feature stack.
std::vector<AssignmentMap> assign_catalog_layers(const FeatureStack& stack, std::span<const ClusterModel> models,
                                                 const ClusterCatalog& catalog);

/// Stand-in annotator for automated runs: every cluster takes the majority
/// ground-truth class of its member pixels (text-dominant downsampled truth for
/// layers below 256), roles follow layer size. `assignments[p]` holds the maps of patch p.
ClusterCatalog build_oracle_catalog(std::span<const std::vector<AssignmentMap>> assignments,
                                    std::span<const LabelImage> truths);

}  // namespace docsynth
