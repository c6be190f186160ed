#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "docsynth/catalog.hpp"
#include "docsynth/clustering.hpp"
#include "docsynth/docgen.hpp"
#include "docsynth/image.hpp"

namespace docsynth {

enum class PatchCategory { BackgroundOnly, PrintedOnly, HandwritingContaining };

std::string_view to_string(PatchCategory c);
PatchCategory parse_patch_category(std::string_view text);

/// Mixed patches count as handwriting-containing.
PatchCategory categorize_patch(const LabelImage& labels, std::size_t min_class_pixels);

struct ManifestEntry {
  std::uint64_t seed = 0;
  std::string patch_file;  // relative to the manifest directory
  std::string label_file;
  PatchCategory category = PatchCategory::BackgroundOnly;
  std::string patch_sha256;
  std::string label_sha256;
  bool operator==(const ManifestEntry&) const = default;
};

struct ManifestHeader {
  std::uint64_t seed = 0;
  GenConfig generator;
  std::string catalog_sha256;
  std::string models_sha256;
  std::size_t min_class_pixels = 32;
  std::string balanced_from;  // provenance of a balanced manifest; empty for raw ones
  double background_fraction = -1.0;
  bool operator==(const ManifestHeader&) const = default;
};

struct DatasetManifest {
  ManifestHeader header;
  std::vector<ManifestEntry> entries;
  std::filesystem::path directory;  // base for relative file names, not serialised

  std::size_t count(PatchCategory c) const;
};

struct SynthesisOptions {
  std::size_t min_class_pixels = 32;
};

/// Generator -> assign -> fuse for `n` derived seeds. Writes gray patch and label
/// PNGs under `out_dir` plus `manifest.jsonl`.
DatasetManifest synthesize_dataset(std::size_t n, GenSeed seed, const GenConfig& config,
                                   std::span<const ClusterModel> models, const ClusterCatalog& catalog,
                                   const std::filesystem::path& out_dir, const SynthesisOptions& options = {});

/// Equal numbers of handwriting-containing and printed-only entries (the smaller
/// count of the two), plus round(background_fraction * 2m) background entries.
/// Selection is uniform and seeded; entries keep their input order.
DatasetManifest balance(const DatasetManifest& manifest, GenSeed seed, double background_fraction);

/// Hash of everything that determines the dataset content.
std::string models_digest(std::span<const ClusterModel> models);

std::string manifest_to_jsonl(const DatasetManifest& manifest);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// Parses and verifies every referenced file against its recorded hash.
DatasetManifest load_manifest(const std::filesystem::path& path, bool verify_files = true);

}  // namespace docsynth
