#include "docsynth/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "docsynth/fusion.hpp"
#include "docsynth/hash.hpp"
#include "docsynth/parallel.hpp"
#include "docsynth/png_io.hpp"

namespace docsynth {

namespace {

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%06zu.png", prefix, i);
  return buf;
}

nlohmann::ordered_json config_json(const GenConfig& c) {
  return {{"printed_density", c.printed_density},
          {"handwriting_probability", c.handwriting_probability},
          {"feature_noise_sigma", c.feature_noise_sigma},
          {"background_texture_level", c.background_texture_level}};
}

GenConfig config_from(const nlohmann::json& j) {
  GenConfig c;
  c.printed_density = j.at("printed_density").get<double>();
  c.handwriting_probability = j.at("handwriting_probability").get<double>();
  c.feature_noise_sigma = j.at("feature_noise_sigma").get<double>();
  c.background_texture_level = j.at("background_texture_level").get<double>();
  return c;
}

}  // namespace

std::string_view to_string(PatchCategory c) {
  switch (c) {
    case PatchCategory::BackgroundOnly: return "background_only";
    case PatchCategory::PrintedOnly: return "printed_only";
    case PatchCategory::HandwritingContaining: return "handwriting_containing";
  }
  return "background_only";
}

PatchCategory parse_patch_category(std::string_view text) {
  if (text == "background_only") return PatchCategory::BackgroundOnly;
  if (text == "printed_only") return PatchCategory::PrintedOnly;
  if (text == "handwriting_containing") return PatchCategory::HandwritingContaining;
  fail_validation("unknown patch category '" + std::string(text) + "'");
}

PatchCategory categorize_patch(const LabelImage& labels, std::size_t min_class_pixels) {
  const auto counts = class_histogram(labels);
  if (counts[kHandwritten] >= min_class_pixels) return PatchCategory::HandwritingContaining;
  if (counts[kPrinted] >= min_class_pixels) return PatchCategory::PrintedOnly;
  return PatchCategory::BackgroundOnly;
}

std::size_t DatasetManifest::count(PatchCategory c) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [c](const auto& e) { return e.category == c; }));
}

std::string models_digest(std::span<const ClusterModel> models) {
  std::string all;
  for (const auto& m : models) all += cluster_model_to_json(m);
  return sha256_hex(all);
}

DatasetManifest synthesize_dataset(std::size_t n, GenSeed seed, const GenConfig& config,
                                   std::span<const ClusterModel> models, const ClusterCatalog& catalog,
                                   const std::filesystem::path& out_dir, const SynthesisOptions& options) {
  require(n >= 1, "dataset size must be >= 1");
  config.validate();
  const auto report = validate_catalog(catalog, models);
  if (!report.ok()) fail_validation("invalid catalog: " + report.summary());

  DatasetManifest manifest;
  manifest.directory = out_dir;
  manifest.header = ManifestHeader{seed.value, config, sha256_hex(catalog_to_json(catalog)), models_digest(models),
                                   options.min_class_pixels, "", -1.0};
  manifest.entries.resize(n);
  std::filesystem::create_directories(out_dir / "patches");
  std::filesystem::create_directories(out_dir / "labels");

  parallel_for(n, [&](std::size_t i) {
    const GenSeed s = derive_seed(seed, i);
    const auto patch = generate_patch(s, config);
    const auto maps = assign_catalog_layers(patch.features, models, catalog);
    const auto labels = fuse_labels(maps, catalog);
    const auto gray_png = encode_png(to_grayscale(patch.image));
    const auto label_png = encode_png(labels);
    ManifestEntry e;
    e.seed = s.value;
    e.patch_file = "patches/" + numbered("patch", i);
    e.label_file = "labels/" + numbered("label", i);
    e.category = categorize_patch(labels, options.min_class_pixels);
    e.patch_sha256 = sha256_hex(gray_png);
    e.label_sha256 = sha256_hex(label_png);
    write_bytes(out_dir / e.patch_file, gray_png);
    write_bytes(out_dir / e.label_file, label_png);
    manifest.entries[i] = std::move(e);
  });
  save_manifest(out_dir / "manifest.jsonl", manifest);
  return manifest;
}

DatasetManifest balance(const DatasetManifest& manifest, GenSeed seed, double background_fraction) {
  require(background_fraction >= 0.0 && background_fraction <= 1.0, "background_fraction must lie in [0,1]");
  std::vector<std::size_t> by_cat[3];
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    by_cat[static_cast<int>(manifest.entries[i].category)].push_back(i);
  auto& background = by_cat[static_cast<int>(PatchCategory::BackgroundOnly)];
  auto& printed = by_cat[static_cast<int>(PatchCategory::PrintedOnly)];
  auto& hand = by_cat[static_cast<int>(PatchCategory::HandwritingContaining)];
  if (printed.empty() || hand.empty())
    fail_validation("cannot balance: " + std::to_string(printed.size()) + " printed-only and " +
                    std::to_string(hand.size()) + " handwriting-containing entries; both must be non-empty");

  const std::size_t m = std::min(printed.size(), hand.size());
  const auto bg_wanted = static_cast<std::size_t>(std::llround(background_fraction * 2.0 * static_cast<double>(m)));
  const auto pick = [&](const std::vector<std::size_t>& from, std::size_t count, std::string_view tag) {
    auto rng = make_stream(seed, tag);
    std::vector<std::size_t> chosen;
    std::ranges::sample(from, std::back_inserter(chosen), static_cast<std::ptrdiff_t>(std::min(count, from.size())),
                        rng);
    return chosen;
  };
  std::vector<std::size_t> keep;
  for (const auto& part : {pick(hand, m, "balance.handwriting"), pick(printed, m, "balance.printed"),
                           pick(background, bg_wanted, "balance.background")})
    keep.insert(keep.end(), part.begin(), part.end());
  std::sort(keep.begin(), keep.end());

  DatasetManifest out;
  out.directory = manifest.directory;
  out.header = manifest.header;
  out.header.balanced_from = std::to_string(seed.value);
  out.header.background_fraction = background_fraction;
  out.entries.reserve(keep.size());
  for (const auto i : keep) out.entries.push_back(manifest.entries[i]);
  return out;
}

std::string manifest_to_jsonl(const DatasetManifest& manifest) {
  const auto& h = manifest.header;
  nlohmann::ordered_json header{{"type", "header"},
                                {"version", 1},
                                {"seed", h.seed},
                                {"generator", config_json(h.generator)},
                                {"catalog_sha256", h.catalog_sha256},
                                {"models_sha256", h.models_sha256},
                                {"min_class_pixels", h.min_class_pixels},
                                {"balanced_from", h.balanced_from},
                                {"background_fraction", h.background_fraction},
                                {"entries", manifest.entries.size()}};
  std::string out = header.dump() + "\n";
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json line{{"type", "entry"},           {"seed", e.seed},
                                {"patch", e.patch_file},     {"label", e.label_file},
                                {"category", to_string(e.category)}, {"patch_sha256", e.patch_sha256},
                                {"label_sha256", e.label_sha256}};
    out += line.dump() + "\n";
  }
  return out;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  write_file_atomic(path, manifest_to_jsonl(manifest));
}

DatasetManifest load_manifest(const std::filesystem::path& path, bool verify_files) {
  std::ifstream in(path);
  if (!in) fail_runtime("cannot open " + path.string());
  DatasetManifest m;
  m.directory = path.parent_path();
  std::string line;
  bool have_header = false;
  std::size_t expected = 0;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "header") {
        require(j.at("version").get<int>() == 1, "unsupported manifest version");
        m.header.seed = j.at("seed").get<std::uint64_t>();
        m.header.generator = config_from(j.at("generator"));
        m.header.catalog_sha256 = j.at("catalog_sha256").get<std::string>();
        m.header.models_sha256 = j.at("models_sha256").get<std::string>();
        m.header.min_class_pixels = j.at("min_class_pixels").get<std::size_t>();
        m.header.balanced_from = j.at("balanced_from").get<std::string>();
        m.header.background_fraction = j.at("background_fraction").get<double>();
        expected = j.at("entries").get<std::size_t>();
        have_header = true;
      } else if (type == "entry") {
        ManifestEntry e;
        e.seed = j.at("seed").get<std::uint64_t>();
        e.patch_file = j.at("patch").get<std::string>();
        e.label_file = j.at("label").get<std::string>();
        e.category = parse_patch_category(j.at("category").get<std::string>());
        e.patch_sha256 = j.at("patch_sha256").get<std::string>();
        e.label_sha256 = j.at("label_sha256").get<std::string>();
        m.entries.push_back(std::move(e));
      } else {
        fail_validation("unknown manifest record type '" + type + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail_validation("malformed manifest " + path.string() + ": " + e.what());
  }
  require(have_header, "manifest has no header record");
  require(expected == m.entries.size(), "manifest entry count does not match its header");
  if (verify_files) {
    for (const auto& e : m.entries) {
      if (sha256_file(m.directory / e.patch_file) != e.patch_sha256)
        fail_validation("hash mismatch for " + e.patch_file);
      if (sha256_file(m.directory / e.label_file) != e.label_sha256)
        fail_validation("hash mismatch for " + e.label_file);
      if (categorize_patch(read_label_png(m.directory / e.label_file), m.header.min_class_pixels) != e.category)
        fail_validation("category of " + e.label_file + " does not match its label contents");
    }
  }
  return m;
}

}  // namespace docsynth
