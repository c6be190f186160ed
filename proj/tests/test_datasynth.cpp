#include <doctest.h>

#include <fstream>

#include "docsynth/datasynth.hpp"
#include "docsynth/error.hpp"
#include "docsynth/fusion.hpp"
#include "docsynth/png_io.hpp"
#include "support.hpp"

using namespace docsynth;

namespace {

DatasetManifest fake_manifest(int hand, int printed, int background) {
  DatasetManifest m;
  std::uint64_t seed = 0;
  const auto add = [&](int n, PatchCategory c) {
    for (int i = 0; i < n; ++i) m.entries.push_back({seed++, "p", "l", c, "", ""});
  };
  add(printed, PatchCategory::PrintedOnly);
  add(hand, PatchCategory::HandwritingContaining);
  add(background, PatchCategory::BackgroundOnly);
  return m;
}

struct Fixture {
  std::vector<ClusterModel> models;
  ClusterCatalog catalog;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    std::vector<FeatureStack> stacks;
    std::vector<std::vector<AssignmentMap>> maps;
    std::vector<LabelImage> truths;
    GenConfig cfg;
    for (std::uint64_t s = 0; s < 4; ++s) {
      auto p = generate_patch(GenSeed{500 + s}, cfg);
      truths.push_back(p.labels);
      stacks.push_back(std::move(p.features));
    }
    Fixture out;
    out.models = fit_layer_models(stacks, {6, 30, 1e-4, 1}, 4000, GenSeed{1});
    for (const auto& st : stacks) {
      std::vector<AssignmentMap> per;
      for (const auto& m : out.models) per.push_back(assign(m, st.layers[m.layer_id]));
      maps.push_back(std::move(per));
    }
    out.catalog = build_oracle_catalog(maps, truths);
    return out;
  }();
  return f;
}

}  // namespace

TEST_CASE("categorize uses the minimum class pixel count and prefers handwriting") {
  LabelImage l(16, 16, kBackground);
  CHECK(categorize_patch(l, 4) == PatchCategory::BackgroundOnly);
  for (int i = 0; i < 3; ++i) l(0, i) = kPrinted;
  CHECK(categorize_patch(l, 4) == PatchCategory::BackgroundOnly);
  l(0, 3) = kPrinted;
  CHECK(categorize_patch(l, 4) == PatchCategory::PrintedOnly);
  for (int i = 0; i < 4; ++i) l(1, i) = kHandwritten;
  CHECK(categorize_patch(l, 4) == PatchCategory::HandwritingContaining);
  CHECK(categorize_patch(l, 5) == PatchCategory::BackgroundOnly);
}

TEST_CASE("category names round trip") {
  for (auto c : {PatchCategory::BackgroundOnly, PatchCategory::PrintedOnly, PatchCategory::HandwritingContaining})
    CHECK(parse_patch_category(to_string(c)) == c);
  CHECK_THROWS_AS(parse_patch_category("mixed"), Error);
}

TEST_CASE("balance example: 70 printed, 30 handwriting, 50 background at 0.1") {
  const auto m = fake_manifest(30, 70, 50);
  const auto b = balance(m, GenSeed{3}, 0.1);
  CHECK(b.count(PatchCategory::HandwritingContaining) == 30u);
  CHECK(b.count(PatchCategory::PrintedOnly) == 30u);
  CHECK(b.count(PatchCategory::BackgroundOnly) == 6u);
  CHECK(b.entries.size() == 66u);
  for (std::size_t i = 1; i < b.entries.size(); ++i) CHECK(b.entries[i - 1].seed < b.entries[i].seed);
  CHECK(b.header.background_fraction == 0.1);
  CHECK_FALSE(b.header.balanced_from.empty());
  const auto again = balance(m, GenSeed{3}, 0.1);
  CHECK(again.entries == b.entries);
  CHECK_FALSE(balance(m, GenSeed{4}, 0.1).entries == b.entries);
}

TEST_CASE("balance takes every background entry when too few exist") {
  const auto b = balance(fake_manifest(40, 50, 3), GenSeed{1}, 0.5);
  CHECK(b.count(PatchCategory::BackgroundOnly) == 3u);
  CHECK(b.count(PatchCategory::PrintedOnly) == 40u);
}

TEST_CASE("balance needs both text categories and a valid fraction") {
  CHECK_THROWS_AS(balance(fake_manifest(0, 5, 5), GenSeed{1}, 0.1), Error);
  CHECK_THROWS_AS(balance(fake_manifest(5, 0, 5), GenSeed{1}, 0.1), Error);
  CHECK_THROWS_AS(balance(fake_manifest(5, 5, 5), GenSeed{1}, 1.5), Error);
}

TEST_CASE("balanced printed picks are uniform") {
  const auto m = fake_manifest(10, 40, 0);
  std::vector<int> hits(40, 0);
  constexpr int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    const auto b = balance(m, GenSeed{std::uint64_t(t)}, 0.0);
    for (const auto& e : b.entries)
      if (e.category == PatchCategory::PrintedOnly) ++hits[e.seed];
  }
  const double mean = trials * 0.25;
  const double sd = std::sqrt(trials * 0.25 * 0.75);
  for (const int h : hits) CHECK(std::abs(h - mean) <= 4 * sd);
}

TEST_CASE("synthesized labels equal fusion of the regenerated patch") {
  const auto& f = fixture();
  testing::TempDir dir("synth");
  const auto m = synthesize_dataset(5, GenSeed{9}, GenConfig{}, f.models, f.catalog, dir.path());
  REQUIRE(m.entries.size() == 5u);
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    CHECK(e.seed == derive_seed(GenSeed{9}, i).value);
    const auto patch = generate_patch(GenSeed{e.seed}, GenConfig{});
    const auto expected = fuse_labels(assign_catalog_layers(patch.features, f.models, f.catalog), f.catalog);
    CHECK(read_label_png(dir.path() / e.label_file) == expected);
    CHECK(read_gray_png(dir.path() / e.patch_file) == quantize8(to_grayscale(patch.image)));
    CHECK(e.category == categorize_patch(expected, 32));
  }
  const auto loaded = load_manifest(dir.path() / "manifest.jsonl");
  CHECK(loaded.entries == m.entries);
  CHECK(loaded.header == m.header);
  CHECK(loaded.header.models_sha256 == models_digest(f.models));
}

TEST_CASE("synthesis is deterministic and rejects invalid catalogs") {
  const auto& f = fixture();
  testing::TempDir a("synth_a"), b("synth_b");
  const auto ma = synthesize_dataset(3, GenSeed{2}, GenConfig{}, f.models, f.catalog, a.path());
  const auto mb = synthesize_dataset(3, GenSeed{2}, GenConfig{}, f.models, f.catalog, b.path());
  CHECK(ma.entries == mb.entries);
  auto broken = f.catalog;
  for (auto& l : broken.layers)
    if (l.role == LayerRole::Semantic) l.clusters.erase(0);
  CHECK_THROWS_AS(synthesize_dataset(1, GenSeed{2}, GenConfig{}, f.models, broken, a.path()), Error);
}

TEST_CASE("manifest loading verifies file hashes and entry counts") {
  const auto& f = fixture();
  testing::TempDir dir("manifest");
  const auto m = synthesize_dataset(2, GenSeed{4}, GenConfig{}, f.models, f.catalog, dir.path());
  const auto path = dir.path() / "manifest.jsonl";
  SUBCASE("tampered label") {
    auto labels = read_label_png(dir.path() / m.entries[0].label_file);
    labels(0, 0) = labels(0, 0) == kPrinted ? kHandwritten : kPrinted;
    write_png(dir.path() / m.entries[0].label_file, labels);
    CHECK_THROWS_AS(load_manifest(path), Error);
    CHECK_NOTHROW(load_manifest(path, false));
  }
  SUBCASE("truncated manifest") {
    auto text = manifest_to_jsonl(m);
    text.erase(text.rfind('\n', text.size() - 2) + 1);
    write_file_atomic(path, text);
    CHECK_THROWS_AS(load_manifest(path, false), Error);
  }
  SUBCASE("balanced manifest round trip") {
    auto b = m;
    b.entries[0].category = PatchCategory::PrintedOnly;
    b.entries[1].category = PatchCategory::HandwritingContaining;
    b.header.balanced_from = "7";
    b.header.background_fraction = 0.25;
    save_manifest(dir.path() / "other.jsonl", b);
    const auto back = load_manifest(dir.path() / "other.jsonl", false);
    CHECK(back.header == b.header);
    CHECK(back.entries == b.entries);
  }
}
