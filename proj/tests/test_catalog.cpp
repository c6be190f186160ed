#include <doctest.h>

#include <algorithm>

#include "docsynth/catalog.hpp"
#include "docsynth/error.hpp"
#include "support.hpp"

using namespace docsynth;

namespace {

ClusterModel model(int layer, int k) {
  ClusterModel m;
  m.layer_id = layer;
  m.k = k;
  m.dim = 1;
  m.centroids.assign(k, 1.0);
  return m;
}

ClusterCatalog valid_catalog() {
  ClusterCatalog c;
  c.layers.push_back({6, 256, LayerRole::Structural, {{0, ClusterClass::Background}, {1, ClusterClass::Text}}});
  c.layers.push_back({4, 128, LayerRole::Semantic,
                      {{0, ClusterClass::Background}, {1, ClusterClass::Printed}, {2, ClusterClass::Handwritten}}});
  c.layers.push_back({0, 32, LayerRole::Ignored, {}});
  return c;
}

std::vector<ClusterModel> models() { return {model(0, 3), model(4, 3), model(6, 2)}; }

bool has(const ValidationReport& r, const std::string& code, int layer = -2, int cluster = -2) {
  return std::any_of(r.issues.begin(), r.issues.end(), [&](const ValidationIssue& i) {
    return i.code == code && (layer == -2 || i.layer_id == layer) && (cluster == -2 || i.cluster_id == cluster);
  });
}

}  // namespace

TEST_CASE("default roles follow layer size") {
  CHECK(default_role_for_size(256) == LayerRole::Structural);
  CHECK(default_role_for_size(128) == LayerRole::Semantic);
  CHECK(default_role_for_size(64) == LayerRole::Semantic);
  CHECK(default_role_for_size(32) == LayerRole::Ignored);
}

TEST_CASE("role and class names round trip") {
  for (auto r : {LayerRole::Structural, LayerRole::Semantic, LayerRole::Ignored})
    CHECK(parse_layer_role(to_string(r)) == r);
  for (auto c : {ClusterClass::Background, ClusterClass::Printed, ClusterClass::Handwritten, ClusterClass::Text})
    CHECK(parse_cluster_class(to_string(c)) == c);
  CHECK_THROWS_AS(parse_layer_role("primary"), Error);
  CHECK_THROWS_AS(parse_cluster_class("ink"), Error);
}

TEST_CASE("a complete catalog validates") {
  const auto ms = models();
  const auto r = validate_catalog(valid_catalog(), ms);
  CHECK(r.ok());
  CHECK(r.summary().empty());
}

TEST_CASE("validation reports each kind of defect") {
  const auto ms = models();
  SUBCASE("missing assignment") {
    auto c = valid_catalog();
    c.layers[1].clusters.erase(2);
    CHECK(has(validate_catalog(c, ms), "missing-assignment", 4, 2));
  }
  SUBCASE("out of range") {
    auto c = valid_catalog();
    c.layers[0].clusters[5] = ClusterClass::Text;
    CHECK(has(validate_catalog(c, ms), "out-of-range", 6, 5));
  }
  SUBCASE("class on a structural layer") {
    auto c = valid_catalog();
    c.layers[0].clusters[1] = ClusterClass::Printed;
    CHECK(has(validate_catalog(c, ms), "role-violation", 6, 1));
  }
  SUBCASE("text on a semantic layer") {
    auto c = valid_catalog();
    c.layers[1].clusters[1] = ClusterClass::Text;
    CHECK(has(validate_catalog(c, ms), "role-violation", 4, 1));
  }
  SUBCASE("no structural layer") {
    auto c = valid_catalog();
    c.layers[0].role = LayerRole::Ignored;
    CHECK(has(validate_catalog(c, ms), "missing-role"));
  }
  SUBCASE("no semantic layer") {
    auto c = valid_catalog();
    c.layers[1].role = LayerRole::Ignored;
    CHECK(has(validate_catalog(c, ms), "missing-role"));
  }
  SUBCASE("unknown layer") {
    auto c = valid_catalog();
    c.layers.push_back({9, 256, LayerRole::Structural, {}});
    CHECK(has(validate_catalog(c, ms), "missing-model", 9));
  }
  SUBCASE("duplicate layer") {
    auto c = valid_catalog();
    c.layers.push_back(c.layers[0]);
    CHECK(has(validate_catalog(c, ms), "duplicate-layer", 6));
  }
}

TEST_CASE("catalog JSON is canonical and round trips") {
  auto c = valid_catalog();
  std::reverse(c.layers.begin(), c.layers.end());
  const auto text = catalog_to_json(c);
  const auto back = catalog_from_json(text);
  REQUIRE(back.layers.size() == 3u);
  CHECK(back.layers[0].layer_id == 0);
  CHECK(back.layers[2].layer_id == 6);
  CHECK(catalog_to_json(back) == text);
  CHECK(*back.find(4) == valid_catalog().layers[1]);
  CHECK(back.find(5) == nullptr);
  testing::TempDir dir("catalog");
  save_catalog(dir.path() / "catalog.json", c);
  CHECK(load_catalog(dir.path() / "catalog.json") == back);
}

TEST_CASE("malformed catalog JSON is a validation error") {
  const auto kind_of = [](const std::string& text) {
    try {
      catalog_from_json(text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Runtime;
  };
  CHECK(kind_of("{") == ErrorKind::Validation);
  CHECK(kind_of("{\"layers\": [{\"layer_id\": 1}]}") == ErrorKind::Validation);
  CHECK(kind_of(R"({"layers":[{"layer_id":1,"size":64,"role":"semantic","clusters":[{"id":0,"class":"printed"},{"id":0,"class":"printed"}]}]})") ==
        ErrorKind::Validation);
}

TEST_CASE("overlay tints only the selected cluster at half opacity") {
  RgbRaster patch(4, 4, Rgb{0.2f, 0.4f, 0.6f});
  AssignmentMap map{0, 2, Image<std::uint16_t>(2, 2, 0)};
  map.ids(1, 1) = 1;
  const auto out = render_overlay(patch, map, 1, Rgb{1.0f, 0.0f, 1.0f});
  CHECK(out(0, 0) == patch(0, 0));
  CHECK(out(3, 3).r == doctest::Approx(0.6f));
  CHECK(out(3, 3).g == doctest::Approx(0.2f));
  CHECK(out(2, 2).b == doctest::Approx(0.8f));
  CHECK(out(1, 2) == patch(1, 2));
  CHECK_THROWS_AS(render_overlay(patch, map, 2), Error);
}
