#include <doctest.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "docsynth/error.hpp"
#include "docsynth/server.hpp"
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

AnnotationData data(const std::filesystem::path& catalog) {
  AnnotationData d;
  d.models = {model(0, 2), model(1, 3)};
  for (int p = 0; p < 2; ++p) {
    d.patches.emplace_back(256, 256, Rgb{0.9f, 0.9f, 0.9f});
    AssignmentMap fine{0, 2, Image<std::uint16_t>(256, 256, 0)};
    AssignmentMap coarse{1, 3, Image<std::uint16_t>(64, 64, 0)};
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 64; ++x) coarse.ids(y, x) = 1;
    fine.ids(0, 0) = 1;
    d.maps.push_back({fine, coarse});
  }
  d.catalog_path = catalog;
  return d;
}

std::string valid_catalog() {
  ClusterCatalog c;
  c.layers.push_back({0, 256, LayerRole::Structural, {{0, ClusterClass::Background}, {1, ClusterClass::Text}}});
  c.layers.push_back({1, 64, LayerRole::Semantic,
                      {{0, ClusterClass::Background}, {1, ClusterClass::Printed}, {2, ClusterClass::Handwritten}}});
  return catalog_to_json(c);
}

struct Running {
  AnnotationServer server;
  int port;
  std::thread thread;

  explicit Running(AnnotationData d) : server(std::move(d)), port(server.bind("127.0.0.1", 0)) {
    thread = std::thread([this] { server.serve(); });
    server.wait_until_ready();
  }
  ~Running() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

}  // namespace

TEST_CASE("annotation API serves layers, clusters and images") {
  testing::TempDir dir("server");
  Running r(data(dir.path() / "catalog.json"));
  auto cli = r.client();

  auto res = cli.Get("/api/layers");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto j = nlohmann::json::parse(res->body);
  REQUIRE(j["layers"].size() == 2u);
  CHECK(j["layers"][0]["size"] == 256);
  CHECK(j["layers"][0]["role"] == "structural");
  CHECK(j["layers"][1]["role"] == "semantic");
  CHECK(j["layers"][1]["k"] == 3);
  CHECK(j["patches"] == 2);

  res = cli.Get("/api/layers/1/clusters");
  REQUIRE(res);
  j = nlohmann::json::parse(res->body);
  CHECK(j["clusters"][0]["pixels"] == 2 * 32 * 64);
  CHECK(j["clusters"][1]["pixels"] == 2 * 32 * 64);
  CHECK(j["clusters"][2]["pixels"] == 0);

  res = cli.Get("/api/layers/0/clusters/1/overlay?patch=1");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");
  CHECK(res->body.substr(1, 3) == "PNG");

  res = cli.Get("/api/patches/0");
  REQUIRE(res);
  CHECK(res->status == 200);

  CHECK(cli.Get("/api/patches/7")->status == 404);
  CHECK(cli.Get("/api/layers/5/clusters")->status == 404);
  CHECK(cli.Get("/api/layers/0/clusters/2/overlay")->status == 404);
  CHECK(cli.Get("/api/layers/0/clusters/0/overlay?patch=x")->status == 400);
}

TEST_CASE("catalog submission is validated before it is written") {
  testing::TempDir dir("server_catalog");
  const auto path = dir.path() / "catalog.json";
  Running r(data(path));
  auto cli = r.client();

  CHECK(cli.Get("/api/catalog")->status == 404);

  auto res = cli.Post("/api/catalog", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  auto incomplete = nlohmann::json::parse(valid_catalog());
  incomplete["layers"][1]["clusters"].erase(2);
  res = cli.Post("/api/catalog", incomplete.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);
  const auto j = nlohmann::json::parse(res->body);
  CHECK(j["valid"] == false);
  CHECK(j["issues"][0]["code"] == "missing-assignment");
  CHECK_FALSE(std::filesystem::exists(path));

  res = cli.Post("/api/catalog", valid_catalog(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(nlohmann::json::parse(res->body)["valid"] == true);
  REQUIRE(std::filesystem::exists(path));
  CHECK(load_catalog(path) == catalog_from_json(valid_catalog()));

  res = cli.Get("/api/catalog");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == valid_catalog());
}

TEST_CASE("server construction requires models and patches") {
  testing::TempDir dir("server_bad");
  auto d = data(dir.path() / "c.json");
  d.models.clear();
  CHECK_THROWS_AS(AnnotationServer{d}, Error);
  auto e = data(dir.path() / "c.json");
  e.maps.pop_back();
  CHECK_THROWS_AS(AnnotationServer{e}, Error);
}
