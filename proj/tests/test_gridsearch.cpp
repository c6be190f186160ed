#include <doctest.h>

#include <random>

#include "docsynth/error.hpp"
#include "docsynth/gridsearch.hpp"
#include "support.hpp"

using namespace docsynth;

namespace {

SegModel tiny_model(std::uint64_t seed) {
  return to_model(init_parameters(testing::small_spec().dim(), 4, GenSeed{seed}), testing::small_spec());
}

std::vector<EvalDocument> eval_docs() {
  std::vector<EvalDocument> docs;
  for (std::uint64_t s = 0; s < 2; ++s) {
    const auto t = testing::toy_patch(40 + s);
    Raster img(300, 280, 1.0f);
    LabelImage truth(300, 280, kBackground);
    for (int y = 0; y < 256; ++y)
      for (int x = 0; x < 256; ++x) {
        img(y + 20, x + 10) = t.image(y, x);
        truth(y + 20, x + 10) = t.labels(y, x);
      }
    docs.push_back({img, truth});
  }
  return docs;
}

}  // namespace

TEST_CASE("default grid has the 18 reference configurations") {
  const auto g = default_grid();
  CHECK(g.size() == 18u);
  CHECK(g.overlap_factors == std::vector<double>{0.0, 0.5});
  CHECK(g.min_confidences == std::vector<double>{0.3, 0.7, 0.9});
  CHECK(g.min_contour_areas == std::vector<int>{15, 30, 55});
  CHECK_NOTHROW(g.validate());
}

TEST_CASE("invalid grids are rejected") {
  GridSpec g = default_grid();
  g.min_confidences.clear();
  CHECK_THROWS_AS(g.validate(), Error);
  g = default_grid();
  g.overlap_factors = {0.5, 0.0};
  CHECK_THROWS_AS(g.validate(), Error);
  g = default_grid();
  g.overlap_factors = {1.0};
  CHECK_THROWS_AS(g.validate(), Error);
  g = default_grid();
  g.min_contour_areas = {-1};
  CHECK_THROWS_AS(g.validate(), Error);
  CHECK_THROWS_AS(grid_search(tiny_model(1), {}, default_grid()), Error);
}

TEST_CASE("cached grid search equals naive per-configuration evaluation") {
  const auto model = tiny_model(2);
  const auto docs = eval_docs();
  const auto r = grid_search(model, docs, default_grid());
  REQUIRE(r.table.size() == 18u);
  std::size_t i = 0;
  for (const double o : {0.0, 0.5})
    for (const double c : {0.3, 0.7, 0.9})
      for (const int a : {15, 30, 55}) {
        const auto& row = r.table[i++];
        CHECK(row.params.overlap_factor == o);
        CHECK(row.params.post.min_confidence == c);
        CHECK(row.params.post.min_contour_area == a);
        const auto naive = evaluate_config(model, docs, row.params);
        CHECK(row.metrics.miou == naive.miou);
        for (int k = 0; k < kNumClasses; ++k) CHECK(row.metrics.classes[k].iou == naive.classes[k].iou);
      }
  double best = -1;
  for (const auto& row : r.table) best = std::max(best, row.metrics.miou);
  CHECK(r.best_metrics.miou == best);
  CHECK(evaluate_config(model, docs, r.best).miou == r.best_metrics.miou);
}

TEST_CASE("single-point grid returns that point") {
  const GridSpec g{{0.5}, {0.7}, {50}};
  const auto r = grid_search(tiny_model(3), eval_docs(), g);
  REQUIRE(r.table.size() == 1u);
  CHECK(r.best.overlap_factor == 0.5);
  CHECK(r.best.post.min_confidence == 0.7);
  CHECK(r.best.post.min_contour_area == 50);
}

TEST_CASE("ties go to the lexicographically smallest configuration") {
  const auto docs = eval_docs();
  std::vector<std::vector<ConfidenceMap>> conf(2);
  for (auto& per : conf)
    for (const auto& d : docs) per.emplace_back(d.image.height(), d.image.width(), Probabilities{0.95f, 0.03f, 0.02f});
  const auto r = grid_search_from_confidence(conf, docs, default_grid());
  CHECK(r.best.overlap_factor == 0.0);
  CHECK(r.best.post.min_confidence == 0.3);
  CHECK(r.best.post.min_contour_area == 15);
}

TEST_CASE("grid results serialise every row") {
  const GridSpec g{{0.0}, {0.3, 0.7}, {15}};
  const auto r = grid_search(tiny_model(4), eval_docs(), g);
  const auto j = grid_result_to_json(r);
  CHECK(j["results"].size() == 2u);
  CHECK(j["objective"] == "miou");
  CHECK(grid_table(r).find("*") != std::string::npos);
}
