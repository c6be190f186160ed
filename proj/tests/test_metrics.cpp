#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "docsynth/error.hpp"
#include "docsynth/metrics.hpp"

using namespace docsynth;

namespace {

LabelImage from_rows(std::initializer_list<std::initializer_list<int>> rows) {
  LabelImage l(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
  int y = 0;
  for (const auto& r : rows) {
    int x = 0;
    for (const int v : r) l(y, x++) = static_cast<std::uint8_t>(v);
    ++y;
  }
  return l;
}

LabelImage random_labels(std::mt19937_64& rng, int h, int w) {
  LabelImage l(h, w);
  std::uniform_int_distribution<int> d(0, 2);
  for (auto& v : l.pixels()) v = static_cast<std::uint8_t>(d(rng));
  return l;
}

}  // namespace

TEST_CASE("confusion counts a hand-built 4x4 pair") {
  const auto truth = from_rows({{0, 0, 1, 1}, {0, 0, 1, 1}, {2, 2, 0, 0}, {2, 2, 0, 0}});
  const auto pred = from_rows({{0, 1, 1, 1}, {0, 0, 2, 1}, {2, 0, 0, 0}, {2, 2, 1, 0}});
  const auto c = confusion(pred, truth);
  CHECK(c.counts[0] == std::array<std::uint64_t, 3>{6, 2, 0});
  CHECK(c.counts[1] == std::array<std::uint64_t, 3>{0, 3, 1});
  CHECK(c.counts[2] == std::array<std::uint64_t, 3>{1, 0, 3});
  CHECK(c.total() == 16u);
  const auto r = report(c);
  CHECK(r.classes[0].iou == doctest::Approx(6.0 / 9.0));
  CHECK(r.classes[0].precision == doctest::Approx(6.0 / 7.0));
  CHECK(r.classes[0].recall == doctest::Approx(6.0 / 8.0));
  CHECK(r.classes[1].iou == doctest::Approx(3.0 / 6.0));
  CHECK(r.classes[2].iou == doctest::Approx(3.0 / 5.0));
  CHECK(r.miou == doctest::Approx((6.0 / 9.0 + 0.5 + 0.6) / 3.0));
}

TEST_CASE("identical maps give a diagonal matrix and perfect metrics") {
  std::mt19937_64 rng(1);
  const auto l = random_labels(rng, 20, 30);
  const auto c = confusion(l, l);
  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p)
      if (g != p) CHECK(c.counts[g][p] == 0u);
  const auto r = report(c);
  CHECK(r.miou == 1.0);
  for (const auto& m : r.classes) {
    CHECK(m.iou == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
  }
}

TEST_CASE("all-background prediction gives zero text IoU and full background recall") {
  const auto truth = from_rows({{0, 1}, {2, 0}});
  const auto r = report(confusion(LabelImage(2, 2, kBackground), truth));
  CHECK(r.classes[kPrinted].iou == 0.0);
  CHECK(r.classes[kHandwritten].iou == 0.0);
  CHECK(r.classes[kBackground].recall == 1.0);
  CHECK(r.classes[kBackground].precision == 0.5);
}

TEST_CASE("an absent class counts as perfect") {
  const auto l = from_rows({{0, 1}, {1, 0}});
  const auto r = report(confusion(l, l));
  CHECK(r.classes[kHandwritten].iou == 1.0);
  CHECK(r.classes[kHandwritten].precision == 1.0);
}

TEST_CASE("IoU never exceeds precision or recall and permutation changes nothing") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const auto truth = random_labels(rng, 16, 16);
    auto pred = random_labels(rng, 16, 16);
    const auto c = confusion(pred, truth);
    const auto r = report(c);
    for (const auto& m : r.classes) {
      CHECK(m.iou <= m.precision + 1e-15);
      CHECK(m.iou <= m.recall + 1e-15);
    }
    std::vector<std::size_t> perm(256);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    LabelImage tp(16, 16), pp(16, 16);
    for (std::size_t i = 0; i < 256; ++i) {
      tp.pixels()[i] = truth.pixels()[perm[i]];
      pp.pixels()[i] = pred.pixels()[perm[i]];
    }
    CHECK(confusion(pp, tp) == c);
  }
}

TEST_CASE("dataset metrics micro-average the confusion counts") {
  std::mt19937_64 rng(3);
  std::vector<LabelImage> preds, truths;
  ConfusionCounts sum;
  for (int i = 0; i < 4; ++i) {
    preds.push_back(random_labels(rng, 8 + i, 10));
    truths.push_back(random_labels(rng, 8 + i, 10));
    sum += confusion(preds.back(), truths.back());
  }
  const auto a = dataset_report(preds, truths);
  const auto b = report(sum);
  CHECK(a.miou == b.miou);
  for (int c = 0; c < 3; ++c) CHECK(a.classes[c].iou == b.classes[c].iou);
}

TEST_CASE("mismatched shapes are rejected") {
  CHECK_THROWS_AS(confusion(LabelImage(2, 2), LabelImage(2, 3)), Error);
  std::vector<LabelImage> one(1, LabelImage(2, 2));
  CHECK_THROWS_AS(dataset_report(one, {}), Error);
}

TEST_CASE("mean IoU reproduces the reference spot row") {
  CHECK(std::abs(mean_iou({0.995, 0.643, 0.326}) - 0.655) <= 5e-4);
}

TEST_CASE("report output carries every metric") {
  const auto l = from_rows({{0, 1}, {2, 0}});
  const auto r = report(confusion(l, l));
  const auto j = report_to_json(r);
  CHECK(j["miou"].get<double>() == 1.0);
  CHECK(j["classes"]["handwritten"]["recall"].get<double>() == 1.0);
  const auto table = report_table(r);
  CHECK(table.find("mIoU") != std::string::npos);
  CHECK(table.find("1.000") != std::string::npos);
  CHECK(confusion_to_json(confusion(l, l))["counts"][0][0].get<int>() == 2);
}
