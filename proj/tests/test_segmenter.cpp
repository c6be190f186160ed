#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "docsynth/error.hpp"
#include "docsynth/segmenter.hpp"
#include "support.hpp"

using namespace docsynth;

namespace {

Batch random_batch(std::mt19937_64& rng, int dim, int n) {
  Batch b{dim, {}, {}};
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> c(0, 2);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < dim; ++t) b.x.push_back(g(rng));
    b.y.push_back(c(rng));
  }
  return b;
}

void gradient_check(int hidden) {
  std::mt19937_64 rng(hidden + 1);
  const int dim = 7;
  auto p = init_parameters(dim, hidden, GenSeed{3});
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& v : p.values) v += g(rng);
  const auto batch = random_batch(rng, dim, 6);
  std::vector<double> grad;
  batch_loss(p, batch, &grad);
  REQUIRE(grad.size() == p.count());
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.count(); ++i) {
    auto plus = p, minus = p;
    plus.values[i] += h;
    minus.values[i] -= h;
    const double numeric = (batch_loss(plus, batch, nullptr) - batch_loss(minus, batch, nullptr)) / (2 * h);
    CHECK(grad[i] == doctest::Approx(numeric).epsilon(1e-5).scale(1.0));
  }
}

SegModel small_model(int hidden, std::uint64_t seed) {
  return to_model(init_parameters(testing::small_spec().dim(), hidden, GenSeed{seed}), testing::small_spec());
}

}  // namespace

TEST_CASE("feature extractor matches a naive reflect-101 computation") {
  std::mt19937_64 rng(1);
  const auto img = testing::random_raster(rng, 20, 17);
  const auto spec = testing::small_spec();
  const FeatureExtractor fx(img, spec);
  std::vector<float> out(spec.dim());
  for (const auto [x, y] : {std::pair{0, 0}, {16, 19}, {8, 9}, {1, 18}, {15, 2}}) {
    fx.extract(x, y, out);
    std::size_t k = 0;
    double sum = 0, sq = 0;
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx) {
        const float v = img(reflect_index(y + dy, 20), reflect_index(x + dx, 17));
        CHECK(out[k++] == v);
        sum += v;
        sq += double(v) * v;
      }
    for (const int side : spec.box_sides) {
      double s = 0;
      for (int dy = -side / 2; dy <= side / 2; ++dy)
        for (int dx = -side / 2; dx <= side / 2; ++dx) s += img(reflect_index(y + dy, 20), reflect_index(x + dx, 17));
      CHECK(out[k++] == doctest::Approx(s / (side * side)).epsilon(1e-5));
    }
    CHECK(out[k] == doctest::Approx(sq / 25 - (sum / 25) * (sum / 25)).epsilon(1e-4).scale(1.0));
    CHECK(extract_features(img, x, y, spec) == out);
  }
  CHECK_THROWS_AS(fx.extract(17, 0, out), Error);
}

TEST_CASE("normalisation centres intensities and scales the variance") {
  std::vector<float> f = {0.5f, 1.0f, 0.0f, 0.25f};
  normalize_features(f);
  CHECK(f == std::vector<float>{0.0f, 0.5f, -0.5f, 1.0f});
}

TEST_CASE("analytic gradient matches finite differences for the linear model") { gradient_check(0); }

TEST_CASE("analytic gradient matches finite differences for the hidden-layer model") { gradient_check(4); }

TEST_CASE("loss of uniform logits is log 3") {
  Parameters p{3, 0, std::vector<double>(3 * 3 + 3, 0.0)};
  std::mt19937_64 rng(2);
  CHECK(batch_loss(p, random_batch(rng, 3, 5), nullptr) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("cosine learning rate anneals from eta0 to zero") {
  CHECK(cosine_learning_rate(0, 100, 0.01) == doctest::Approx(0.01));
  CHECK(cosine_learning_rate(50, 100, 0.01) == doctest::Approx(0.005));
  CHECK(cosine_learning_rate(100, 100, 0.01) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_learning_rate(25, 100, 1.0) == doctest::Approx(0.5 * (1 + std::cos(std::numbers::pi / 4))));
}

TEST_CASE("parameter and model layouts convert losslessly") {
  const auto p = init_parameters(testing::small_spec().dim(), 5, GenSeed{9});
  const auto m = to_model(p, testing::small_spec());
  CHECK_NOTHROW(m.validate());
  CHECK(m.w1.size() == static_cast<std::size_t>(testing::small_spec().dim()) * 5);
  const auto back = from_model(m);
  REQUIRE(back.count() == p.count());
  for (std::size_t i = 0; i < p.count(); ++i) CHECK(back.values[i] == doctest::Approx(p.values[i]).epsilon(1e-6));
}

TEST_CASE("model binary round trip is exact and rejects damaged input") {
  for (const int hidden : {0, 6}) {
    const auto m = small_model(hidden, 4);
    const auto bytes = encode_model(m);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SEGM");
    const auto d = decode_model(bytes);
    CHECK(d.features == m.features);
    CHECK(d.hidden == hidden);
    CHECK(d.w1 == m.w1);
    CHECK(d.b1 == m.b1);
    CHECK(d.w2 == m.w2);
    CHECK(d.b2 == m.b2);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_model(trailing), Error);
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_model(truncated), Error);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_model(magic), Error);
  }
}

TEST_CASE("saved models keep their training metadata") {
  auto m = small_model(3, 5);
  m.meta = TrainMeta{120, 0.05, 16, 77, 9, 0.42, {0.9, 0.42}};
  testing::TempDir dir("model");
  save_model(dir.path() / "m.bin", m);
  CHECK(std::filesystem::exists(dir.path() / "m.bin.json"));
  const auto back = load_model(dir.path() / "m.bin");
  CHECK(back.w1 == m.w1);
  CHECK(back.meta.iterations == 120);
  CHECK(back.meta.seed == 77u);
  CHECK(back.meta.final_loss == doctest::Approx(0.42));
}

TEST_CASE("fast patch prediction agrees with the reference feature path") {
  std::mt19937_64 rng(6);
  const auto img = testing::random_raster(rng, 256, 256);
  const auto m = small_model(8, 6);
  const auto conf = predict_patch(m, img);
  CHECK_NOTHROW(check_confidence(conf, 1e-5));
  const FeatureExtractor fx(img, m.features);
  std::vector<float> f(m.feature_dim());
  for (int k = 0; k < 200; ++k) {
    const int x = uniform_int(rng, 0, 255), y = uniform_int(rng, 0, 255);
    fx.extract(x, y, f);
    normalize_features(f);
    const auto ref = predict_features(m, f);
    for (int c = 0; c < kNumClasses; ++c) CHECK(conf(y, x)[c] == doctest::Approx(ref[c]).epsilon(1e-4).scale(1.0));
  }
  CHECK_THROWS_AS(predict_patch(m, Raster(128, 128)), Error);
}

TEST_CASE("training separates a toy intensity-coded dataset") {
  std::vector<TrainingPatch> patches;
  for (std::uint64_t s = 0; s < 4; ++s) patches.push_back(testing::toy_patch(s));
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.iterations = 500;
  cfg.seed = 3;
  cfg.pool_size = 4;
  cfg.features = testing::small_spec();
  cfg.hidden_width = 8;
  const auto model = train(patches, cfg, AugmentConfig::disabled());
  CHECK(model.meta.iterations == 500);
  CHECK(model.meta.window_losses.size() == 5u);
  CHECK(model.meta.window_losses.back() < model.meta.window_losses.front());
  const auto held = testing::toy_patch(99);
  const auto conf = predict_patch(model, held.image);
  std::size_t correct = 0;
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x) {
      const auto& p = conf(y, x);
      const int arg = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
      correct += arg == held.labels(y, x);
    }
  CHECK(static_cast<double>(correct) / (256.0 * 256.0) >= 0.99);
}

TEST_CASE("training is deterministic for a seed") {
  std::vector<TrainingPatch> patches = {testing::toy_patch(1), testing::toy_patch(2)};
  TrainConfig cfg;
  cfg.iterations = 40;
  cfg.seed = 11;
  cfg.pool_size = 2;
  cfg.features = testing::small_spec();
  const auto a = train(patches, cfg, AugmentConfig{});
  const auto b = train(patches, cfg, AugmentConfig{});
  CHECK(a.w1 == b.w1);
  CHECK(a.w2 == b.w2);
  CHECK(a.meta.final_loss == b.meta.final_loss);
  cfg.seed = 12;
  CHECK_FALSE(train(patches, cfg, AugmentConfig{}).w1 == a.w1);
}

TEST_CASE("invalid training configs are rejected") {
  TrainConfig cfg;
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.features.window = 4;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_THROWS_AS(train(std::span<const TrainingPatch>{}, TrainConfig{}, AugmentConfig{}), Error);
}
