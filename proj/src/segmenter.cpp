#include "docsynth/segmenter.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "docsynth/parallel.hpp"
#include "docsynth/png_io.hpp"

namespace docsynth {

namespace {

constexpr int kLossWindow = 100;

// softmax in double, written back as float probabilities.
Probabilities softmax3(const double logits[kNumClasses]) {
  const double m = std::max({logits[0], logits[1], logits[2]});
  double e[kNumClasses];
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    e[c] = std::exp(logits[c] - m);
    sum += e[c];
  }
  return {static_cast<float>(e[0] / sum), static_cast<float>(e[1] / sum), static_cast<float>(e[2] / sum)};
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

struct ByteReader {
  std::span<const std::uint8_t> b;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > b.size()) fail_validation("truncated model file");
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(b[pos] | (b[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::vector<float> floats(std::size_t n) {
    std::vector<float> out(n);
    for (auto& f : out) f = std::bit_cast<float>(u32());
    return out;
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// features

int FeatureSpec::pad() const {
  return std::max(window / 2, *std::max_element(box_sides.begin(), box_sides.end()) / 2);
}

void FeatureSpec::validate() const {
  require(window >= 1 && window % 2 == 1, "feature window must be a positive odd size");
  for (const int s : box_sides) require(s >= 1 && s % 2 == 1, "box sides must be positive and odd");
}

FeatureExtractor::FeatureExtractor(const Raster& image, const FeatureSpec& spec)
    : spec_(spec), height_(image.height()), width_(image.width()), pad_(spec.pad()) {
  spec_.validate();
  require(!image.empty(), "cannot extract features from an empty image");
  padded_ = reflect_pad(image, pad_);
  const int ph = padded_.height(), pw = padded_.width();
  integral_.assign(static_cast<std::size_t>(ph + 1) * (pw + 1), 0.0);
  for (int y = 0; y < ph; ++y) {
    double row = 0.0;
    for (int x = 0; x < pw; ++x) {
      row += padded_(y, x);
      integral_[static_cast<std::size_t>(y + 1) * (pw + 1) + x + 1] =
          integral_[static_cast<std::size_t>(y) * (pw + 1) + x + 1] + row;
    }
  }
}

double FeatureExtractor::box_sum(int x0, int y0, int x1, int y1) const {
  const std::size_t stride = static_cast<std::size_t>(padded_.width()) + 1;
  return integral_[(y1 + 1) * stride + x1 + 1] - integral_[y0 * stride + x1 + 1] - integral_[(y1 + 1) * stride + x0] +
         integral_[y0 * stride + x0];
}

void FeatureExtractor::extract(int x, int y, std::span<float> out) const {
  require(x >= 0 && y >= 0 && x < width_ && y < height_, "feature pixel out of bounds");
  require(static_cast<int>(out.size()) == spec_.dim(), "feature buffer has the wrong size");
  const int r = spec_.window / 2;
  const int px = x + pad_, py = y + pad_;
  double sum = 0.0, sq = 0.0;
  std::size_t k = 0;
  for (int dy = -r; dy <= r; ++dy) {
    const auto row = padded_.row(py + dy);
    for (int dx = -r; dx <= r; ++dx) {
      const float v = row[px + dx];
      out[k++] = v;
      sum += v;
      sq += static_cast<double>(v) * v;
    }
  }
  for (const int side : spec_.box_sides) {
    const int h = side / 2;
    out[k++] = static_cast<float>(box_sum(px - h, py - h, px + h, py + h) / (static_cast<double>(side) * side));
  }
  const double n = static_cast<double>(spec_.window) * spec_.window;
  const double mean = sum / n;
  out[k] = static_cast<float>(std::max(0.0, sq / n - mean * mean));
}

std::vector<float> extract_features(const Raster& image, int x, int y, const FeatureSpec& spec) {
  std::vector<float> out(spec.dim());
  FeatureExtractor(image, spec).extract(x, y, out);
  return out;
}

void normalize_features(std::span<float> features) {
  const std::size_t n = features.size();
  for (std::size_t i = 0; i + 1 < n; ++i) features[i] -= 0.5f;
  if (n > 0) features[n - 1] *= 4.0f;
}

// ---------------------------------------------------------------------------
// network

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "learning rate must be > 0");
  require(iterations >= 1, "iterations must be >= 1");
  require(batch_size >= 1, "batch size must be >= 1");
  require(hidden_width >= 0, "hidden width must be >= 0");
  require(pool_size >= 1 && refresh_interval >= 1, "pool size and refresh interval must be >= 1");
  features.validate();
}

void SegModel::validate() const {
  features.validate();
  const auto d = static_cast<std::size_t>(feature_dim());
  if (hidden > 0) {
    const auto h = static_cast<std::size_t>(hidden);
    require(w1.size() == d * h && b1.size() == h && w2.size() == h * kNumClasses && b2.size() == kNumClasses,
            "model weight shapes do not match its definition");
  } else {
    require(w1.size() == d * kNumClasses && b1.size() == kNumClasses && w2.empty() && b2.empty(),
            "model weight shapes do not match its definition");
  }
  for (const auto* v : {&w1, &b1, &w2, &b2})
    require(std::all_of(v->begin(), v->end(), [](float f) { return std::isfinite(f); }), "non-finite model weight");
}

double cosine_learning_rate(int t, int total, double eta0) {
  return 0.5 * eta0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total)));
}

Parameters init_parameters(int dim, int hidden, GenSeed seed) {
  Parameters p{dim, hidden, {}};
  auto rng = make_stream(seed, "segmenter.init");
  if (hidden > 0) {
    p.values.assign(static_cast<std::size_t>(dim) * hidden + hidden + hidden * kNumClasses + kNumClasses, 0.0);
    std::normal_distribution<double> n1(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    std::normal_distribution<double> n2(0.0, 1.0 / std::sqrt(static_cast<double>(hidden)));
    const std::size_t w1 = static_cast<std::size_t>(dim) * hidden;
    for (std::size_t i = 0; i < w1; ++i) p.values[i] = n1(rng);
    const std::size_t w2 = w1 + hidden;
    for (std::size_t i = 0; i < static_cast<std::size_t>(hidden) * kNumClasses; ++i) p.values[w2 + i] = n2(rng);
  } else {
    p.values.assign(static_cast<std::size_t>(dim) * kNumClasses + kNumClasses, 0.0);
    std::normal_distribution<double> n1(0.0, 0.01);
    for (std::size_t i = 0; i < static_cast<std::size_t>(dim) * kNumClasses; ++i) p.values[i] = n1(rng);
  }
  return p;
}

double batch_loss(const Parameters& params, const Batch& batch, std::vector<double>* gradient) {
  const int d = params.dim;
  const int h = params.hidden;
  require(batch.dim == d, "batch feature dimension does not match the parameters");
  require(!batch.y.empty(), "empty batch");
  if (gradient) gradient->assign(params.count(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const double* w = params.values.data();
  double loss = 0.0;
  std::vector<double> z(std::max(h, 1)), a(std::max(h, 1)), da(std::max(h, 1));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double* x = batch.x.data() + i * d;
    double logits[kNumClasses];
    if (h > 0) {
      const double* w1 = w;
      const double* b1 = w1 + static_cast<std::size_t>(d) * h;
      const double* w2 = b1 + h;
      const double* b2 = w2 + static_cast<std::size_t>(h) * kNumClasses;
      std::copy(b1, b1 + h, z.begin());
      for (int j = 0; j < d; ++j) {
        const double xj = x[j];
        const double* row = w1 + static_cast<std::size_t>(j) * h;
        for (int u = 0; u < h; ++u) z[u] += xj * row[u];
      }
      for (int u = 0; u < h; ++u) a[u] = std::tanh(z[u]);
      for (int c = 0; c < kNumClasses; ++c) {
        logits[c] = b2[c];
        for (int u = 0; u < h; ++u) logits[c] += a[u] * w2[u * kNumClasses + c];
      }
    } else {
      const double* b = w + static_cast<std::size_t>(d) * kNumClasses;
      for (int c = 0; c < kNumClasses; ++c) logits[c] = b[c];
      for (int j = 0; j < d; ++j)
        for (int c = 0; c < kNumClasses; ++c) logits[c] += x[j] * w[j * kNumClasses + c];
    }
    const double m = std::max({logits[0], logits[1], logits[2]});
    double p[kNumClasses], sum = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
      p[c] = std::exp(logits[c] - m);
      sum += p[c];
    }
    for (auto& v : p) v /= sum;
    const int target = batch.y[i];
    loss -= (logits[target] - m - std::log(sum)) * inv_n;
    if (!gradient) continue;

    double dl[kNumClasses];
    for (int c = 0; c < kNumClasses; ++c) dl[c] = (p[c] - (c == target ? 1.0 : 0.0)) * inv_n;
    double* g = gradient->data();
    if (h > 0) {
      double* g1 = g;
      double* gb1 = g1 + static_cast<std::size_t>(d) * h;
      double* g2 = gb1 + h;
      double* gb2 = g2 + static_cast<std::size_t>(h) * kNumClasses;
      const double* w2 = w + static_cast<std::size_t>(d) * h + h;
      for (int c = 0; c < kNumClasses; ++c) gb2[c] += dl[c];
      for (int u = 0; u < h; ++u) {
        double back = 0.0;
        for (int c = 0; c < kNumClasses; ++c) {
          g2[u * kNumClasses + c] += a[u] * dl[c];
          back += w2[u * kNumClasses + c] * dl[c];
        }
        da[u] = back * (1.0 - a[u] * a[u]);
        gb1[u] += da[u];
      }
      for (int j = 0; j < d; ++j) {
        const double xj = x[j];
        double* row = g1 + static_cast<std::size_t>(j) * h;
        for (int u = 0; u < h; ++u) row[u] += xj * da[u];
      }
    } else {
      double* gb = g + static_cast<std::size_t>(d) * kNumClasses;
      for (int c = 0; c < kNumClasses; ++c) gb[c] += dl[c];
      for (int j = 0; j < d; ++j)
        for (int c = 0; c < kNumClasses; ++c) g[j * kNumClasses + c] += x[j] * dl[c];
    }
  }
  return loss;
}

SegModel to_model(const Parameters& params, const FeatureSpec& spec, TrainMeta meta) {
  require(params.dim == spec.dim(), "parameter dimension does not match the feature spec");
  SegModel m;
  m.features = spec;
  m.hidden = params.hidden;
  m.meta = std::move(meta);
  const auto take = [&](std::size_t& pos, std::size_t n) {
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(params.values[pos + i]);
    pos += n;
    return out;
  };
  std::size_t pos = 0;
  const auto d = static_cast<std::size_t>(params.dim);
  if (params.hidden > 0) {
    const auto h = static_cast<std::size_t>(params.hidden);
    m.w1 = take(pos, d * h);
    m.b1 = take(pos, h);
    m.w2 = take(pos, h * kNumClasses);
    m.b2 = take(pos, kNumClasses);
  } else {
    m.w1 = take(pos, d * kNumClasses);
    m.b1 = take(pos, kNumClasses);
  }
  require(pos == params.count(), "parameter count does not match the model layout");
  return m;
}

Parameters from_model(const SegModel& model) {
  model.validate();
  Parameters p{model.feature_dim(), model.hidden, {}};
  for (const auto* v : {&model.w1, &model.b1, &model.w2, &model.b2}) p.values.insert(p.values.end(), v->begin(), v->end());
  return p;
}

// ---------------------------------------------------------------------------
// training

std::vector<TrainingPatch> load_training_patches(const DatasetManifest& manifest) {
  require(!manifest.entries.empty(), "cannot train on an empty manifest");
  std::vector<TrainingPatch> patches(manifest.entries.size());
  parallel_for(patches.size(), [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    patches[i].image = read_gray_png(manifest.directory / e.patch_file);
    patches[i].labels = read_label_png(manifest.directory / e.label_file);
    require(patches[i].image.same_shape(patches[i].labels), "patch and label sizes differ for " + e.patch_file);
  });
  return patches;
}

namespace {

struct PoolItem {
  FeatureExtractor features;
  std::array<std::vector<std::uint32_t>, kNumClasses> pixels_by_class;
};

PoolItem make_pool_item(const TrainingPatch& patch, GenSeed seed, const AugmentConfig& augment,
                        const FeatureSpec& spec) {
  auto [img, lbl] = docsynth::augment(patch.image, patch.labels, seed, augment);
  PoolItem item{FeatureExtractor(img, spec), {}};
  const auto px = lbl.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) item.pixels_by_class[px[i]].push_back(static_cast<std::uint32_t>(i));
  return item;
}

}  // namespace

SegModel train(std::span<const TrainingPatch> patches, const TrainConfig& config, const AugmentConfig& augment) {
  config.validate();
  augment.validate();
  require(!patches.empty(), "cannot train on an empty dataset");
  const GenSeed seed{config.seed};
  const FeatureSpec& spec = config.features;
  const int dim = spec.dim();
  auto rng = make_stream(seed, "segmenter.train");
  std::uint64_t draws = 0;
  const auto draw_item = [&] {
    const auto idx = std::uniform_int_distribution<std::size_t>(0, patches.size() - 1)(rng);
    return make_pool_item(patches[idx], derive_seed(seed, draws++), augment, spec);
  };

  const std::size_t pool_size = std::min<std::size_t>(config.pool_size, patches.size());
  std::vector<PoolItem> pool;
  pool.reserve(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) pool.push_back(draw_item());

  Parameters params = init_parameters(dim, config.hidden_width, seed);
  Batch batch{dim, std::vector<double>(static_cast<std::size_t>(config.batch_size) * dim),
              std::vector<int>(config.batch_size)};
  std::vector<double> grad;
  std::vector<float> feat(dim);
  TrainMeta meta{config.iterations, config.learning_rate, config.batch_size, config.seed, patches.size(), 0.0, {}};
  double window_sum = 0.0;
  int window_n = 0;

  for (int t = 0; t < config.iterations; ++t) {
    if (t > 0 && t % config.refresh_interval == 0) {
      const std::size_t slot = static_cast<std::size_t>(t / config.refresh_interval) % pool.size();
      pool[slot] = draw_item();
    }
    // Class-balanced draw: class uniform among the classes present in the pool,
    // then a pool patch holding that class, then a pixel of that class.
    std::array<std::vector<std::size_t>, kNumClasses> holders;
    for (std::size_t s = 0; s < pool.size(); ++s)
      for (int c = 0; c < kNumClasses; ++c)
        if (!pool[s].pixels_by_class[c].empty()) holders[c].push_back(s);
    std::vector<int> present;
    for (int c = 0; c < kNumClasses; ++c)
      if (!holders[c].empty()) present.push_back(c);
    for (int b = 0; b < config.batch_size; ++b) {
      const int c = present[std::uniform_int_distribution<std::size_t>(0, present.size() - 1)(rng)];
      const auto& slots = holders[c];
      const auto& item = pool[slots[std::uniform_int_distribution<std::size_t>(0, slots.size() - 1)(rng)]];
      const auto& candidates = item.pixels_by_class[c];
      const auto p = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
      item.features.extract(static_cast<int>(p % item.features.width()), static_cast<int>(p / item.features.width()),
                            feat);
      normalize_features(feat);
      std::copy(feat.begin(), feat.end(), batch.x.begin() + static_cast<std::ptrdiff_t>(b) * dim);
      batch.y[b] = c;
    }
    const double loss = batch_loss(params, batch, &grad);
    if (!std::isfinite(loss)) fail_runtime("training diverged: non-finite loss at iteration " + std::to_string(t));
    const double lr = cosine_learning_rate(t, config.iterations, config.learning_rate);
    for (std::size_t i = 0; i < params.values.size(); ++i) params.values[i] -= lr * grad[i];
    window_sum += loss;
    if (++window_n == kLossWindow || t + 1 == config.iterations) {
      meta.window_losses.push_back(window_sum / window_n);
      window_sum = 0.0;
      window_n = 0;
    }
  }
  meta.final_loss = meta.window_losses.back();
  auto model = to_model(params, spec, std::move(meta));
  model.validate();
  return model;
}

SegModel train(const DatasetManifest& manifest, const TrainConfig& config, const AugmentConfig& augment) {
  const auto patches = load_training_patches(manifest);
  return train(patches, config, augment);
}

// ---------------------------------------------------------------------------
// prediction

Probabilities predict_features(const SegModel& model, std::span<const float> x) {
  const int d = model.feature_dim();
  require(static_cast<int>(x.size()) == d, "feature vector has the wrong dimension");
  double logits[kNumClasses];
  if (model.hidden > 0) {
    const int h = model.hidden;
    std::vector<double> a(h);
    for (int u = 0; u < h; ++u) {
      double z = model.b1[u];
      for (int j = 0; j < d; ++j) z += static_cast<double>(x[j]) * model.w1[static_cast<std::size_t>(j) * h + u];
      a[u] = std::tanh(z);
    }
    for (int c = 0; c < kNumClasses; ++c) {
      logits[c] = model.b2[c];
      for (int u = 0; u < h; ++u) logits[c] += a[u] * model.w2[u * kNumClasses + c];
    }
  } else {
    for (int c = 0; c < kNumClasses; ++c) {
      logits[c] = model.b1[c];
      for (int j = 0; j < d; ++j) logits[c] += static_cast<double>(x[j]) * model.w1[j * kNumClasses + c];
    }
  }
  return softmax3(logits);
}

ConfidenceMap predict_patch(const SegModel& model, const Raster& image) {
  require(image.height() == 256 && image.width() == 256, "predict_patch expects a 256x256 grayscale patch");
  model.validate();
  const FeatureExtractor fx(image, model.features);
  const int d = model.feature_dim();
  const int h = model.hidden;
  const int out_w = h > 0 ? h : kNumClasses;
  ConfidenceMap out(image.height(), image.width());
  parallel_for(static_cast<std::size_t>(image.height()), [&](std::size_t y) {
    std::vector<float> feat(d), acc(out_w);
    for (int x = 0; x < image.width(); ++x) {
      fx.extract(x, static_cast<int>(y), feat);
      normalize_features(feat);
      std::copy(model.b1.begin(), model.b1.end(), acc.begin());
      for (int j = 0; j < d; ++j) {
        const float xj = feat[j];
        const float* row = model.w1.data() + static_cast<std::size_t>(j) * out_w;
        for (int u = 0; u < out_w; ++u) acc[u] += xj * row[u];
      }
      double logits[kNumClasses];
      if (h > 0) {
        for (int c = 0; c < kNumClasses; ++c) logits[c] = model.b2[c];
        for (int u = 0; u < h; ++u) {
          const double a = std::tanh(static_cast<double>(acc[u]));
          for (int c = 0; c < kNumClasses; ++c) logits[c] += a * model.w2[u * kNumClasses + c];
        }
      } else {
        for (int c = 0; c < kNumClasses; ++c) logits[c] = acc[c];
      }
      out(static_cast<int>(y), x) = softmax3(logits);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// persistence

std::vector<std::uint8_t> encode_model(const SegModel& model) {
  model.validate();
  std::vector<std::uint8_t> out{'S', 'E', 'G', 'M'};
  put_u16(out, 1);
  put_u16(out, static_cast<std::uint16_t>(model.features.window));
  for (const int s : model.features.box_sides) put_u16(out, static_cast<std::uint16_t>(s));
  put_u16(out, static_cast<std::uint16_t>(model.hidden));
  put_u16(out, kNumClasses);
  put_u32(out, static_cast<std::uint32_t>(model.feature_dim()));
  for (const auto* v : {&model.w1, &model.b1, &model.w2, &model.b2})
    for (const float f : *v) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

SegModel decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader in{bytes};
  in.need(4);
  if (std::memcmp(bytes.data(), "SEGM", 4) != 0) fail_validation("not a SEGM model file");
  in.pos = 4;
  const auto version = in.u16();
  require(version == 1, "unsupported model version " + std::to_string(version));
  SegModel m;
  m.features.window = in.u16();
  for (auto& s : m.features.box_sides) s = in.u16();
  m.hidden = in.u16();
  require(in.u16() == kNumClasses, "model class count must be 3");
  const auto dim = in.u32();
  require(static_cast<int>(dim) == m.feature_dim(), "model feature dimension inconsistent with its definition");
  const std::size_t d = dim;
  if (m.hidden > 0) {
    const auto h = static_cast<std::size_t>(m.hidden);
    m.w1 = in.floats(d * h);
    m.b1 = in.floats(h);
    m.w2 = in.floats(h * kNumClasses);
    m.b2 = in.floats(kNumClasses);
  } else {
    m.w1 = in.floats(d * kNumClasses);
    m.b1 = in.floats(kNumClasses);
  }
  require(in.pos == bytes.size(), "trailing bytes after model weights");
  m.validate();
  return m;
}

std::string model_metadata_json(const SegModel& model) {
  const auto& t = model.meta;
  nlohmann::ordered_json j{{"format", "SEGM"},
                           {"version", 1},
                           {"window", model.features.window},
                           {"box_sides", model.features.box_sides},
                           {"hidden_width", model.hidden},
                           {"feature_dim", model.feature_dim()},
                           {"training",
                            {{"iterations", t.iterations},
                             {"learning_rate", t.learning_rate},
                             {"schedule", "cosine"},
                             {"batch_size", t.batch_size},
                             {"seed", t.seed},
                             {"patches", t.patches},
                             {"final_loss", t.final_loss},
                             {"window_losses", t.window_losses}}}};
  return j.dump(2) + "\n";
}

void save_model(const std::filesystem::path& path, const SegModel& model) {
  write_bytes(path, encode_model(model));
  auto sidecar = path;
  sidecar += ".json";
  write_file_atomic(sidecar, model_metadata_json(model));
}

SegModel load_model(const std::filesystem::path& path) {
  auto model = decode_model(read_bytes(path));
  auto sidecar = path;
  sidecar += ".json";
  if (std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      const auto j = nlohmann::json::parse(ss.str()).at("training");
      model.meta.iterations = j.at("iterations").get<int>();
      model.meta.learning_rate = j.at("learning_rate").get<double>();
      model.meta.batch_size = j.at("batch_size").get<int>();
      model.meta.seed = j.at("seed").get<std::uint64_t>();
      model.meta.patches = j.at("patches").get<std::size_t>();
      model.meta.final_loss = j.at("final_loss").get<double>();
      model.meta.window_losses = j.at("window_losses").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      fail_validation(std::string("malformed model sidecar: ") + e.what());
    }
  }
  return model;
}

}  // namespace docsynth
