#include "docsynth/docgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "docsynth/png_io.hpp"
#include "font.hpp"

namespace docsynth {

namespace {

constexpr int kGlyphScale = 2;
constexpr int kGlyphAdvance = font::kGlyphWidth * kGlyphScale + 2;
constexpr int kReserveMargin = 6;

struct Rect {
  int x0, y0, x1, y1;  // half-open
  bool intersects(const Rect& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
  Rect grown(int m) const { return {x0 - m, y0 - m, x1 + m, y1 + m}; }
};

struct Canvas {
  RgbRaster image;
  LabelImage labels;
  Image<float> texture;  // smooth paper texture in [-1, 1]
  std::vector<Rect> reserved;

  bool inside(int y, int x) const { return y >= 0 && x >= 0 && y < image.height() && x < image.width(); }
  void ink(int y, int x, const Rgb& color, Label cls) {
    if (!inside(y, x)) return;
    image(y, x) = color;
    labels(y, x) = cls;
  }
};

Image<float> smooth_texture(std::mt19937_64& rng, int height, int width, int cell) {
  const int gh = height / cell + 2;
  const int gw = width / cell + 2;
  std::vector<float> grid(static_cast<std::size_t>(gh) * gw);
  for (auto& g : grid) g = static_cast<float>(uniform(rng, -1.0, 1.0));
  Image<float> out(height, width);
  for (int y = 0; y < height; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const int iy = static_cast<int>(fy);
    const double ty = fy - iy;
    for (int x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const int ix = static_cast<int>(fx);
      const double tx = fx - ix;
      const auto g = [&](int r, int c) { return grid[static_cast<std::size_t>(r) * gw + c]; };
      const double top = g(iy, ix) * (1 - tx) + g(iy, ix + 1) * tx;
      const double bottom = g(iy + 1, ix) * (1 - tx) + g(iy + 1, ix + 1) * tx;
      out(y, x) = static_cast<float>(top * (1 - ty) + bottom * ty);
    }
  }
  return out;
}

Canvas blank_canvas(std::mt19937_64& rng, int height, int width, double texture_level) {
  Canvas c{RgbRaster(height, width), LabelImage(height, width, kBackground),
           smooth_texture(rng, height, width, 48), {}};
  const double base = uniform(rng, 0.90, 0.95);
  const double amp = 0.05 * texture_level;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = base + amp * c.texture(y, x);
      c.image(y, x) = Rgb{static_cast<float>(v + 0.02), static_cast<float>(v), static_cast<float>(v - 0.05)};
    }
  }
  return c;
}

void draw_glyph(Canvas& c, int glyph, int top, int left, const Rgb& color) {
  const auto& rows = font::glyph(glyph);
  for (int gy = 0; gy < font::kGlyphHeight; ++gy) {
    for (int gx = 0; gx < font::kGlyphWidth; ++gx) {
      if (((rows[gy] >> (font::kGlyphWidth - 1 - gx)) & 1) == 0) continue;
      for (int sy = 0; sy < kGlyphScale; ++sy)
        for (int sx = 0; sx < kGlyphScale; ++sx)
          c.ink(top + gy * kGlyphScale + sy, left + gx * kGlyphScale + sx, color, kPrinted);
    }
  }
}

// One line of printed words between [x_begin, x_end); glyphs touching a reserved area are skipped.
void draw_printed_row(Canvas& c, std::mt19937_64& rng, int top, int x_begin, int x_end) {
  const float k = static_cast<float>(uniform(rng, 0.05, 0.18));
  const Rgb color{k, k, k};
  const int glyph_h = font::kGlyphHeight * kGlyphScale;
  int x = x_begin;
  while (x < x_end) {
    const int word = uniform_int(rng, 2, 7);
    for (int i = 0; i < word && x < x_end; ++i, x += kGlyphAdvance) {
      const Rect box{x, top, x + kGlyphAdvance, top + glyph_h};
      const bool blocked = std::any_of(c.reserved.begin(), c.reserved.end(),
                                       [&](const Rect& r) { return r.grown(kReserveMargin).intersects(box); });
      if (!blocked) draw_glyph(c, uniform_int(rng, 0, font::kGlyphCount - 1), top, x, color);
    }
    x += uniform_int(rng, 6, 12);
  }
}

void stamp_disc(Canvas& c, double cy, double cx, double radius, const Rgb& color) {
  const int y0 = static_cast<int>(std::floor(cy - radius));
  const int y1 = static_cast<int>(std::ceil(cy + radius));
  const int x0 = static_cast<int>(std::floor(cx - radius));
  const int x1 = static_cast<int>(std::ceil(cx + radius));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius) c.ink(y, x, color, kHandwritten);
}

// Cursive-like strokes: quadratic Bezier segments through jittered control points, pen lifted between words.
void draw_handwriting(Canvas& c, std::mt19937_64& rng, const Rect& area) {
  const double u = uniform(rng, -0.05, 0.05);
  const Rgb color{static_cast<float>(0.12 + u), static_cast<float>(0.22 + u), static_cast<float>(0.62 + u)};
  const double radius = uniform(rng, 1.0, 1.6);
  const int height = area.y1 - area.y0;
  const int lines = height >= 70 ? 2 : 1;
  const double line_h = static_cast<double>(height) / lines;
  for (int line = 0; line < lines; ++line) {
    const double baseline = area.y0 + line_h * (line + 0.5);
    const double amplitude = std::min(line_h * 0.35, uniform(rng, 5.0, 10.0));
    double x = area.x0 + uniform(rng, 2.0, 10.0);
    bool first_word = true;
    while (first_word || x < area.x1 - 30) {
      first_word = false;
      std::vector<std::pair<double, double>> pts;  // (y, x)
      const int n = uniform_int(rng, 5, 12);
      for (int i = 0; i < n && x < area.x1 - 4; ++i) {
        const double dy = (i % 2 == 0 ? -1.0 : 1.0) * amplitude * uniform(rng, 0.4, 1.0);
        pts.emplace_back(std::clamp(baseline + dy + uniform(rng, -1.5, 1.5), area.y0 + 2.0, area.y1 - 3.0), x);
        x += uniform(rng, 5.0, 11.0);
      }
      for (std::size_t i = 0; i + 2 < pts.size(); ++i) {
        const auto mid = [](auto a, auto b) { return std::pair{(a.first + b.first) / 2, (a.second + b.second) / 2}; };
        const auto p0 = i == 0 ? pts[0] : mid(pts[i], pts[i + 1]);
        const auto p1 = pts[i + 1];
        const auto p2 = i + 3 == pts.size() ? pts[i + 2] : mid(pts[i + 1], pts[i + 2]);
        for (int s = 0; s <= 24; ++s) {
          const double t = s / 24.0;
          const double a = (1 - t) * (1 - t), b = 2 * (1 - t) * t, d = t * t;
          stamp_disc(c, a * p0.first + b * p1.first + d * p2.first, a * p0.second + b * p1.second + d * p2.second,
                     radius, color);
        }
      }
      x += uniform(rng, 10.0, 18.0);
    }
  }
}

void add_grain(Canvas& c, std::mt19937_64& rng) {
  for (auto& p : c.image.pixels()) {
    const float g = static_cast<float>(uniform(rng, -0.015, 0.015));
    p = Rgb{std::clamp(p.r + g, 0.0f, 1.0f), std::clamp(p.g + g, 0.0f, 1.0f), std::clamp(p.b + g, 0.0f, 1.0f)};
  }
}

// 4-neighbour blur, centre weight 0.6; a cell's own one-hot indicator always stays the strict maximum.
std::vector<float> blur_cells(const std::vector<float>& src, int size) {
  std::vector<float> out(src.size());
  const auto at = [&](int y, int x) {
    return src[static_cast<std::size_t>(reflect_index(y, size)) * size + reflect_index(x, size)];
  };
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      out[static_cast<std::size_t>(y) * size + x] =
          0.6f * at(y, x) + 0.1f * (at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1));
  return out;
}

// Separable mean filter with reflect-101 borders.
std::vector<float> box_blur(const std::vector<float>& src, int size, int radius) {
  std::vector<int> idx(size + 2 * radius);
  for (int i = 0; i < static_cast<int>(idx.size()); ++i) idx[i] = reflect_index(i - radius, size);
  const float inv = 1.0f / static_cast<float>(2 * radius + 1);
  std::vector<float> rows(src.size()), out(src.size());
  for (int y = 0; y < size; ++y) {
    const float* in = src.data() + static_cast<std::size_t>(y) * size;
    for (int x = 0; x < size; ++x) {
      float s = 0.0f;
      for (int d = 0; d <= 2 * radius; ++d) s += in[idx[x + d]];
      rows[static_cast<std::size_t>(y) * size + x] = s * inv;
    }
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      float s = 0.0f;
      for (int d = 0; d <= 2 * radius; ++d) s += rows[static_cast<std::size_t>(idx[y + d]) * size + x];
      out[static_cast<std::size_t>(y) * size + x] = s * inv;
    }
  }
  return out;
}

std::vector<float> plane_of(const Raster& r) { return {r.pixels().begin(), r.pixels().end()}; }

Raster ink_mask(const LabelImage& labels) {
  Raster ink(labels.height(), labels.width());
  std::transform(labels.pixels().begin(), labels.pixels().end(), ink.pixels().begin(),
                 [](std::uint8_t v) { return v != kBackground ? 1.0f : 0.0f; });
  return ink;
}

FeatureStack build_features(GenSeed seed, const Canvas& c, const GenConfig& config) {
  const Raster ink = ink_mask(c.labels);
  Raster tex(kPatchSize, kPatchSize);
  std::transform(c.texture.pixels().begin(), c.texture.pixels().end(), tex.pixels().begin(),
                 [](float t) { return 0.5f + 0.5f * t; });
  auto grain_rng = make_stream(seed, "features.grain");
  const Raster grain_field = [&] {
    Raster g(kPatchSize, kPatchSize);
    const auto t = smooth_texture(grain_rng, kPatchSize, kPatchSize, 8);
    std::transform(t.pixels().begin(), t.pixels().end(), g.pixels().begin(),
                   [](float v) { return 0.5f + 0.5f * v; });
    return g;
  }();

  FeatureStack stack;
  for (int li = 0; li < kFeatureLayerCount; ++li) {
    const int size = kLayerSizes[li];
    const int variant = li % 2;
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    FeatureLayer layer{size, kFeatureChannels, std::vector<float>(kFeatureChannels * plane, 0.0f)};
    const auto set_channel = [&](int ch, const std::vector<float>& values, float gain, float offset = 0.0f) {
      for (std::size_t i = 0; i < plane; ++i) layer.values[ch * plane + i] = gain * values[i] + offset;
    };
    const auto tex_s = plane_of(size == kPatchSize ? tex : downsample_box(tex, size));
    const auto grain_s = plane_of(size == kPatchSize ? grain_field : downsample_box(grain_field, size));
    const auto density = plane_of(size == kPatchSize ? ink : downsample_box(ink, size));

    if (size == kPatchSize) {
      // Texture-level layer: where ink is, not which kind.
      std::vector<float> inverse(plane);
      std::transform(density.begin(), density.end(), inverse.begin(), [](float v) { return 1.0f - v; });
      const float gain = variant == 0 ? 1.0f : 0.9f;
      set_channel(0, density, gain);
      set_channel(1, inverse, gain);
      set_channel(2, box_blur(density, size, variant == 0 ? 1 : 2), gain);
      set_channel(3, tex_s, 0.3f);
      set_channel(4, grain_s, 0.3f);
      set_channel(5, std::vector<float>(plane, 0.2f), 1.0f);
    } else if (size == 32) {
      // Coarse layout only.
      set_channel(0, density, 2.0f);
      set_channel(1, box_blur(density, size, 1), 2.0f);
      set_channel(2, tex_s, 0.4f);
      set_channel(3, grain_s, 0.4f);
      set_channel(4, std::vector<float>(plane, 0.3f), 1.0f);
      set_channel(5 + variant, std::vector<float>(plane, 0.2f), 1.0f);
    } else {
      // Class-separable layer: blurred one-hot of the text-dominant class per cell.
      const LabelImage cls = downsample_labels(c.labels, size);
      const float gain = variant == 0 ? 1.0f : 0.8f;
      for (int k = 0; k < kNumClasses; ++k) {
        std::vector<float> onehot(plane);
        std::transform(cls.pixels().begin(), cls.pixels().end(), onehot.begin(),
                       [k](std::uint8_t v) { return v == k ? 1.0f : 0.0f; });
        set_channel(class_channel(li, static_cast<Label>(k)), blur_cells(onehot, size), gain);
      }
      set_channel(3, tex_s, 0.3f);
      set_channel(4, density, 0.3f);
      set_channel(5, std::vector<float>(plane, 0.25f), 1.0f);
      set_channel(6, grain_s, 0.2f);
    }
    if (config.feature_noise_sigma > 0.0) {
      boost::random::mt19937_64 rng(make_stream(seed, "features.noise." + std::to_string(li))());
      boost::random::normal_distribution<float> noise(0.0f, static_cast<float>(config.feature_noise_sigma));
      for (auto& v : layer.values) v += noise(rng);
    }
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  const auto v = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint16_t u16() {
    need(2);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  float f32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return std::bit_cast<float>(v);
  }
  void expect_magic(std::string_view magic) {
    need(magic.size());
    if (std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0)
      fail_validation("bad magic, expected " + std::string(magic));
    pos_ += magic.size();
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail_validation("truncated binary data");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void GenConfig::validate() const {
  const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  require(unit(printed_density), "printed_density must lie in [0,1]");
  require(unit(handwriting_probability), "handwriting_probability must lie in [0,1]");
  require(feature_noise_sigma >= 0.0 && std::isfinite(feature_noise_sigma), "feature_noise_sigma must be >= 0");
  require(unit(background_texture_level), "background_texture_level must lie in [0,1]");
}

void FeatureStack::validate() const {
  require(layers.size() == kFeatureLayerCount, "feature stack must hold exactly 8 layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    require(l.size == kLayerSizes[i], "feature layer " + std::to_string(i) + " has unexpected size");
    require(l.channels >= 1, "feature layer without channels");
    require(l.values.size() == static_cast<std::size_t>(l.channels) * l.size * l.size,
            "feature layer value count mismatch");
    require(std::all_of(l.values.begin(), l.values.end(), [](float v) { return std::isfinite(v); }),
            "non-finite feature value");
  }
}

int class_channel(int layer_index, Label label) {
  require(layer_index >= 0 && layer_index < kFeatureLayerCount &&
              (kLayerSizes[layer_index] == 64 || kLayerSizes[layer_index] == 128),
          "class channels exist only on 64 and 128 layers");
  const int k = static_cast<int>(label);
  return layer_index % 2 == 0 ? k : (k + 1) % kNumClasses;
}

LabelImage downsample_labels(const LabelImage& labels, int target_size) {
  require(target_size > 0 && labels.height() % target_size == 0 && labels.width() % target_size == 0,
          "downsample_labels: source is not an integer multiple of the target");
  const int fy = labels.height() / target_size;
  const int fx = labels.width() / target_size;
  LabelImage out(target_size, target_size, kBackground);
  for (int ty = 0; ty < target_size; ++ty) {
    for (int tx = 0; tx < target_size; ++tx) {
      int printed = 0, hand = 0;
      for (int y = ty * fy; y < (ty + 1) * fy; ++y)
        for (int x = tx * fx; x < (tx + 1) * fx; ++x) {
          printed += labels(y, x) == kPrinted;
          hand += labels(y, x) == kHandwritten;
        }
      if (printed + hand > 0) out(ty, tx) = hand > printed ? kHandwritten : kPrinted;
    }
  }
  return out;
}

GeneratedPatch generate_patch(GenSeed seed, const GenConfig& config) {
  config.validate();
  auto paper_rng = make_stream(seed, "patch.paper");
  auto layout_rng = make_stream(seed, "patch.layout");
  auto grain_rng = make_stream(seed, "patch.grain");
  Canvas c = blank_canvas(paper_rng, kPatchSize, kPatchSize, config.background_texture_level);

  std::vector<Rect> notes;
  if (bernoulli(layout_rng, config.handwriting_probability)) {
    const int h = uniform_int(layout_rng, 48, 88);
    const int w = uniform_int(layout_rng, 110, 230);
    const int x0 = uniform_int(layout_rng, 0, kPatchSize - w);
    const int y0 = uniform_int(layout_rng, 4, kPatchSize - 4 - h);
    notes.push_back({x0, y0, x0 + w, y0 + h});
  }
  c.reserved = notes;

  const int pitch = uniform_int(layout_rng, 26, 34);
  for (int top = uniform_int(layout_rng, -8, pitch - 14); top < kPatchSize; top += pitch) {
    const bool printed = bernoulli(layout_rng, config.printed_density);
    const int x_begin = uniform_int(layout_rng, -10, 30);
    const int x_end = uniform_int(layout_rng, 150, kPatchSize + 10);
    if (printed) draw_printed_row(c, layout_rng, top, x_begin, x_end);
  }
  for (const auto& r : notes) draw_handwriting(c, layout_rng, r);
  add_grain(c, grain_rng);

  GeneratedPatch out;
  out.features = build_features(seed, c, config);
  out.image = std::move(c.image);
  out.labels = std::move(c.labels);
  return out;
}

GeneratedDocument generate_document(GenSeed seed, const GenConfig& config, int height, int width) {
  config.validate();
  require(height >= kPatchSize && width >= kPatchSize, "generate_document: both dimensions must be >= 256");
  auto paper_rng = make_stream(seed, "doc.paper");
  auto layout_rng = make_stream(seed, "doc.layout");
  auto grain_rng = make_stream(seed, "doc.grain");
  Canvas c = blank_canvas(paper_rng, height, width, config.background_texture_level);

  const int left = uniform_int(layout_rng, 24, 48);
  const int notes_width = std::clamp(width / 4, 100, 200);
  const int column_end = width - notes_width - 10;
  const int top_margin = uniform_int(layout_rng, 20, 40);

  // Margin notes along the right edge plus an occasional note inside the text column.
  std::vector<Rect> notes;
  for (int y = top_margin; y + 60 < height - 10; y += 130) {
    if (!bernoulli(layout_rng, config.handwriting_probability)) continue;
    const int h = uniform_int(layout_rng, 44, 80);
    const int x0 = width - notes_width + uniform_int(layout_rng, 0, 12);
    notes.push_back({x0, y, std::min(width - 6, x0 + notes_width - 12), std::min(height - 6, y + h)});
  }
  if (column_end - left > 200 && bernoulli(layout_rng, 0.5 * config.handwriting_probability)) {
    const int w = uniform_int(layout_rng, 110, std::min(230, column_end - left));
    const int h = uniform_int(layout_rng, 44, 80);
    const int x0 = uniform_int(layout_rng, left, column_end - w);
    const int y0 = uniform_int(layout_rng, top_margin, height - h - 10);
    notes.push_back({x0, y0, x0 + w, y0 + h});
  }
  c.reserved = notes;

  const int pitch = uniform_int(layout_rng, 26, 34);
  int top = top_margin;
  while (top + 14 < height - 16) {
    const int rows = uniform_int(layout_rng, 3, 8);
    for (int r = 0; r < rows && top + 14 < height - 16; ++r, top += pitch) {
      const bool printed = bernoulli(layout_rng, config.printed_density);
      const int indent = r == 0 ? uniform_int(layout_rng, 10, 30) : 0;
      const int x_end = r + 1 == rows ? uniform_int(layout_rng, left + 40, column_end) : column_end;
      if (printed) draw_printed_row(c, layout_rng, top, left + indent, x_end);
    }
    top += pitch * uniform_int(layout_rng, 1, 2);
  }
  for (const auto& r : notes) draw_handwriting(c, layout_rng, r);
  add_grain(c, grain_rng);
  return {std::move(c.image), std::move(c.labels)};
}

std::vector<std::uint8_t> encode_feature_stack(const FeatureStack& stack) {
  require(stack.layers.size() <= 0xFFFF, "too many feature layers");
  std::vector<std::uint8_t> out{'F', 'S', 'T', 'K'};
  put_u16(out, 1);
  put_u16(out, static_cast<std::uint16_t>(stack.layers.size()));
  for (const auto& l : stack.layers) {
    require(l.values.size() == static_cast<std::size_t>(l.channels) * l.size * l.size,
            "feature layer value count mismatch");
    put_u16(out, static_cast<std::uint16_t>(l.size));
    put_u16(out, static_cast<std::uint16_t>(l.channels));
    for (const float v : l.values) put_f32(out, v);
  }
  return out;
}

FeatureStack decode_feature_stack(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  in.expect_magic("FSTK");
  const auto version = in.u16();
  require(version == 1, "unsupported feature stack version " + std::to_string(version));
  const auto count = in.u16();
  FeatureStack stack;
  for (int i = 0; i < count; ++i) {
    FeatureLayer l;
    l.size = in.u16();
    l.channels = in.u16();
    l.values.resize(static_cast<std::size_t>(l.channels) * l.size * l.size);
    for (auto& v : l.values) v = in.f32();
    stack.layers.push_back(std::move(l));
  }
  require(in.done(), "trailing bytes after feature stack");
  return stack;
}

void write_feature_stack(const std::filesystem::path& path, const FeatureStack& stack) {
  write_bytes(path, encode_feature_stack(stack));
}

FeatureStack read_feature_stack(const std::filesystem::path& path) {
  return decode_feature_stack(read_bytes(path));
}

}  // namespace docsynth
