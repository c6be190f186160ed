#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "docsynth/image.hpp"
#include "docsynth/rng.hpp"
#include "docsynth/segmenter.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("docsynth_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline docsynth::ConfidenceMap random_confidence(std::mt19937_64& rng, int h, int w) {
  docsynth::ConfidenceMap m(h, w);
  std::gamma_distribution<float> g(0.6f, 1.0f);
  for (auto& p : m.pixels()) {
    float s = 0.0f;
    for (auto& v : p) {
      v = g(rng) + 1e-6f;
      s += v;
    }
    for (auto& v : p) v /= s;
  }
  return m;
}

inline docsynth::Raster random_raster(std::mt19937_64& rng, int h, int w) {
  docsynth::Raster r(h, w);
  for (auto& v : r.pixels()) v = static_cast<float>(docsynth::uniform(rng, 0.0, 1.0));
  return r;
}

// Paper white, printed strokes black, handwriting mid-gray.
inline docsynth::TrainingPatch toy_patch(std::uint64_t seed) {
  using namespace docsynth;
  auto rng = make_stream(GenSeed{seed}, "toy");
  TrainingPatch t{Raster(256, 256, 1.0f), LabelImage(256, 256, kBackground)};
  for (int k = 0; k < 40; ++k) {
    const int y = uniform_int(rng, 0, 240), x = uniform_int(rng, 0, 240);
    const int cls = k % 2 == 0 ? kPrinted : kHandwritten;
    for (int dy = 0; dy < 12; ++dy)
      for (int dx = 0; dx < 12; ++dx) {
        t.image(y + dy, x + dx) = cls == kPrinted ? 0.0f : 0.5f;
        t.labels(y + dy, x + dx) = static_cast<std::uint8_t>(cls);
      }
  }
  return t;
}

inline docsynth::FeatureSpec small_spec() {
  docsynth::FeatureSpec s;
  s.window = 5;
  s.box_sides = {3, 5, 9};
  return s;
}

}  // namespace testing
