#include <doctest.h>

#include "docsynth/hash.hpp"
#include "docsynth/png_io.hpp"
#include "support.hpp"

using namespace docsynth;

TEST_CASE("sha256 matches the FIPS 180-2 test vectors") {
  CHECK(sha256_hex(std::string_view("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("png round trips are exact after 8-bit quantization") {
  testing::TempDir dir("png");
  auto rng = make_stream(GenSeed{5}, "png");
  const auto gray = testing::random_raster(rng, 13, 17);
  write_png(dir.path() / "g.png", gray);
  CHECK(read_gray_png(dir.path() / "g.png") == quantize8(gray));

  RgbRaster rgb(9, 4);
  for (auto& p : rgb.pixels())
    p = {static_cast<float>(uniform(rng, 0, 1)), static_cast<float>(uniform(rng, 0, 1)),
         static_cast<float>(uniform(rng, 0, 1))};
  write_png(dir.path() / "c.png", rgb);
  CHECK(read_rgb_png(dir.path() / "c.png") == quantize8(rgb));

  LabelImage labels(6, 6);
  for (auto& v : labels.pixels()) v = static_cast<std::uint8_t>(uniform_int(rng, 0, 2));
  write_png(dir.path() / "l.png", labels);
  CHECK(read_label_png(dir.path() / "l.png") == labels);
  CHECK(sha256_file(dir.path() / "l.png") == sha256_hex(encode_png(labels)));
}

TEST_CASE("reading a missing or corrupt png fails") {
  testing::TempDir dir("pngbad");
  CHECK_THROWS_AS(read_gray_png(dir.path() / "none.png"), Error);
  const std::string junk = "not a png";
  write_file_atomic(dir.path() / "bad.png", junk);
  CHECK_THROWS_AS(read_gray_png(dir.path() / "bad.png"), Error);
}

TEST_CASE("colorize paints background black, printed orange, handwriting blue") {
  LabelImage l(1, 3);
  l(0, 1) = kPrinted;
  l(0, 2) = kHandwritten;
  const auto c = colorize(l);
  CHECK(c(0, 0) == Rgb{0.0f, 0.0f, 0.0f});
  CHECK(c(0, 1).r == doctest::Approx(1.0));
  CHECK(c(0, 2).b == doctest::Approx(1.0));
}
