#include <doctest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "attnsel/errors.h"
#include "attnsel/raw_select.h"
#include "attnsel/tensor_io.h"
#include "test_support.h"

using namespace attnsel;

TEST_CASE("patch centers") {
  CHECK(patch_center_pixels({3, 5}, {14, 14}, {224, 224}) == PixelPoint{88, 56});
  CHECK(patch_center_pixels({0, 0}, {14, 14}, {224, 224}) == PixelPoint{8, 8});
  const auto c = patch_center_pixels({13, 13}, {14, 14}, {500, 375});
  CHECK(c.x == std::llround(13.5 * 500.0 / 14.0));
  CHECK(c.y == std::llround(13.5 * 375.0 / 14.0));
  CHECK_THROWS_AS(patch_center_pixels({14, 0}, {14, 14}, {224, 224}), ArgumentError);
}

TEST_CASE("crop box examples") {
  Rng rng(1);
  const auto full = propose_crop_box({10, 200}, 1.0, 1.0, {224, 224}, rng);
  CHECK(full.x0 == 0);
  CHECK(full.y0 == 0);
  CHECK(full.width == 224);
  CHECK(full.height == 224);

  const auto mid = propose_crop_box({112, 112}, 0.5, 0.5, {224, 224}, rng);
  CHECK(mid.x0 == 56);
  CHECK(mid.y0 == 56);
  CHECK(mid.width == 112);
  CHECK(mid.height == 112);

  const auto corner = propose_crop_box({0, 0}, 0.5, 0.5, {224, 224}, rng);
  CHECK(corner.x0 == 0);
  CHECK(corner.y0 == 0);
  CHECK(corner.width == 112);
  CHECK(corner.height == 112);

  CHECK_THROWS_AS(propose_crop_box({0, 0}, 0.6, 0.5, {224, 224}, rng), ConfigError);
  CHECK_THROWS_AS(propose_crop_box({0, 0}, 0.0, 0.5, {224, 224}, rng), ConfigError);
  CHECK_THROWS_AS(propose_crop_box({0, 0}, 0.5, 1.5, {224, 224}, rng), ConfigError);
}

TEST_CASE("crop boxes stay inside, keep size, and respect the area bounds") {
  Rng rng(77);
  for (int i = 0; i < 100000; ++i) {
    const ImageSize img{1 + static_cast<std::int64_t>(rng.uniform01() * 600),
                        1 + static_cast<std::int64_t>(rng.uniform01() * 600)};
    const double alpha = 0.05 + rng.uniform01() * 0.9;
    const double beta = alpha + rng.uniform01() * (1.0 - alpha);
    const PixelPoint c{static_cast<std::int64_t>(rng.uniform01() * static_cast<double>(img.width + 1)),
                       static_cast<std::int64_t>(rng.uniform01() * static_cast<double>(img.height + 1))};
    const auto box = propose_crop_box(c, alpha, beta, img, rng);
    REQUIRE(box.inside(img));
    CHECK(box.fx >= alpha);
    CHECK(box.fx <= beta);
    // Integer rounding moves each side by at most half a pixel, or up to the 1-pixel floor.
    const double w = static_cast<double>(img.width), h = static_cast<double>(img.height);
    CHECK(static_cast<double>(box.width) >= std::min(w, std::max(1.0, alpha * w - 0.5)));
    CHECK(static_cast<double>(box.width) <= std::max(1.0, beta * w + 0.5));
    CHECK(static_cast<double>(box.height) >= std::min(h, std::max(1.0, alpha * h - 0.5)));
    CHECK(static_cast<double>(box.height) <= std::max(1.0, beta * h + 0.5));
  }
}

TEST_CASE("equal bounds give equal box sizes and the same seed gives the same boxes") {
  Rng a(3), b(3);
  for (int i = 0; i < 50; ++i) {
    const PixelPoint c{i * 7 % 300, i * 13 % 200};
    const auto x = propose_crop_box(c, 0.7, 0.7, {300, 200}, a);
    const auto y = propose_crop_box(c, 0.7, 0.7, {300, 200}, b);
    CHECK(x.width == 210);
    CHECK(x.height == 140);
    CHECK(x.x0 == y.x0);
    CHECK(x.y0 == y.y0);
  }
}

TEST_CASE("identity crop is a plain normalization") {
  const std::int64_t s = 16;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(s * s * 3));
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<std::uint8_t>((i * 91 + 7) % 256);
  const ImageTensor img(s, s, rgb);
  EncoderInputSpec spec;
  spec.input_size = s;
  spec.patch_size = 4;
  const auto out = crop_and_preprocess(img, full_image_box(img.size()), spec);
  CHECK(out.shape() == Shape{3, s, s});
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t i = 0; i < s * s; ++i) {
      CHECK(out.f32()[static_cast<std::size_t>(c * s * s + i)] ==
            rgb[static_cast<std::size_t>(i * 3 + c)] / 255.0f);
    }
  }
}

TEST_CASE("constant image gives constant output") {
  const auto img = ImageTensor::filled(37, 21, 90, 90, 90);
  EncoderInputSpec spec;
  spec.input_size = 32;
  spec.patch_size = 8;
  spec.mean = {0.4f, 0.5f, 0.6f};
  spec.std = {0.2f, 0.25f, 0.3f};
  const CropBox box{3, 4, 20, 11, {}, 0.5, 0.5};
  const auto out = crop_and_preprocess(img, box, spec);
  for (std::int64_t c = 0; c < 3; ++c) {
    const double want = (90.0 / 255.0 - spec.mean[c]) / spec.std[c];
    for (std::int64_t i = 0; i < 32 * 32; ++i) {
      CHECK(std::fabs(out.f32()[static_cast<std::size_t>(c * 1024 + i)] - want) <= 1e-5);
    }
  }
  CHECK_THROWS_AS(crop_and_preprocess(img, CropBox{30, 0, 10, 5, {}, 1, 1}, spec), InvariantError);
}

TEST_CASE("fixture crop matches the exporter's resampler") {
  const auto dir = testing::fixture_dir() / "export/preprocess";
  std::ifstream in(dir / "crop.json");
  const auto meta = nlohmann::json::parse(in);
  EncoderInputSpec spec;
  spec.input_size = meta["input_size"];
  spec.patch_size = meta["patch_size"];
  for (int c = 0; c < 3; ++c) {
    spec.mean[c] = meta["mean"][c];
    spec.std[c] = meta["std"][c];
  }
  const auto& b = meta["box"];
  const CropBox box{b[0], b[1], b[2], b[3], {}, 1, 1};
  const auto got = crop_and_preprocess(decode_image(dir / "image.png"), box, spec);
  const auto want = read_tensor(dir / "crop.abst");
  REQUIRE(got.shape() == want.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < got.f32().size(); ++i) {
    worst = std::max(worst, static_cast<double>(std::fabs(got.f32()[i] - want.f32()[i])));
  }
  CHECK(worst <= 2e-3);
}

TEST_CASE("encoder input spec validation") {
  EncoderInputSpec spec;
  spec.input_size = 30;
  spec.patch_size = 8;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.input_size = 32;
  CHECK_NOTHROW(spec.validate());
  spec.std[1] = 0.0f;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}
