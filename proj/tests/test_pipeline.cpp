#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "octlc/error.hpp"
#include "octlc/pipeline.hpp"
#include "octlc/rng.hpp"

using namespace octlc;

namespace {

FloatImage image_from(std::initializer_list<std::initializer_list<float>> rows) {
  FloatImage img = FloatImage::zeros(static_cast<int>(rows.size()),
                                     static_cast<int>(rows.begin()->size()));
  int r = 0;
  for (const auto& row : rows) {
    int c = 0;
    for (float v : row) img.at(r, c++) = v;
    ++r;
  }
  return img;
}

FloatImage random_image(Rng& rng, int h, int w) {
  FloatImage img = FloatImage::zeros(h, w);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform(0.0, 255.0));
  return img;
}

}  // namespace

TEST_CASE("resize keeps constant images constant at any size") {
  const FloatImage one = image_from({{42.0f}});
  for (const auto [h, w] : {std::pair{1, 1}, {3, 5}, {7, 2}, {224, 224}}) {
    const FloatImage out = resize_bilinear(one, h, w);
    CHECK(out.height == h);
    CHECK(out.width == w);
    for (float p : out.pixels) CHECK(p == 42.0f);
  }
  Rng rng(11);
  for (int i = 0; i < 5; ++i) {
    const float v = static_cast<float>(rng.uniform(0.0, 255.0));
    FloatImage img = FloatImage::zeros(4, 9);
    for (auto& p : img.pixels) p = v;
    const FloatImage out = resize_bilinear(img, 13, 3);
    for (float p : out.pixels) CHECK(p == v);
  }
}

TEST_CASE("2x2 to 4x4 matches the half-pixel bilinear grid exactly") {
  const FloatImage in = image_from({{0.0f, 100.0f}, {100.0f, 200.0f}});
  const FloatImage out = resize_bilinear(in, 4, 4);
  const float expected[4][4] = {{0, 25, 75, 100},
                                {25, 50, 100, 125},
                                {75, 100, 150, 175},
                                {100, 125, 175, 200}};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      CHECK(out.at(r, c) == expected[r][c]);
    }
  }
}

TEST_CASE("resize output stays within the input intensity range") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const FloatImage img = random_image(rng, 1 + trial, 3 + 2 * trial);
    const auto [lo, hi] =
        std::minmax_element(img.pixels.begin(), img.pixels.end());
    const FloatImage out = resize_bilinear(img, 17, 9);
    for (float p : out.pixels) {
      CHECK(p >= *lo);
      CHECK(p <= *hi);
    }
  }
}

TEST_CASE("resize resizes the native scan size to the model input size") {
  Rng rng(5);
  const FloatImage img = random_image(rng, 180, 260);
  const FloatImage out = resize_bilinear(img, 224, 224);
  CHECK(out.height == 224);
  CHECK(out.width == 224);
}

TEST_CASE("resize rejects bad dimensions") {
  const FloatImage img = image_from({{1.0f}});
  CHECK_THROWS_AS(resize_bilinear(img, 0, 4), ValidationError);
  CHECK_THROWS_AS(resize_bilinear(img, 4, -1), ValidationError);
  CHECK_THROWS_AS(resize_bilinear(FloatImage{}, 4, 4), ValidationError);
}

TEST_CASE("hflip reverses columns and is an involution") {
  const FloatImage in = image_from({{1.0f, 2.0f, 3.0f}});
  const FloatImage flipped = hflip(in);
  CHECK(flipped.at(0, 0) == 3.0f);
  CHECK(flipped.at(0, 1) == 2.0f);
  CHECK(flipped.at(0, 2) == 1.0f);

  Rng rng(7);
  const FloatImage img = random_image(rng, 5, 8);
  const FloatImage twice = hflip(hflip(img));
  CHECK(twice.pixels == img.pixels);

  const FloatImage symmetric = image_from({{1.0f, 2.0f, 1.0f}, {4.0f, 5.0f, 4.0f}});
  CHECK(hflip(symmetric).pixels == symmetric.pixels);
}

TEST_CASE("photometric factors of one are the exact identity") {
  Rng rng(13);
  const FloatImage img = random_image(rng, 6, 6);
  const auto out = apply_photometric({img}, 1.0, 1.0, 1.0);
  CHECK(out[0].pixels == img.pixels);

  AugmentSpec spec;
  spec.brightness_delta = 0.0;
  spec.contrast_delta = 0.0;
  spec.saturation_delta = 0.0;
  Rng jitter_rng(1);
  const FloatImage jittered = photometric_jitter(img, spec, jitter_rng);
  CHECK(jittered.pixels == img.pixels);
}

TEST_CASE("brightness factor scales pixels directly") {
  const FloatImage img = image_from({{100.0f}});
  const auto out = apply_photometric({img}, 1.2, 1.0, 1.0);
  CHECK(out[0].at(0, 0) == doctest::Approx(120.0).epsilon(1e-6));
}

TEST_CASE("contrast factor moves pixels about the mean") {
  const FloatImage img = image_from({{100.0f, 200.0f}});
  // mean 150; c = 0.5 -> 125, 175
  const auto out = apply_photometric({img}, 1.0, 0.5, 1.0);
  CHECK(out[0].at(0, 0) == doctest::Approx(125.0));
  CHECK(out[0].at(0, 1) == doctest::Approx(175.0));
}

TEST_CASE("saturation is inert on replicated grayscale") {
  Rng rng(17);
  const FloatImage img = random_image(rng, 5, 4);
  const std::vector<FloatImage> replicated{img, img, img};
  const auto out = apply_photometric(replicated, 1.0, 1.0, 1.37);
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(out[ch].pixels == img.pixels);
  }
}

TEST_CASE("photometric output is clamped to [0, 255]") {
  const FloatImage img = image_from({{250.0f, 5.0f}});
  const auto bright = apply_photometric({img}, 1.5, 1.0, 1.0);
  CHECK(bright[0].at(0, 0) == 255.0f);
  const auto dark = apply_photometric({img}, 0.0, 1.0, 1.0);
  CHECK(dark[0].at(0, 1) == 0.0f);
}

TEST_CASE("jitter is deterministic given the rng state") {
  Rng img_rng(19);
  const FloatImage img = random_image(img_rng, 8, 8);
  AugmentSpec spec;
  Rng a(123), b(123), c(124);
  const FloatImage out_a = photometric_jitter(img, spec, a);
  const FloatImage out_b = photometric_jitter(img, spec, b);
  CHECK(out_a.pixels == out_b.pixels);
  const FloatImage out_c = photometric_jitter(img, spec, c);
  CHECK(out_a.pixels != out_c.pixels);
}

TEST_CASE("augment with enabled=false is the identity and draws nothing") {
  Rng img_rng(23);
  const FloatImage img = random_image(img_rng, 8, 8);
  AugmentSpec spec;
  spec.enabled = false;
  Rng rng(55);
  const FloatImage out = augment(img, spec, rng);
  CHECK(out.pixels == img.pixels);
  Rng untouched(55);
  CHECK(rng.next_u64() == untouched.next_u64());
}

TEST_CASE("augment spec validation") {
  AugmentSpec spec;
  spec.brightness_delta = 1.0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec.brightness_delta = 0.2;
  spec.hflip_prob = 1.5;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("preprocess standardizes with forced dataset stats") {
  PreprocessSpec spec;
  spec.normalization = Normalization::kDatasetStats;
  spec.mean = {0.0, 0.0, 0.0};
  spec.stddev = {1.0, 1.0, 1.0};
  const FloatImage zero = FloatImage::zeros(10, 12);
  const Chw out = preprocess(zero, spec);
  CHECK(out.channels == 3);
  CHECK(out.height == 224);
  CHECK(out.width == 224);
  for (float v : out.data) CHECK(v == 0.0f);
}

TEST_CASE("preprocess applies the published backbone statistics") {
  PreprocessSpec spec;  // defaults to pretrained statistics
  FloatImage img = FloatImage::zeros(50, 50);
  for (auto& p : img.pixels) p = 128.0f;
  const Chw out = preprocess(img, spec);
  for (int ch = 0; ch < 3; ++ch) {
    const double expected =
        (128.0 / 255.0 - kPretrainedMean[ch]) / kPretrainedStd[ch];
    CHECK(out.at(ch, 0, 0) == doctest::Approx(expected).epsilon(1e-6));
    CHECK(out.at(ch, 223, 223) == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("preprocess yields the model input shape from a native scan") {
  Rng rng(29);
  const FloatImage img = random_image(rng, 180, 260);
  PreprocessSpec spec;
  const Chw out = preprocess(img, spec);
  CHECK(out.channels == 3);
  CHECK(out.height == 224);
  CHECK(out.width == 224);
  CHECK(out.data.size() == 3u * 224u * 224u);
  CHECK_THROWS_AS(preprocess(FloatImage{}, spec), ValidationError);
}

TEST_CASE("dataset statistics computed from training images") {
  PreprocessSpec spec;
  spec.normalization = Normalization::kDatasetStats;
  FloatImage a = FloatImage::zeros(16, 16);
  for (auto& p : a.pixels) p = 128.0f;
  std::vector<const FloatImage*> images{&a};
  compute_dataset_stats(images, spec);
  CHECK(spec.mean[0] == doctest::Approx(128.0 / 255.0).epsilon(1e-9));

  const Chw out = preprocess(a, spec);
  for (float v : out.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-6));
}
