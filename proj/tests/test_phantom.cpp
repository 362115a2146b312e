#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "octlc/error.hpp"
#include "octlc/phantom.hpp"
#include "testutil.hpp"

using namespace octlc;
using testutil::TempDir;

namespace {

// Band-contrast oracle around the recorded BM rows: the line must stand
// out against the 5-row bands above and below it by the construction
// margin. Used only on noiseless images.
double bm_band_margin(const PhantomImage& img) {
  const GrayImage& px = img.pixels;
  double margin_sum = 0.0;
  int cols = 0;
  for (int c = 0; c < px.width; ++c) {
    const int bm = img.true_bm_rows[static_cast<std::size_t>(c)];
    if (bm == PhantomImage::kBmAbsent) continue;
    double above = 0.0, below = 0.0;
    for (int d = 1; d <= 5; ++d) {
      above += px.at(bm - d, c);
      below += px.at(bm + kBmThicknessPx - 1 + d, c);
    }
    margin_sum += px.at(bm, c) - 0.5 * (above / 5.0 + below / 5.0);
    ++cols;
  }
  REQUIRE(cols > 0);
  return margin_sum / cols;
}

// Hand-written detector: a thin bright line scores high on the minimum of
// the upward and downward contrasts at distance d; thick bands and layer
// steps do not. The line meanders, so each column contributes its best
// row and the score is the column average.
double line_score(const GrayImage& px) {
  constexpr int kDist = 5;
  double sum = 0.0;
  for (int c = 0; c < px.width; ++c) {
    double best = 0.0;
    for (int r = kDist; r < px.height - kDist; ++r) {
      const double up = static_cast<double>(px.at(r, c)) - px.at(r - kDist, c);
      const double down = static_cast<double>(px.at(r, c)) - px.at(r + kDist, c);
      best = std::max(best, std::min(up, down));
    }
    sum += best;
  }
  return sum / px.width;
}

bool detector_says_benign(const GrayImage& px) { return line_score(px) >= 60.0; }

}  // namespace

TEST_CASE("phantom parameters are validated") {
  PhantomParams p;
  SUBCASE("depth range outside the image") {
    p.epithelium_depth_max_px = 300;
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
  SUBCASE("negative speckle") {
    p.speckle_scale = -0.1;
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
  SUBCASE("brightness outside [0,1]") {
    p.bm_brightness = 1.2;
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
  SUBCASE("zero images per lesion") {
    p.images_per_lesion = 0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
  SUBCASE("invasive lesions need disruption") {
    p.bm_disruption = 0.0;
    Rng rng(1);
    CHECK_THROWS_AS(generate_image(LesionLabel::kInvasive, p, rng),
                    ValidationError);
  }
}

TEST_CASE("benign noiseless images carry a bright line at the recorded rows") {
  PhantomParams p;
  p.bm_brightness = 0.8;
  p.speckle_scale = 0.0;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Rng rng(seed);
    const PhantomImage img = generate_image(LesionLabel::kBenign, p, rng);
    for (int c = 0; c < img.pixels.width; ++c) {
      CHECK(img.true_bm_rows[static_cast<std::size_t>(c)] != PhantomImage::kBmAbsent);
    }
    CHECK(bm_band_margin(img) >= 0.5 * p.bm_brightness * 255.0);
  }
}

TEST_CASE("all effects disabled leaves a monotone step profile per column") {
  PhantomParams p;
  p.bm_brightness = 0.0;
  p.speckle_scale = 0.0;
  p.attenuation_per_px = 0.0;
  p.hyperkeratosis_prob = 0.0;
  Rng rng(4);
  const PhantomImage img = generate_image(LesionLabel::kBenign, p, rng);
  for (int c = 0; c < img.pixels.width; ++c) {
    std::set<int> levels;
    int changes = 0;
    for (int r = 0; r < img.pixels.height; ++r) {
      levels.insert(img.pixels.at(r, c));
      if (r > 0 && img.pixels.at(r, c) != img.pixels.at(r - 1, c)) {
        ++changes;
        CHECK(img.pixels.at(r, c) > img.pixels.at(r - 1, c));
      }
    }
    CHECK(levels.size() <= 3);
    CHECK(changes <= 2);
  }
}

TEST_CASE("fully disrupted invasive images have no recorded or visible line") {
  PhantomParams p;
  p.bm_brightness = 0.8;
  p.bm_disruption = 1.0;
  p.speckle_scale = 0.0;
  p.hyperkeratosis_prob = 0.0;
  Rng rng(5);
  const PhantomImage img = generate_image(LesionLabel::kInvasive, p, rng);
  for (int c = 0; c < img.pixels.width; ++c) {
    CHECK(img.true_bm_rows[static_cast<std::size_t>(c)] == PhantomImage::kBmAbsent);
  }
  CHECK(line_score(img.pixels) < 0.5 * p.bm_brightness * 255.0);
}

TEST_CASE("generation is deterministic in the stream") {
  PhantomParams p;
  Rng a(42), b(42);
  const PhantomImage img_a = generate_image(LesionLabel::kInvasive, p, a);
  const PhantomImage img_b = generate_image(LesionLabel::kInvasive, p, b);
  CHECK(img_a.pixels.pixels == img_b.pixels.pixels);
  CHECK(img_a.true_bm_rows == img_b.true_bm_rows);
}

TEST_CASE("images of one lesion share morphology but differ in realization") {
  PhantomParams p;
  Rng morph_rng(9);
  const LesionMorphology morph = sample_morphology(LesionLabel::kBenign, p, morph_rng);
  Rng r1(100), r2(101);
  const PhantomImage img1 = render_image(morph, p, r1);
  const PhantomImage img2 = render_image(morph, p, r2);
  CHECK(img1.pixels.pixels != img2.pixels.pixels);
  // Same morphology: recorded BM rows differ only by the per-image shift.
  int max_diff = 0;
  for (std::size_t c = 0; c < img1.true_bm_rows.size(); ++c) {
    max_diff = std::max(max_diff,
                        std::abs(img1.true_bm_rows[c] - img2.true_bm_rows[c]));
  }
  CHECK(max_diff <= 4);
}

TEST_CASE("generate_dataset writes a loadable, correctly composed dataset") {
  TempDir dir("phantom-ds");
  PhantomParams p;
  p.images_per_lesion = 2;
  p.seed = 11;
  const DatasetManifest manifest = generate_dataset(p, 3, 2, dir.str());

  CHECK(manifest.lesion_count(LesionLabel::kBenign) == 3);
  CHECK(manifest.lesion_count(LesionLabel::kInvasive) == 2);
  CHECK(manifest.total_images() == 10);

  const DatasetManifest reloaded =
      load_manifest(dir.file("manifest.csv"));
  CHECK(reloaded.lesions == manifest.lesions);
  CHECK(reloaded.lesions[0].images[0].height_px == p.image_height_px);
  CHECK(std::filesystem::exists(dir.file("phantom_params.json")));
}

TEST_CASE("generate_dataset rejects zero counts and bad directories") {
  PhantomParams p;
  CHECK_THROWS_AS(generate_dataset(p, 0, 1, "/tmp/octlc-zero"), ValidationError);
  CHECK_THROWS_AS(generate_dataset(p, 1, 0, "/tmp/octlc-zero"), ValidationError);
  CHECK_THROWS_AS(generate_dataset(p, 1, 1, "/proc/definitely/not/writable"),
                  IoError);
}

TEST_CASE("regeneration with one seed is byte identical") {
  TempDir a("phantom-a"), b("phantom-b");
  PhantomParams p;
  p.images_per_lesion = 2;
  p.seed = 21;
  generate_dataset(p, 2, 1, a.str());
  generate_dataset(p, 2, 1, b.str());

  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    std::ifstream fa(entry.path(), std::ios::binary);
    std::ifstream fb(b.path() / rel, std::ios::binary);
    REQUIRE(fb.good());
    const std::string ca((std::istreambuf_iterator<char>(fa)),
                         std::istreambuf_iterator<char>());
    const std::string cb((std::istreambuf_iterator<char>(fb)),
                         std::istreambuf_iterator<char>());
    CHECK(ca == cb);
  }
}

TEST_CASE("emitted images always have the configured dimensions") {
  PhantomParams p;
  p.image_height_px = 100;
  p.image_width_px = 120;
  p.epithelium_depth_min_px = 30;
  p.epithelium_depth_max_px = 55;
  Rng rng(31);
  const PhantomImage img = generate_image(LesionLabel::kBenign, p, rng);
  CHECK(img.pixels.height == 100);
  CHECK(img.pixels.width == 120);
  CHECK(img.true_bm_rows.size() == 120);
}

TEST_CASE("separability degrades as the line contrast vanishes") {
  PhantomParams p;
  p.speckle_scale = 0.0;
  p.bm_disruption = 0.7;
  constexpr int kBenign = 30;
  constexpr int kInvasive = 10;

  auto accuracy_at = [&](double brightness) {
    PhantomParams params = p;
    params.bm_brightness = brightness;
    int correct = 0;
    for (int i = 0; i < kBenign; ++i) {
      Rng rng(derive_seed(1000, {static_cast<std::uint64_t>(i)}));
      const PhantomImage img = generate_image(LesionLabel::kBenign, params, rng);
      if (detector_says_benign(img.pixels)) ++correct;
    }
    for (int i = 0; i < kInvasive; ++i) {
      Rng rng(derive_seed(2000, {static_cast<std::uint64_t>(i)}));
      const PhantomImage img = generate_image(LesionLabel::kInvasive, params, rng);
      if (!detector_says_benign(img.pixels)) ++correct;
    }
    return static_cast<double>(correct) / (kBenign + kInvasive);
  };

  const double acc_high = accuracy_at(0.9);
  const double acc_mid = accuracy_at(0.5);
  const double acc_low = accuracy_at(0.05);
  CHECK(acc_high == 1.0);
  CHECK(acc_mid == 1.0);
  CHECK(acc_low <= 0.6);       // toward chance
  CHECK(acc_low < acc_mid);    // monotone degradation
}
