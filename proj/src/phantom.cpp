#include "octlc/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "octlc/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace octlc {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kSurfaceBaseMin = 6.0;
constexpr double kSurfaceBaseMax = 16.0;
constexpr int kMaxSurfaceRow = 20;
// Rows the band-contrast checks look at below the BM line.
constexpr int kBelowMargin = 8;

// Stream tags for substream derivation.
constexpr std::uint64_t kLesionTag = 0x4c;
constexpr std::uint64_t kImageTag = 0x49;

}  // namespace

void PhantomParams::validate() const {
  if (image_height_px <= 0 || image_width_px <= 0) {
    throw ValidationError("phantom: non-positive image size");
  }
  if (epithelium_depth_min_px <= 0 ||
      epithelium_depth_max_px < epithelium_depth_min_px) {
    throw ValidationError("phantom: invalid epithelium depth range");
  }
  if (kMaxSurfaceRow + epithelium_depth_max_px + kBmThicknessPx + kBelowMargin >=
      image_height_px) {
    throw ValidationError(
        "phantom: epithelium depth range does not fit inside the image height");
  }
  if (bm_brightness < 0.0 || bm_brightness > 1.0) {
    throw ValidationError("phantom: bm_brightness outside [0, 1]");
  }
  if (bm_disruption < 0.0 || bm_disruption > 1.0) {
    throw ValidationError("phantom: bm_disruption outside [0, 1]");
  }
  if (hyperkeratosis_prob < 0.0 || hyperkeratosis_prob > 1.0) {
    throw ValidationError("phantom: hyperkeratosis_prob outside [0, 1]");
  }
  if (speckle_scale < 0.0) {
    throw ValidationError("phantom: speckle_scale must be >= 0");
  }
  if (attenuation_per_px < 0.0) {
    throw ValidationError("phantom: attenuation_per_px must be >= 0");
  }
  if (images_per_lesion <= 0) {
    throw ValidationError("phantom: images_per_lesion must be positive");
  }
}

LesionMorphology sample_morphology(LesionLabel label, const PhantomParams& params,
                                   Rng& rng) {
  params.validate();
  LesionMorphology m;
  m.surface_base = rng.uniform(kSurfaceBaseMin, kSurfaceBaseMax);
  m.surface_amp = rng.uniform(0.5, 2.5);
  m.surface_freq = rng.uniform(1.0, 3.0);
  m.surface_phase = rng.uniform(0.0, 2.0 * kPi);

  const double lo = params.epithelium_depth_min_px;
  const double hi = params.epithelium_depth_max_px;
  m.epi_base = rng.uniform(lo, hi);
  m.epi_amp = rng.uniform(0.5, std::min(4.0, 0.5 * (hi - lo) + 0.5));
  m.epi_freq = rng.uniform(0.8, 2.5);
  m.epi_phase = rng.uniform(0.0, 2.0 * kPi);

  m.has_hyperkeratosis = rng.bernoulli(params.hyperkeratosis_prob);
  m.hk_thickness = static_cast<int>(rng.uniform_int(10, 14));

  m.air_level = 8.0;
  m.hk_level = rng.uniform(198.0, 212.0);
  m.epi_level = rng.uniform(70.0, 80.0);
  m.lp_level = rng.uniform(107.0, 123.0);

  m.invasive = (label == LesionLabel::kInvasive);
  if (m.invasive) {
    if (params.bm_disruption <= 0.0) {
      throw ValidationError(
          "phantom: invasive lesions require bm_disruption > 0");
    }
    m.disruption_len = static_cast<int>(
        std::lround(params.bm_disruption * params.image_width_px));
    m.disruption_len = std::clamp(m.disruption_len, 1, params.image_width_px);
    m.disruption_start = static_cast<int>(
        rng.uniform_int(0, params.image_width_px - m.disruption_len));
  }
  return m;
}

PhantomImage render_image(const LesionMorphology& morph, const PhantomParams& params,
                          Rng& rng) {
  params.validate();
  const int h = params.image_height_px;
  const int w = params.image_width_px;

  // Per-image variation: small global brightness factor and vertical shift.
  const double brightness = rng.uniform(0.97, 1.03);
  const int shift = static_cast<int>(rng.uniform_int(-2, 2));

  FloatImage img = FloatImage::zeros(h, w);
  PhantomImage out;
  out.true_bm_rows.assign(w, PhantomImage::kBmAbsent);

  const double bm_value =
      std::min(255.0, morph.lp_level + params.bm_brightness * 255.0);

  for (int c = 0; c < w; ++c) {
    const double x = static_cast<double>(c) / w;
    double surface_f = morph.surface_base + shift +
                       morph.surface_amp *
                           std::sin(2.0 * kPi * morph.surface_freq * x +
                                    morph.surface_phase);
    int surface = std::clamp(static_cast<int>(std::lround(surface_f)), 2,
                             kMaxSurfaceRow);
    double depth_f = morph.epi_base +
                     morph.epi_amp * std::sin(2.0 * kPi * morph.epi_freq * x +
                                              morph.epi_phase);
    const int depth = std::clamp(static_cast<int>(std::lround(depth_f)),
                                 params.epithelium_depth_min_px,
                                 params.epithelium_depth_max_px);
    const int bm_top = surface + depth;
    const bool disrupted =
        morph.invasive && c >= morph.disruption_start &&
        c < morph.disruption_start + morph.disruption_len;

    const int hk_end =
        morph.has_hyperkeratosis ? surface + morph.hk_thickness : surface;

    for (int r = 0; r < h; ++r) {
      double v;
      if (r < surface) {
        v = morph.air_level;
      } else if (r < hk_end) {
        v = morph.hk_level;
      } else if (disrupted) {
        // No clear border: epithelium blends into the lamina propria over
        // a ramp centered on where the BM line would have been.
        const int ramp_lo = bm_top - 4;
        const int ramp_hi = bm_top + 6;
        if (r < ramp_lo) {
          v = morph.epi_level;
        } else if (r >= ramp_hi) {
          v = morph.lp_level;
        } else {
          const double t = static_cast<double>(r - ramp_lo) / (ramp_hi - ramp_lo);
          v = morph.epi_level + t * (morph.lp_level - morph.epi_level);
        }
      } else if (r < bm_top) {
        v = morph.epi_level;
      } else if (r < bm_top + kBmThicknessPx) {
        v = bm_value;
      } else {
        v = morph.lp_level;
      }

      if (r >= surface && params.attenuation_per_px > 0.0) {
        v *= std::exp(-params.attenuation_per_px * (r - surface));
      }
      img.at(r, c) = static_cast<float>(v);
    }
    if (!disrupted) out.true_bm_rows[c] = bm_top;
  }

  // Unit-mean multiplicative speckle: Gamma(k, 1/k) with k = 1/scale^2.
  if (params.speckle_scale > 0.0) {
    const double k = 1.0 / (params.speckle_scale * params.speckle_scale);
    for (auto& p : img.pixels) {
      p = static_cast<float>(p * (rng.gamma(k) / k));
    }
  }

  for (auto& p : img.pixels) p = static_cast<float>(p * brightness);

  out.pixels = quantize_u8(img);
  return out;
}

PhantomImage generate_image(LesionLabel label, const PhantomParams& params, Rng& rng) {
  const LesionMorphology morph = sample_morphology(label, params, rng);
  return render_image(morph, params, rng);
}

namespace {

json params_to_json(const PhantomParams& p) {
  return json{{"image_height_px", p.image_height_px},
              {"image_width_px", p.image_width_px},
              {"epithelium_depth_min_px", p.epithelium_depth_min_px},
              {"epithelium_depth_max_px", p.epithelium_depth_max_px},
              {"bm_brightness", p.bm_brightness},
              {"bm_disruption", p.bm_disruption},
              {"hyperkeratosis_prob", p.hyperkeratosis_prob},
              {"speckle_scale", p.speckle_scale},
              {"attenuation_per_px", p.attenuation_per_px},
              {"images_per_lesion", p.images_per_lesion},
              {"seed", p.seed}};
}

}  // namespace

DatasetManifest generate_dataset(const PhantomParams& params, int n_benign,
                                 int n_invasive, const std::string& out_dir) {
  params.validate();
  if (n_benign <= 0 || n_invasive <= 0) {
    throw ValidationError("phantom: lesion counts must both be positive");
  }

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  if (ec) throw IoError("phantom: cannot create output directory: " + out_dir);

  DatasetManifest manifest;
  manifest.root_dir = out_dir;

  const int total = n_benign + n_invasive;
  for (int li = 0; li < total; ++li) {
    const LesionLabel label =
        li < n_benign ? LesionLabel::kBenign : LesionLabel::kInvasive;
    char lesion_id[16];
    std::snprintf(lesion_id, sizeof(lesion_id), "L%03d", li + 1);

    Rng lesion_rng(derive_seed(params.seed, {kLesionTag, static_cast<std::uint64_t>(li)}));
    const LesionMorphology morph = sample_morphology(label, params, lesion_rng);

    LesionRecord rec;
    rec.lesion_id = lesion_id;
    rec.label = label;
    rec.site = "phantom";
    for (int ii = 0; ii < params.images_per_lesion; ++ii) {
      Rng image_rng(derive_seed(
          params.seed, {kImageTag, static_cast<std::uint64_t>(li),
                        static_cast<std::uint64_t>(ii)}));
      const PhantomImage img = render_image(morph, params, image_rng);

      char rel[48];
      std::snprintf(rel, sizeof(rel), "images/%s_%02d.pgm", lesion_id, ii);
      write_pgm(img.pixels, (fs::path(out_dir) / rel).string());

      ImageRef ref;
      ref.image_id = rel;
      ref.path = rel;
      ref.height_px = params.image_height_px;
      ref.width_px = params.image_width_px;
      rec.images.push_back(std::move(ref));
    }
    manifest.lesions.push_back(std::move(rec));
  }
  manifest.finalize();

  save_manifest(manifest, (fs::path(out_dir) / "manifest.csv").string());

  json sidecar;
  sidecar["params"] = params_to_json(params);
  sidecar["n_benign"] = n_benign;
  sidecar["n_invasive"] = n_invasive;
  sidecar["generator"] = "octlc-phantom-v1";
  std::ofstream side((fs::path(out_dir) / "phantom_params.json").string(),
                     std::ios::trunc);
  if (!side) throw IoError("phantom: cannot write provenance sidecar");
  side << sidecar.dump(2) << "\n";

  return manifest;
}

}  // namespace octlc
