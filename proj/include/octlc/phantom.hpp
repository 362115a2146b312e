#ifndef OCTLC_PHANTOM_HPP_
#define OCTLC_PHANTOM_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "octlc/dataset.hpp"
#include "octlc/image_io.hpp"
#include "octlc/rng.hpp"

namespace octlc {

// Synthetic layered-tissue B-scan generator. Images show, top to bottom:
// a dark air gap, an optional bright hyperkeratosis band, the darker
// epithelium, a thin bright basement-membrane (BM) line, and the lamina
// propria. Invasive lesions lose the BM line over a contiguous column
// interval; benign lesions keep it everywhere.
struct PhantomParams {
  int image_height_px = 180;
  int image_width_px = 260;
  int epithelium_depth_min_px = 35;
  int epithelium_depth_max_px = 60;
  double bm_brightness = 0.7;      // line contrast knob, [0, 1]
  double bm_disruption = 0.7;      // fraction of columns losing the line (invasive)
  double hyperkeratosis_prob = 0.25;
  double speckle_scale = 0.15;     // relative stddev of unit-mean speckle, >= 0
  double attenuation_per_px = 0.0015;
  int images_per_lesion = 4;
  std::uint64_t seed = 7;

  void validate() const;
};

// Rows occupied by the BM line: [row, row + kBmThicknessPx).
constexpr int kBmThicknessPx = 3;

struct PhantomImage {
  GrayImage pixels;
  // Per-column top row of the BM line; kBmAbsent where disrupted.
  std::vector<int> true_bm_rows;

  static constexpr int kBmAbsent = -1;
};

// Per-lesion morphology, drawn once per lesion so that all images of a
// lesion are correlated. Exposed so generate_dataset can reuse one draw
// across the lesion's images.
struct LesionMorphology {
  double surface_base = 0.0;
  double surface_amp = 0.0, surface_freq = 0.0, surface_phase = 0.0;
  double epi_base = 0.0;
  double epi_amp = 0.0, epi_freq = 0.0, epi_phase = 0.0;
  bool has_hyperkeratosis = false;
  int hk_thickness = 0;
  double air_level = 0.0;
  double hk_level = 0.0;
  double epi_level = 0.0;
  double lp_level = 0.0;
  bool invasive = false;
  int disruption_start = 0;  // first disrupted column
  int disruption_len = 0;
};

LesionMorphology sample_morphology(LesionLabel label, const PhantomParams& params,
                                   Rng& rng);

// Renders one B-scan of the lesion; per-image speckle, a small global
// brightness factor and a small vertical shift come from rng.
PhantomImage render_image(const LesionMorphology& morph, const PhantomParams& params,
                          Rng& rng);

// Samples a fresh morphology and renders a single image from one stream.
PhantomImage generate_image(LesionLabel label, const PhantomParams& params, Rng& rng);

// Generates n_benign + n_invasive lesions with params.images_per_lesion
// images each under out_dir (PGM files + manifest.csv + a provenance
// sidecar phantom_params.json). Fully deterministic given params.seed:
// lesion and image substreams are derived from (seed, lesion index, image
// index), so the result is independent of generation order.
DatasetManifest generate_dataset(const PhantomParams& params, int n_benign,
                                 int n_invasive, const std::string& out_dir);

}  // namespace octlc

#endif  // OCTLC_PHANTOM_HPP_
