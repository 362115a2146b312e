#ifndef OCTLC_PIPELINE_HPP_
#define OCTLC_PIPELINE_HPP_

#include <array>
#include <string>
#include <vector>

#include "octlc/image_io.hpp"
#include "octlc/rng.hpp"

namespace octlc {

// CHW float grid, the model input layout.
struct Chw {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float& at(int c, int r, int col) {
    return data[(static_cast<std::size_t>(c) * height + r) * width + col];
  }
  float at(int c, int r, int col) const {
    return data[(static_cast<std::size_t>(c) * height + r) * width + col];
  }
};

enum class Normalization { kPretrainedStats, kDatasetStats };

// Deterministic preprocessing applied to every sample, training and
// validation alike: bilinear resize to the backbone input size, grayscale
// replication to 3 channels, per-channel standardization on the [0, 1]
// intensity scale.
struct PreprocessSpec {
  int target_height_px = 224;
  int target_width_px = 224;
  Normalization normalization = Normalization::kPretrainedStats;
  // Standardization statistics on [0, 1] intensities. For pretrained
  // backbones these are the published training-set constants; for
  // dataset_stats they are filled from the training images of the fold.
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};

  void validate() const;
};

// Published normalization constants the pretrained checkpoints assume.
constexpr std::array<double, 3> kPretrainedMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kPretrainedStd{0.229, 0.224, 0.225};

// Seeded stochastic augmentation; training samples only.
struct AugmentSpec {
  bool enabled = true;
  double hflip_prob = 0.5;
  double brightness_delta = 0.2;  // factor ~ U[1-d, 1+d]
  double contrast_delta = 0.2;
  double saturation_delta = 0.2;

  void validate() const;
};

// Bilinear resize with half-pixel centers and edge clamping. Output values
// never leave the [min, max] range of the input.
FloatImage resize_bilinear(const FloatImage& image, int out_h, int out_w);

// Reverses columns; an involution.
FloatImage hflip(const FloatImage& image);

// Applies fixed photometric factors: brightness (p*b), contrast
// (mu + c*(p - mu), mu the per-channel mean), saturation (per-pixel channel
// mean m: m + s*(ch - m)). Channels are the planes of `channels`; a single
// plane is the grayscale case where saturation is inert. Result clamped to
// [0, 255].
std::vector<FloatImage> apply_photometric(const std::vector<FloatImage>& channels,
                                          double brightness, double contrast,
                                          double saturation);

// Samples factors from spec and applies them. Factor sampling order is
// brightness, contrast, saturation; deterministic given rng.
FloatImage photometric_jitter(const FloatImage& image, const AugmentSpec& spec,
                              Rng& rng);

// Full training-time augmentation: seeded horizontal flip then photometric
// jitter. Identity when spec.enabled is false (consumes no rng draws).
FloatImage augment(const FloatImage& image, const AugmentSpec& spec, Rng& rng);

// resize -> replicate to 3 channels -> standardize.
Chw preprocess(const FloatImage& image, const PreprocessSpec& spec);

// Mean/stddev of [0, 1] intensities over a set of images, used to fill
// dataset_stats normalization. Images are resized to the target size first
// so the statistics match what the model actually sees.
void compute_dataset_stats(const std::vector<const FloatImage*>& images,
                           PreprocessSpec& spec);

}  // namespace octlc

#endif  // OCTLC_PIPELINE_HPP_
