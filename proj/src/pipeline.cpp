#include "octlc/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "octlc/error.hpp"

namespace octlc {

void PreprocessSpec::validate() const {
  if (target_height_px <= 0 || target_width_px <= 0) {
    throw ValidationError("preprocess: non-positive target size");
  }
  for (double s : stddev) {
    if (!(s > 0.0)) throw ValidationError("preprocess: stddev must be positive");
  }
}

void AugmentSpec::validate() const {
  if (hflip_prob < 0.0 || hflip_prob > 1.0) {
    throw ValidationError("augment: hflip_prob outside [0, 1]");
  }
  for (double d : {brightness_delta, contrast_delta, saturation_delta}) {
    if (d < 0.0 || d >= 1.0) {
      throw ValidationError("augment: jitter deltas must lie in [0, 1)");
    }
  }
}

FloatImage resize_bilinear(const FloatImage& image, int out_h, int out_w) {
  if (image.height < 1 || image.width < 1) {
    throw ValidationError("resize: empty input image");
  }
  if (out_h <= 0 || out_w <= 0) {
    throw ValidationError("resize: non-positive target dimensions");
  }
  FloatImage out = FloatImage::zeros(out_h, out_w);
  const double scale_r = static_cast<double>(image.height) / out_h;
  const double scale_c = static_cast<double>(image.width) / out_w;

  // Precompute the column taps once; rows reuse them.
  std::vector<int> c0(out_w), c1(out_w);
  std::vector<double> cw(out_w);  // weight of c1
  for (int c = 0; c < out_w; ++c) {
    const double src = (c + 0.5) * scale_c - 0.5;
    const double f = std::floor(src);
    int lo = static_cast<int>(f);
    double w = src - f;
    int hi = lo + 1;
    lo = std::clamp(lo, 0, image.width - 1);
    hi = std::clamp(hi, 0, image.width - 1);
    c0[c] = lo;
    c1[c] = hi;
    cw[c] = w;
  }

  for (int r = 0; r < out_h; ++r) {
    const double src = (r + 0.5) * scale_r - 0.5;
    const double f = std::floor(src);
    int lo = static_cast<int>(f);
    const double w = src - f;
    int hi = lo + 1;
    lo = std::clamp(lo, 0, image.height - 1);
    hi = std::clamp(hi, 0, image.height - 1);
    for (int c = 0; c < out_w; ++c) {
      const double top = (1.0 - cw[c]) * image.at(lo, c0[c]) + cw[c] * image.at(lo, c1[c]);
      const double bot = (1.0 - cw[c]) * image.at(hi, c0[c]) + cw[c] * image.at(hi, c1[c]);
      out.at(r, c) = static_cast<float>((1.0 - w) * top + w * bot);
    }
  }
  return out;
}

FloatImage hflip(const FloatImage& image) {
  FloatImage out = FloatImage::zeros(image.height, image.width);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      out.at(r, c) = image.at(r, image.width - 1 - c);
    }
  }
  return out;
}

std::vector<FloatImage> apply_photometric(const std::vector<FloatImage>& channels,
                                          double brightness, double contrast,
                                          double saturation) {
  if (channels.empty()) throw ValidationError("photometric: no channels");
  const int h = channels[0].height;
  const int w = channels[0].width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<FloatImage> out(channels.size());
  for (std::size_t ch = 0; ch < channels.size(); ++ch) {
    out[ch] = channels[ch];
  }
  // Factors of exactly 1 are skipped so identity augmentation is bit-exact.
  const bool any_change = brightness != 1.0 || contrast != 1.0 ||
                          (saturation != 1.0 && out.size() > 1);
  if (!any_change) return out;

  // Brightness, then contrast about the per-channel mean.
  for (auto& plane : out) {
    if (brightness != 1.0) {
      for (auto& p : plane.pixels) p = static_cast<float>(p * brightness);
    }
    if (contrast != 1.0) {
      double sum = 0.0;
      for (const auto& p : plane.pixels) sum += p;
      const double mu = sum / static_cast<double>(n);
      for (auto& p : plane.pixels) {
        p = static_cast<float>(mu + contrast * (p - mu));
      }
    }
  }

  // Saturation about the per-pixel channel mean; inert for one channel.
  if (out.size() > 1 && saturation != 1.0) {
    for (std::size_t i = 0; i < n; ++i) {
      double m = 0.0;
      for (const auto& plane : out) m += plane.pixels[i];
      m /= static_cast<double>(out.size());
      for (auto& plane : out) {
        plane.pixels[i] = static_cast<float>(m + saturation * (plane.pixels[i] - m));
      }
    }
  }

  for (auto& plane : out) {
    for (auto& p : plane.pixels) p = std::clamp(p, 0.0f, 255.0f);
  }
  return out;
}

FloatImage photometric_jitter(const FloatImage& image, const AugmentSpec& spec,
                              Rng& rng) {
  spec.validate();
  const double b = rng.uniform(1.0 - spec.brightness_delta, 1.0 + spec.brightness_delta);
  const double c = rng.uniform(1.0 - spec.contrast_delta, 1.0 + spec.contrast_delta);
  const double s = rng.uniform(1.0 - spec.saturation_delta, 1.0 + spec.saturation_delta);
  return apply_photometric({image}, b, c, s)[0];
}

FloatImage augment(const FloatImage& image, const AugmentSpec& spec, Rng& rng) {
  if (!spec.enabled) return image;
  spec.validate();
  FloatImage out = rng.bernoulli(spec.hflip_prob) ? hflip(image) : image;
  return photometric_jitter(out, spec, rng);
}

Chw preprocess(const FloatImage& image, const PreprocessSpec& spec) {
  spec.validate();
  if (image.height < 1 || image.width < 1) {
    throw ValidationError("preprocess: empty input image");
  }
  const FloatImage resized =
      resize_bilinear(image, spec.target_height_px, spec.target_width_px);

  Chw out;
  out.channels = 3;
  out.height = spec.target_height_px;
  out.width = spec.target_width_px;
  out.data.resize(3 * resized.pixels.size());
  for (int ch = 0; ch < 3; ++ch) {
    const double mean = spec.mean[ch];
    const double inv_std = 1.0 / spec.stddev[ch];
    float* dst = out.data.data() + static_cast<std::size_t>(ch) * resized.pixels.size();
    for (std::size_t i = 0; i < resized.pixels.size(); ++i) {
      dst[i] = static_cast<float>((resized.pixels[i] / 255.0 - mean) * inv_std);
    }
  }
  return out;
}

void compute_dataset_stats(const std::vector<const FloatImage*>& images,
                           PreprocessSpec& spec) {
  if (images.empty()) {
    throw ValidationError("dataset stats: no images given");
  }
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (const FloatImage* img : images) {
    const FloatImage resized =
        resize_bilinear(*img, spec.target_height_px, spec.target_width_px);
    for (float p : resized.pixels) {
      const double v = p / 255.0;
      sum += v;
      sum_sq += v * v;
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  double var = sum_sq / static_cast<double>(n) - mean * mean;
  if (var < 1e-12) var = 1e-12;  // constant datasets still normalize finitely
  const double stddev = std::sqrt(var);
  spec.mean = {mean, mean, mean};
  spec.stddev = {stddev, stddev, stddev};
}

}  // namespace octlc
