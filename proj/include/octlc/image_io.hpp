#ifndef OCTLC_IMAGE_IO_HPP_
#define OCTLC_IMAGE_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace octlc {

// 8-bit single-channel image, row major. The at-rest storage format for
// dataset images is binary PGM (P5, maxval 255).
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height * width

  std::uint8_t& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const {
    return pixels[static_cast<std::size_t>(r) * width + c];
  }

  static GrayImage filled(int height, int width, std::uint8_t value);
};

// Float single-channel working image used by the generator and the
// preprocessing pipeline. Intensities are nominally in [0, 255].
struct FloatImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  float& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  float at(int r, int c) const {
    return pixels[static_cast<std::size_t>(r) * width + c];
  }

  static FloatImage zeros(int height, int width);
};

GrayImage quantize_u8(const FloatImage& img);
FloatImage to_float(const GrayImage& img);

GrayImage read_pgm(const std::string& path);
void write_pgm(const GrayImage& img, const std::string& path);

// Reads only the dimensions from a PGM header; used by manifest validation.
void read_pgm_dims(const std::string& path, int& height, int& width);

}  // namespace octlc

#endif  // OCTLC_IMAGE_IO_HPP_
