#include "octlc/image_io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "octlc/error.hpp"

namespace octlc {

GrayImage GrayImage::filled(int height, int width, std::uint8_t value) {
  GrayImage img;
  img.height = height;
  img.width = width;
  img.pixels.assign(static_cast<std::size_t>(height) * width, value);
  return img;
}

FloatImage FloatImage::zeros(int height, int width) {
  FloatImage img;
  img.height = height;
  img.width = width;
  img.pixels.assign(static_cast<std::size_t>(height) * width, 0.0f);
  return img;
}

GrayImage quantize_u8(const FloatImage& img) {
  GrayImage out;
  out.height = img.height;
  out.width = img.width;
  out.pixels.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = std::round(img.pixels[i]);
    out.pixels[i] = static_cast<std::uint8_t>(v < 0.0f ? 0.0f : (v > 255.0f ? 255.0f : v));
  }
  return out;
}

FloatImage to_float(const GrayImage& img) {
  FloatImage out;
  out.height = img.height;
  out.width = img.width;
  out.pixels.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    out.pixels[i] = static_cast<float>(img.pixels[i]);
  }
  return out;
}

namespace {

// Reads the P5 header tokens, skipping whitespace and '#' comment lines.
// Leaves the stream positioned at the first pixel byte.
void parse_pgm_header(std::istream& in, const std::string& path, int& height,
                      int& width) {
  auto next_token = [&in, &path]() -> std::string {
    std::string tok;
    int ch = in.get();
    while (ch != EOF) {
      if (ch == '#') {
        while (ch != EOF && ch != '\n') ch = in.get();
      } else if (std::isspace(ch)) {
        if (!tok.empty()) {
          in.unget();
          return tok;
        }
      } else {
        tok.push_back(static_cast<char>(ch));
      }
      ch = in.get();
    }
    if (tok.empty()) throw IoError("pgm: truncated header in " + path);
    return tok;
  };

  const std::string magic = next_token();
  if (magic != "P5") throw IoError("pgm: not a binary PGM (P5) file: " + path);
  width = std::stoi(next_token());
  height = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (width <= 0 || height <= 0) {
    throw IoError("pgm: non-positive dimensions in " + path);
  }
  if (maxval != 255) {
    throw IoError("pgm: only maxval 255 is supported, got " +
                  std::to_string(maxval) + " in " + path);
  }
  // Exactly one whitespace byte separates the header from the raster.
  in.get();
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pgm: cannot open " + path);
  GrayImage img;
  parse_pgm_header(in, path, img.height, img.width);
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw IoError("pgm: truncated pixel data in " + path);
  }
  return img;
}

void write_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("pgm: cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("pgm: write failed for " + path);
}

void read_pgm_dims(const std::string& path, int& height, int& width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pgm: cannot open " + path);
  parse_pgm_header(in, path, height, width);
}

}  // namespace octlc
